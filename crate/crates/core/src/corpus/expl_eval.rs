use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{Bag, BagId, RelationId};

/// A ground-truth ordering: within bag `bag_id`, sentence `rationale_idx`
/// supports `relation` and should outrank sentence `irrelevant_idx`, which
/// does not.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ExplEvalTuple {
    pub bag_id: BagId,
    pub relation: RelationId,
    pub rationale_idx: usize,
    pub irrelevant_idx: usize,
}

/// Enumerates every (rationale, irrelevant) sentence pair for every labeled
/// relation of every bag. Unannotated sentences take part in neither role.
pub fn build_expl_eval(bags: &[Bag]) -> Vec<ExplEvalTuple> {
    let mut out = BTreeSet::new();
    for bag in bags {
        for &k in &bag.relations {
            let annotated = bag
                .sentences
                .iter()
                .enumerate()
                .filter(|(_, s)| s.rationale_for.is_some());
            let (pos, neg): (Vec<_>, Vec<_>) = annotated.partition(|(_, s)| s.is_rationale_for(k));
            for &(r, _) in &pos {
                for &(n, _) in &neg {
                    out.insert(ExplEvalTuple {
                        bag_id: bag.bag_id,
                        relation: k,
                        rationale_idx: r,
                        irrelevant_idx: n,
                    });
                }
            }
        }
    }
    out.into_iter().collect()
}
