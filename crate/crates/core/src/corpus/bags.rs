use std::collections::{BTreeSet, HashMap};

use super::{Bag, EntityId, FgetId, RelationId, Sentence};

/// A sentence mentioning an entity pair, carrying the pair's knowledge-base
/// labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceRecord {
    pub entity_i: EntityId,
    pub entity_j: EntityId,
    pub fget_i: FgetId,
    pub fget_j: FgetId,
    pub relations: Vec<RelationId>,
    pub sentence: Sentence,
}

/// Groups records into one bag per ordered entity pair. Bags are numbered in
/// order of first appearance, sentences keep input order, and the bag's
/// relations are the union of its records' labels. The FGET pair comes from
/// the first record of the pair.
pub fn build_bags(records: impl IntoIterator<Item = SentenceRecord>) -> Vec<Bag> {
    let mut slot: HashMap<(EntityId, EntityId), usize> = HashMap::new();
    let mut bags: Vec<(Bag, BTreeSet<RelationId>)> = Vec::new();
    for r in records {
        let key = (r.entity_i, r.entity_j);
        let idx = *slot.entry(key).or_insert_with(|| {
            bags.push((
                Bag {
                    bag_id: bags.len() as u64,
                    entity_i: r.entity_i,
                    entity_j: r.entity_j,
                    fget_i: r.fget_i,
                    fget_j: r.fget_j,
                    relations: Vec::new(),
                    sentences: Vec::new(),
                },
                BTreeSet::new(),
            ));
            bags.len() - 1
        });
        let (bag, rels) = &mut bags[idx];
        rels.extend(r.relations);
        bag.sentences.push(r.sentence);
    }
    bags.into_iter()
        .map(|(mut bag, rels)| {
            bag.relations = rels.into_iter().collect();
            bag
        })
        .collect()
}
