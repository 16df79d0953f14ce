//! Extraction accuracy (precision-recall curve and its area up to recall
//! 0.4) and explanation quality (Kendall tau over expl-eval tuples, split
//! by model confidence).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{BagId, ExplEvalTuple, RelationId};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("no positive labels among {0} predictions")]
    NoPositives(usize),
    #[error("no scores for bag {bag_id}, relation {relation}")]
    MissingScores { bag_id: BagId, relation: RelationId },
    #[error("bag {bag_id}, relation {relation}: sentence index {index} outside {len} scores")]
    ScoreIndex {
        bag_id: BagId,
        relation: RelationId,
        index: usize,
        len: usize,
    },
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// Recall up to which the curve is integrated.
pub const RECALL_CAP: f64 = 0.4;

/// One model probability for a (bag, relation) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub bag_id: BagId,
    pub relation: RelationId,
    pub score: f64,
    pub label: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    /// `(recall, precision)` at recall 0 and at every rank holding a
    /// positive.
    pub points: Vec<(f64, f64)>,
    /// Trapezoidal area over recall `[0, min(0.4, max recall)]`, times 100.
    pub auc_04: f64,
}

/// Ranks by score descending, ties broken by `(bag_id, relation)`.
pub fn rank(preds: &[ScoredPair]) -> Vec<ScoredPair> {
    let mut ranked = preds.to_vec();
    ranked.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.bag_id.cmp(&b.bag_id))
            .then(a.relation.cmp(&b.relation))
    });
    ranked
}

pub fn pr_auc(preds: &[ScoredPair]) -> Result<PrCurve> {
    let positives = preds.iter().filter(|p| p.label).count();
    if positives == 0 {
        return Err(EvalError::NoPositives(preds.len()));
    }
    let total = positives as f64;
    let mut points = Vec::with_capacity(positives + 1);
    let mut tp = 0usize;
    for (i, p) in rank(preds).iter().enumerate() {
        if p.label {
            tp += 1;
            let precision = tp as f64 / (i + 1) as f64;
            if points.is_empty() {
                points.push((0.0, precision));
            }
            points.push((tp as f64 / total, precision));
        }
    }
    let auc_04 = 100.0 * area_until(&points, RECALL_CAP);
    Ok(PrCurve { points, auc_04 })
}

fn area_until(points: &[(f64, f64)], cap: f64) -> f64 {
    let mut area = 0.0;
    for w in points.windows(2) {
        let ((r0, p0), (r1, p1)) = (w[0], w[1]);
        if r0 >= cap {
            break;
        }
        if r1 <= cap {
            area += (r1 - r0) * (p0 + p1) / 2.0;
        } else {
            let pc = p0 + (p1 - p0) * (cap - r0) / (r1 - r0);
            area += (cap - r0) * (p0 + pc) / 2.0;
            break;
        }
    }
    area
}

/// Per-sentence importance scores keyed by (bag, relation).
pub type ScoreTable = BTreeMap<(BagId, RelationId), Vec<f64>>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TauCounts {
    pub concordant: usize,
    pub discordant: usize,
    pub ties: usize,
    pub total: usize,
}

impl TauCounts {
    /// `(C - D) / T`; `None` when there are no tuples.
    pub fn tau(&self) -> Option<f64> {
        (self.total > 0)
            .then(|| (self.concordant as f64 - self.discordant as f64) / self.total as f64)
    }
}

/// Counts tuples whose rationale outscores (concordant), underscores
/// (discordant) or ties the irrelevant sentence.
pub fn kendall_tau<'a, I>(scores: &ScoreTable, tuples: I) -> Result<TauCounts>
where
    I: IntoIterator<Item = &'a ExplEvalTuple>,
{
    let mut c = TauCounts::default();
    for t in tuples {
        let s = scores
            .get(&(t.bag_id, t.relation))
            .ok_or(EvalError::MissingScores {
                bag_id: t.bag_id,
                relation: t.relation,
            })?;
        let at = |index: usize| {
            s.get(index).copied().ok_or(EvalError::ScoreIndex {
                bag_id: t.bag_id,
                relation: t.relation,
                index,
                len: s.len(),
            })
        };
        let (r, n) = (at(t.rationale_idx)?, at(t.irrelevant_idx)?);
        c.total += 1;
        if r > n {
            c.concordant += 1;
        } else if r < n {
            c.discordant += 1;
        } else {
            c.ties += 1;
        }
    }
    Ok(c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bucket {
    High,
    Low,
}

pub const HIGH_MIN: f64 = 0.76;
pub const LOW_MAX: f64 = 0.25;

/// `High` for `p ∈ [0.76, 1]`, `Low` for `p ∈ [0, 0.25]`, otherwise none.
pub fn confidence_bucket(p: f64) -> Option<Bucket> {
    if (HIGH_MIN..=1.0).contains(&p) {
        Some(Bucket::High)
    } else if (0.0..=LOW_MAX).contains(&p) {
        Some(Bucket::Low)
    } else {
        None
    }
}

/// Splits (bag, relation) pairs into the high and low confidence sets.
pub fn confidence_split(
    probabilities: &BTreeMap<(BagId, RelationId), f64>,
) -> (Vec<(BagId, RelationId)>, Vec<(BagId, RelationId)>) {
    let mut high = Vec::new();
    let mut low = Vec::new();
    for (&key, &p) in probabilities {
        match confidence_bucket(p) {
            Some(Bucket::High) => high.push(key),
            Some(Bucket::Low) => low.push(key),
            None => {}
        }
    }
    (high, low)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KendallReport {
    pub method: String,
    pub overall: TauCounts,
    pub high: TauCounts,
    pub low: TauCounts,
}

impl KendallReport {
    pub fn tau_overall(&self) -> Option<f64> {
        self.overall.tau()
    }

    pub fn tau_high(&self) -> Option<f64> {
        self.high.tau()
    }

    pub fn tau_low(&self) -> Option<f64> {
        self.low.tau()
    }
}

/// Kendall tau over all tuples and over the tuples whose (bag, relation)
/// probability falls in each confidence bucket. Tuples without a
/// probability count only toward the overall figure.
pub fn kendall_report(
    method: &str,
    scores: &ScoreTable,
    tuples: &[ExplEvalTuple],
    probabilities: &BTreeMap<(BagId, RelationId), f64>,
) -> Result<KendallReport> {
    let bucket_of = |t: &ExplEvalTuple| {
        probabilities
            .get(&(t.bag_id, t.relation))
            .and_then(|&p| confidence_bucket(p))
    };
    let in_bucket = |b: Bucket| tuples.iter().filter(move |t| bucket_of(t) == Some(b));
    Ok(KendallReport {
        method: method.to_string(),
        overall: kendall_tau(scores, tuples)?,
        high: kendall_tau(scores, in_bucket(Bucket::High))?,
        low: kendall_tau(scores, in_bucket(Bucket::Low))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair(bag_id: u64, score: f64, label: bool) -> ScoredPair {
        ScoredPair {
            bag_id,
            relation: 0,
            score,
            label,
        }
    }

    #[test]
    fn perfect_ranking_gives_forty() {
        let mut preds: Vec<_> = (0..10).map(|i| pair(i, 0.9 - i as f64 * 0.01, true)).collect();
        preds.extend((10..30).map(|i| pair(i, 0.1, false)));
        assert!((pr_auc(&preds).unwrap().auc_04 - 40.0).abs() < 1e-12);
    }

    #[test]
    fn no_positives_is_an_error() {
        assert_eq!(pr_auc(&[pair(0, 0.3, false)]), Err(EvalError::NoPositives(1)));
    }

    #[test]
    fn hand_computed_curve() {
        // ranks: +, -, +, -, (2 of 2 positives) -> points (0,1), (0.5,1), (1,2/3)
        let preds = [pair(0, 0.9, true), pair(1, 0.8, false), pair(2, 0.7, true), pair(3, 0.1, false)];
        let c = pr_auc(&preds).unwrap();
        assert_eq!(c.points, vec![(0.0, 1.0), (0.5, 1.0), (1.0, 2.0 / 3.0)]);
        assert!((c.auc_04 - 40.0).abs() < 1e-12);
        // first positive at rank 2: precision 0.5 through recall 0.4
        let preds = [pair(0, 0.9, false), pair(1, 0.8, true), pair(2, 0.7, true)];
        let c = pr_auc(&preds).unwrap();
        // (0,.5) (.5,.5) (1, 2/3)
        assert!((c.auc_04 - 20.0).abs() < 1e-12);
    }

    #[test]
    fn low_max_recall_caps_integration() {
        // one of five positives ranked first, rest never scored above negatives
        let mut preds = vec![pair(0, 1.0, true)];
        preds.extend((1..5).map(|i| pair(i, 0.5, false)));
        preds.extend((5..9).map(|i| pair(i, 0.0, true)));
        let c = pr_auc(&preds).unwrap();
        // (0,1) (0.2,1) (0.4, 2/6) ...
        let expected = 100.0 * (0.2 + 0.2 * (1.0 + 2.0 / 6.0) / 2.0);
        assert!((c.auc_04 - expected).abs() < 1e-12);
    }

    #[test]
    fn ties_are_ordered_by_bag_then_relation() {
        let preds = [pair(5, 0.5, false), pair(2, 0.5, true)];
        let r = rank(&preds);
        assert_eq!(r[0].bag_id, 2);
    }

    fn tuple(bag_id: u64, r: usize, n: usize) -> ExplEvalTuple {
        ExplEvalTuple {
            bag_id,
            relation: 0,
            rationale_idx: r,
            irrelevant_idx: n,
        }
    }

    #[test]
    fn tau_boundaries_and_hand_count() {
        let mut scores = ScoreTable::new();
        scores.insert((0, 0), vec![0.9, 0.1, 0.5, 0.7, 0.2]);
        let conc = [tuple(0, 0, 1), tuple(0, 2, 1), tuple(0, 3, 4)];
        assert_eq!(kendall_tau(&scores, &conc).unwrap().tau(), Some(1.0));
        let disc = [tuple(0, 1, 0), tuple(0, 4, 3)];
        assert_eq!(kendall_tau(&scores, &disc).unwrap().tau(), Some(-1.0));
        let mixed = [tuple(0, 0, 1), tuple(0, 2, 1), tuple(0, 3, 4), tuple(0, 1, 2)];
        assert_eq!(kendall_tau(&scores, &mixed).unwrap().tau(), Some(0.5));
        assert_eq!(kendall_tau(&scores, &[]).unwrap().tau(), None);
    }

    #[test]
    fn ties_count_zero_with_full_denominator() {
        let mut scores = ScoreTable::new();
        scores.insert((0, 0), vec![0.3, 0.3, 0.1]);
        let c = kendall_tau(&scores, &[tuple(0, 0, 1), tuple(0, 0, 2)]).unwrap();
        assert_eq!((c.concordant, c.ties, c.total), (1, 1, 2));
        assert_eq!(c.tau(), Some(0.5));
    }

    #[test]
    fn missing_scores_name_the_tuple() {
        let err = kendall_tau(&ScoreTable::new(), &[tuple(7, 0, 1)]).unwrap_err();
        assert_eq!(err, EvalError::MissingScores { bag_id: 7, relation: 0 });
    }

    #[test]
    fn bucket_boundaries_are_closed() {
        assert_eq!(confidence_bucket(0.76), Some(Bucket::High));
        assert_eq!(confidence_bucket(1.0), Some(Bucket::High));
        assert_eq!(confidence_bucket(0.25), Some(Bucket::Low));
        assert_eq!(confidence_bucket(0.0), Some(Bucket::Low));
        assert_eq!(confidence_bucket(0.5), None);
        assert_eq!(confidence_bucket(0.7599999), None);
        assert_eq!(confidence_bucket(0.2500001), None);
    }

    fn brute_force_auc(preds: &[ScoredPair]) -> f64 {
        // independent evaluation: precision at each recall level reached, as
        // a step list, then exact trapezoids clipped at the cap
        let total = preds.iter().filter(|p| p.label).count() as f64;
        let mut order: Vec<usize> = (0..preds.len()).collect();
        order.sort_by(|&a, &b| {
            let (x, y) = (&preds[a], &preds[b]);
            y.score
                .partial_cmp(&x.score)
                .unwrap()
                .then((x.bag_id, x.relation).cmp(&(y.bag_id, y.relation)))
        });
        let mut curve = vec![];
        let mut hits = 0.0;
        for (rank, &i) in order.iter().enumerate() {
            if preds[i].label {
                hits += 1.0;
                curve.push((hits / total, hits / (rank as f64 + 1.0)));
            }
        }
        let mut area = 0.0;
        let mut prev = (0.0, curve[0].1);
        for &(r, p) in &curve {
            let hi = r.min(0.4);
            if hi > prev.0 {
                let slope = (p - prev.1) / (r - prev.0);
                let p_hi = prev.1 + slope * (hi - prev.0);
                area += (hi - prev.0) * (prev.1 + p_hi) / 2.0;
            }
            prev = (r, p);
        }
        100.0 * area
    }

    fn preds_strategy() -> impl Strategy<Value = Vec<ScoredPair>> {
        prop::collection::vec((0u64..50, 0usize..3, 0u32..20, any::<bool>()), 1..60).prop_map(|v| {
            let mut seen = std::collections::BTreeSet::new();
            let mut out: Vec<ScoredPair> = v
                .into_iter()
                .filter(|&(b, k, _, _)| seen.insert((b, k)))
                .map(|(bag_id, relation, s, label)| ScoredPair {
                    bag_id,
                    relation,
                    score: s as f64 / 20.0,
                    label,
                })
                .collect();
            out[0].label = true;
            out
        })
    }

    proptest! {
        #[test]
        fn auc_matches_brute_force(preds in preds_strategy()) {
            let auc = pr_auc(&preds).unwrap().auc_04;
            prop_assert!((auc - brute_force_auc(&preds)).abs() < 1e-9);
            prop_assert!((0.0..=40.0 + 1e-12).contains(&auc));
        }

        #[test]
        fn auc_invariant_under_monotone_transform(preds in preds_strategy()) {
            let moved: Vec<_> = preds
                .iter()
                .map(|p| ScoredPair { score: (3.0 * p.score).exp() + 1.0, ..*p })
                .collect();
            prop_assert_eq!(pr_auc(&preds).unwrap().auc_04, pr_auc(&moved).unwrap().auc_04);
        }

        #[test]
        fn tau_matches_pairwise_oracle_and_negation(
            scores in prop::collection::vec(-3i32..3, 2..8),
            picks in prop::collection::vec((0usize..8, 0usize..8), 0..20),
        ) {
            let n = scores.len();
            let s: Vec<f64> = scores.iter().map(|&v| v as f64).collect();
            let tuples: Vec<_> = picks
                .iter()
                .map(|&(a, b)| (a % n, b % n))
                .filter(|(a, b)| a != b)
                .map(|(a, b)| tuple(1, a, b))
                .collect();
            let mut table = ScoreTable::new();
            table.insert((1, 0), s.clone());
            let c = kendall_tau(&table, &tuples).unwrap();
            let mut sum = 0i64;
            for t in &tuples {
                sum += (s[t.rationale_idx] - s[t.irrelevant_idx]).signum() as i64
                    * (s[t.rationale_idx] != s[t.irrelevant_idx]) as i64;
            }
            prop_assert_eq!(c.concordant as i64 - c.discordant as i64, sum);
            prop_assert_eq!(c.total, tuples.len());
            table.insert((1, 0), s.iter().map(|v| -v).collect());
            let neg = kendall_tau(&table, &tuples).unwrap();
            prop_assert_eq!(neg.tau().map(|t| -t), c.tau());
        }
    }
}
