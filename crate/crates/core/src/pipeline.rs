//! Corpus-level runs shared by the command line and the test suites:
//! scoring a test split, explaining every labeled relation of every
//! positive bag, and summarizing explanations against annotations.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Bag, BagId, ExplEvalTuple, RelationId};
use crate::evalsuite::{kendall_report, pr_auc, KendallReport, PrCurve, ScoreTable, ScoredPair};
use crate::explain::{explain_bag, ImportanceScores, Method};
use crate::models::{score_bags, Model, Result};

/// Probabilities for every (bag, relation) pair plus the curve they induce.
pub fn evaluate(model: &Model, bags: &[Bag]) -> Result<(Vec<ScoredPair>, PrCurve)> {
    let scored = score_bags(model, bags)?;
    let curve = pr_auc(&scored)?;
    Ok((scored, curve))
}

/// Mean area of the curve over `rounds` seeded permutations of the labels.
pub fn label_shuffle_auc(scored: &[ScoredPair], rounds: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<bool> = scored.iter().map(|s| s.label).collect();
    let mut total = 0.0;
    for _ in 0..rounds {
        labels.shuffle(&mut rng);
        let shuffled: Vec<ScoredPair> = scored
            .iter()
            .zip(&labels)
            .map(|(s, &label)| ScoredPair { label, ..*s })
            .collect();
        total += pr_auc(&shuffled)?.auc_04;
    }
    Ok(total / rounds.max(1) as f64)
}

/// Explanations of every labeled relation of every positive bag.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ExplanationSet {
    pub records: Vec<ImportanceScores>,
    /// Model probability of each explained (bag, relation) pair.
    pub probabilities: BTreeMap<(BagId, RelationId), f64>,
}

impl ExplanationSet {
    pub fn table(&self, method: Method) -> ScoreTable {
        self.records
            .iter()
            .filter(|r| r.method == method)
            .map(|r| ((r.bag_id, r.relation), r.scores.clone()))
            .collect()
    }
}

pub fn explain_corpus(model: &Model, bags: &[Bag], methods: &[Method]) -> Result<ExplanationSet> {
    let mut set = ExplanationSet::default();
    for bag in bags.iter().filter(|b| b.is_positive()) {
        let p = model.predict_bag(bag)?;
        for &k in &bag.relations {
            set.probabilities.insert((bag.bag_id, k), p[k]);
            set.records.extend(explain_bag(model, bag, k, methods)?);
        }
    }
    Ok(set)
}

pub fn kendall_reports(
    set: &ExplanationSet,
    tuples: &[ExplEvalTuple],
    methods: &[Method],
) -> Result<Vec<KendallReport>> {
    methods
        .iter()
        .map(|&m| Ok(kendall_report(m.name(), &set.table(m), tuples, &set.probabilities)?))
        .collect()
}

/// How often the mean score of a relation's rationales beats the mean
/// score of the annotated sentences that do not support it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RationaleMargin {
    /// (bag, relation) pairs with at least one sentence on each side.
    pub pairs: usize,
    pub rationale_wins: usize,
}

impl RationaleMargin {
    pub fn fraction(&self) -> Option<f64> {
        (self.pairs > 0).then(|| self.rationale_wins as f64 / self.pairs as f64)
    }
}

pub fn rationale_margin(table: &ScoreTable, bags: &[Bag]) -> RationaleMargin {
    let mut m = RationaleMargin {
        pairs: 0,
        rationale_wins: 0,
    };
    for bag in bags {
        for &k in &bag.relations {
            let Some(scores) = table.get(&(bag.bag_id, k)) else {
                continue;
            };
            let (mut pos, mut neg) = (Vec::new(), Vec::new());
            for (s, &v) in bag.sentences.iter().zip(scores) {
                match &s.rationale_for {
                    Some(r) if r.contains(&k) => pos.push(v),
                    Some(_) => neg.push(v),
                    None => {}
                }
            }
            if pos.is_empty() || neg.is_empty() {
                continue;
            }
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            m.pairs += 1;
            if mean(&neg) < mean(&pos) {
                m.rationale_wins += 1;
            }
        }
    }
    m
}
