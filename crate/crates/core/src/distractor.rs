//! Learning from distractors: for each labeled relation of a positive bag,
//! a sentence without evidence for that relation is injected, and a margin
//! loss keeps its gradient×input below the bag's best original sentence.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{replace_mentions, Bag, BagId, FgetId, RelationId, Sentence};
use crate::tensor::{Graph, Tensor, TensorError, Var};

#[derive(Debug, Error, PartialEq)]
pub enum DistractorError {
    #[error("bag {bag_id}: no candidate sentence for relation {relation} and no negative bags")]
    NoCandidates { bag_id: BagId, relation: RelationId },
    #[error("bag {bag_id} is not labeled with relation {relation}")]
    RelationNotInBag { bag_id: BagId, relation: RelationId },
    #[error("distractor loss needs at least one original sentence")]
    EmptyBag,
    #[error("lambda must be nonnegative, got {0}")]
    NegativeLambda(f64),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, DistractorError>;

pub const DEFAULT_LAMBDA: f64 = 1.0;
pub const DEFAULT_GAMMA: f64 = 1e-5;

/// Candidate sentences per (FGET pair, relation) over one set of bags.
#[derive(Debug, Clone)]
pub struct DistractorIndex<'a> {
    bags: &'a [Bag],
    candidates: HashMap<((FgetId, FgetId), RelationId), Vec<(usize, usize)>>,
    negatives: Vec<usize>,
}

impl<'a> DistractorIndex<'a> {
    /// Every sentence of a bag with FGET pair `t` that is not labeled `k`
    /// becomes a candidate for `(t, k)`.
    pub fn build(bags: &'a [Bag], num_relations: usize) -> Self {
        let mut candidates: HashMap<_, Vec<_>> = HashMap::new();
        let mut negatives = Vec::new();
        for (b, bag) in bags.iter().enumerate() {
            if !bag.is_positive() {
                negatives.push(b);
            }
            for k in (0..num_relations).filter(|&k| !bag.has_relation(k)) {
                let list = candidates.entry((bag.fget_pair(), k)).or_default();
                list.extend((0..bag.sentences.len()).map(|s| (b, s)));
            }
        }
        DistractorIndex {
            bags,
            candidates,
            negatives,
        }
    }

    pub fn candidates(&self, fget: (FgetId, FgetId), k: RelationId) -> &[(usize, usize)] {
        self.candidates.get(&(fget, k)).map_or(&[], Vec::as_slice)
    }

    pub fn negative_bags(&self) -> &[usize] {
        &self.negatives
    }

    pub fn bags(&self) -> &'a [Bag] {
        self.bags
    }
}

/// A sampled distractor with the base bag's mentions substituted in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distractor {
    pub source_bag: BagId,
    pub source_sentence: usize,
    /// Drawn from a random negative bag because no FGET-matching candidate
    /// existed.
    pub fallback: bool,
    pub sentence: Sentence,
}

/// Draws a distractor for relation `k` of `bag`: uniform over sentences of
/// bags sharing the FGET pair but not labeled `k`, otherwise a random
/// sentence of a random negative bag. Mentions are replaced by those of a
/// uniformly chosen sentence of `bag`; under FGET representations the
/// model later swaps them for the bag's type tokens.
pub fn sample_distractor<R: Rng>(
    bag: &Bag,
    k: RelationId,
    index: &DistractorIndex<'_>,
    rng: &mut R,
) -> Result<Distractor> {
    if !bag.has_relation(k) {
        return Err(DistractorError::RelationNotInBag {
            bag_id: bag.bag_id,
            relation: k,
        });
    }
    let pool = index.candidates(bag.fget_pair(), k);
    let (b, s, fallback) = if !pool.is_empty() {
        let (b, s) = pool[rng.gen_range(0..pool.len())];
        (b, s, false)
    } else if !index.negatives.is_empty() {
        let b = index.negatives[rng.gen_range(0..index.negatives.len())];
        let s = rng.gen_range(0..index.bags[b].sentences.len());
        (b, s, true)
    } else {
        return Err(DistractorError::NoCandidates {
            bag_id: bag.bag_id,
            relation: k,
        });
    };
    let source = &index.bags[b];
    let donor = &bag.sentences[rng.gen_range(0..bag.sentences.len())];
    let mention = |span: crate::corpus::Span| &donor.tokens[span.start()..span.end()];
    let e = replace_mentions(
        &source.sentences[s],
        mention(donor.mention_i),
        mention(donor.mention_j),
    );
    Ok(Distractor {
        source_bag: source.bag_id,
        source_sentence: s,
        fallback,
        sentence: Sentence {
            tokens: e.tokens,
            mention_i: e.mention_i,
            mention_j: e.mention_j,
            relevance_label: None,
            rationale_for: None,
        },
    })
}

/// One distractor per labeled relation of a positive bag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedBag {
    pub base_bag: BagId,
    pub relation: RelationId,
    pub distractor: Distractor,
}

pub fn augment_bag<R: Rng>(
    bag: &Bag,
    index: &DistractorIndex<'_>,
    rng: &mut R,
) -> Result<Vec<AugmentedBag>> {
    bag.relations
        .iter()
        .map(|&k| {
            Ok(AugmentedBag {
                base_bag: bag.bag_id,
                relation: k,
                distractor: sample_distractor(bag, k, index, rng)?,
            })
        })
        .collect()
}

/// `max(0, γ + GI' − max_n GI_n) + |GI'|`.
pub fn distractor_loss(bag_gi: &[f64], distractor_gi: f64, gamma: f64) -> Result<f64> {
    let best = bag_gi
        .iter()
        .copied()
        .reduce(f64::max)
        .ok_or(DistractorError::EmptyBag)?;
    Ok((gamma + distractor_gi - best).max(0.0) + distractor_gi.abs())
}

/// Graph form of [`distractor_loss`]. `gi` holds the original sentences
/// followed by the distractor as its last entry.
pub fn distractor_loss_g(g: &mut Graph, gi: Var, gamma: f64) -> Result<Var> {
    let m = g.shape(gi)[0];
    if m < 2 {
        return Err(DistractorError::EmptyBag);
    }
    let original = g.slice(gi, 0, m - 1)?;
    let best = g.max_axis0(original)?;
    let injected = g.slice(gi, m - 1, 1)?;
    let gamma = g.constant(Tensor::scalar(gamma));
    let margin = g.add(injected, gamma)?;
    let margin = g.sub(margin, best)?;
    let hinge = g.relu(margin);
    let size = g.abs(injected);
    Ok(g.add(hinge, size)?)
}

/// `l + λ Σ_k l'_k`.
pub fn combined_loss(loss: f64, distractor_losses: &[f64], lambda: f64) -> Result<f64> {
    if lambda < 0.0 {
        return Err(DistractorError::NegativeLambda(lambda));
    }
    Ok(loss + lambda * distractor_losses.iter().sum::<f64>())
}
