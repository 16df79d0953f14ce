//! Per-bag Adam training with a seeded train/validation split and
//! best-validation-AUC model selection.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig, ModelError, ModelKind, Result};
use crate::corpus::{Bag, BagId};
use crate::distractor::{self, DistractorIndex, DEFAULT_GAMMA, DEFAULT_LAMBDA};
use crate::evalsuite::{pr_auc, ScoredPair};
use crate::tensor::{Adam, AdamConfig, Graph, Var};

const SPLIT_STREAM: u64 = 1;
const SHUFFLE_STREAM: u64 = 2;
const NEGATIVE_STREAM: u64 = 3;
const DISTRACTOR_STREAM: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub validation_fraction: f64,
    /// Learning from distractors.
    pub ld: bool,
    pub lambda: f64,
    pub gamma: f64,
    /// Weight of the sentence-relevance loss (DirectSup only).
    pub relevance_weight: f64,
    /// Probability that a negative bag is visited in a given epoch.
    pub negative_sample_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            lr: 0.001,
            seed: 0,
            validation_fraction: 0.1,
            ld: false,
            lambda: DEFAULT_LAMBDA,
            gamma: DEFAULT_GAMMA,
            relevance_weight: 1.0,
            negative_sample_rate: 1.0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(ModelError::Config(m.into()));
        if !(self.lr > 0.0) {
            return bad("lr must be positive");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation_fraction must lie in [0, 1)");
        }
        if !(self.lambda >= 0.0) {
            return bad("lambda must be nonnegative");
        }
        if !(self.gamma >= 0.0) {
            return bad("gamma must be nonnegative");
        }
        if !(self.relevance_weight >= 0.0) {
            return bad("relevance_weight must be nonnegative");
        }
        if !(0.0..=1.0).contains(&self.negative_sample_rate) {
            return bad("negative_sample_rate must lie in [0, 1]");
        }
        Ok(())
    }

    /// Distractors are used only when they can affect the objective.
    pub fn distractors_active(&self) -> bool {
        self.ld && self.lambda > 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub bags: usize,
    pub loss: f64,
    pub distractor_loss: f64,
    pub validation_auc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub history: Vec<EpochRecord>,
    /// Epoch whose parameters were kept; `None` for the initialization.
    pub best_epoch: Option<usize>,
    pub validation_bags: Vec<BagId>,
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Shuffles bag positions with the split stream and holds out the first
/// `round(n * fraction)` of them, keeping at least one training bag.
fn split(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng(seed, SPLIT_STREAM));
    let held = ((n as f64 * fraction).round() as usize).min(n.saturating_sub(1));
    let train = order.split_off(held);
    (train, order)
}

pub fn train(config: ModelConfig, bags: &[Bag], tc: &TrainConfig) -> Result<TrainOutcome> {
    tc.validate()?;
    let model = Model::new(config, tc.seed)?;
    train_model(model, bags, tc)
}

/// Trains an already initialized model, e.g. one with pretrained word vectors.
pub fn train_model(mut model: Model, bags: &[Bag], tc: &TrainConfig) -> Result<TrainOutcome> {
    tc.validate()?;
    if bags.is_empty() {
        return Err(ModelError::EmptyCorpus);
    }
    if model.kind() == ModelKind::DirectSup
        && !bags
            .iter()
            .flat_map(|b| &b.sentences)
            .any(|s| s.relevance_label.is_some())
    {
        return Err(ModelError::MissingRelevanceLabels);
    }
    let (train_idx, val_idx) = split(bags.len(), tc.validation_fraction, tc.seed);
    let train_bags: Vec<Bag> = train_idx.iter().map(|&i| bags[i].clone()).collect();
    let val_bags: Vec<&Bag> = val_idx.iter().map(|&i| &bags[i]).collect();
    let index = tc
        .distractors_active()
        .then(|| DistractorIndex::build(&train_bags, model.num_relations()));

    let mut adam = Adam::new(
        AdamConfig {
            lr: tc.lr,
            ..AdamConfig::default()
        },
        model.params(),
    );
    let mut shuffle_rng = rng(tc.seed, SHUFFLE_STREAM);
    let mut negative_rng = rng(tc.seed, NEGATIVE_STREAM);
    let mut distractor_rng = rng(tc.seed, DISTRACTOR_STREAM);

    let mut history = Vec::with_capacity(tc.epochs);
    let mut best: Option<(usize, Option<f64>, Model)> = None;
    let mut order: Vec<usize> = (0..train_bags.len()).collect();
    for epoch in 1..=tc.epochs {
        order.shuffle(&mut shuffle_rng);
        let (mut seen, mut total, mut total_ld) = (0, 0.0, 0.0);
        for &i in &order {
            let bag = &train_bags[i];
            if !bag.is_positive()
                && tc.negative_sample_rate < 1.0
                && !negative_rng.gen_bool(tc.negative_sample_rate)
            {
                continue;
            }
            let (l, ld) = step(&mut model, &mut adam, bag, tc, index.as_ref(), &mut distractor_rng)?;
            seen += 1;
            total += l;
            total_ld += ld;
        }
        let auc = validation_auc(&model, &val_bags)?;
        history.push(EpochRecord {
            epoch,
            bags: seen,
            loss: total,
            distractor_loss: total_ld,
            validation_auc: auc,
        });
        let better = match &best {
            None => true,
            Some((_, prev, _)) => match (auc, prev) {
                (Some(a), Some(p)) => a >= *p,
                (Some(_), None) => true,
                (None, None) => true,
                (None, Some(_)) => false,
            },
        };
        if better {
            best = Some((epoch, auc, model.clone()));
        }
    }
    let (best_epoch, model) = match best {
        Some((e, _, m)) => (Some(e), m),
        None => (None, model),
    };
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
        validation_bags: val_bags.iter().map(|b| b.bag_id).collect(),
    })
}

/// One optimizer step on one bag. Returns the extraction (plus relevance)
/// loss and the weighted distractor loss.
fn step(
    model: &mut Model,
    adam: &mut Adam,
    bag: &Bag,
    tc: &TrainConfig,
    index: Option<&DistractorIndex<'_>>,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, f64)> {
    let mut g = Graph::new();
    let mv = model.bind(&mut g, true);
    let rows = model.encode_bag(&mut g, &mv, bag)?;
    let entities = bag.entities();
    let logits = model.logits(&mut g, &mv, &rows, entities)?;
    let labels: Vec<f64> = (0..model.num_relations())
        .map(|k| f64::from(u8::from(bag.has_relation(k))))
        .collect();
    let mut loss = g.bce_with_logits(logits, &labels)?;

    if model.kind() == ModelKind::DirectSup && tc.relevance_weight > 0.0 {
        let labeled: Vec<(usize, f64)> = bag
            .sentences
            .iter()
            .enumerate()
            .filter_map(|(n, s)| s.relevance_label.map(|y| (n, f64::from(u8::from(y)))))
            .collect();
        if !labeled.is_empty() {
            let picked: Vec<Var> = labeled.iter().map(|&(n, _)| rows[n]).collect();
            let s = model.relevance_logits(&mut g, &mv, &picked)?;
            let y: Vec<f64> = labeled.iter().map(|&(_, y)| y).collect();
            let aux = g.bce_with_logits(s, &y)?;
            let aux = g.scale(aux, tc.relevance_weight);
            loss = g.add(loss, aux)?;
        }
    }
    let base = g.value(loss).data()[0];

    let mut ld_value = 0.0;
    if let Some(index) = index.filter(|_| bag.is_positive()) {
        let mut terms = Vec::with_capacity(bag.relations.len());
        for &k in &bag.relations {
            let d = distractor::sample_distractor(bag, k, index, rng)?;
            let e = model.prepare(&d.sentence, bag.fget_pair())?;
            let x = model.encode_sentence(&mut g, &mv, &e)?;
            let mut augmented = rows.clone();
            augmented.push(x);
            let gi = model.grad_input(&mut g, &mv, &augmented, entities, k)?;
            terms.push(distractor::distractor_loss_g(&mut g, gi, tc.gamma)?);
        }
        let joined = g.concat(&terms)?;
        let summed = g.sum(joined);
        let weighted = g.scale(summed, tc.lambda);
        ld_value = g.value(weighted).data()[0];
        loss = g.add(loss, weighted)?;
    }

    g.backward(loss)?;
    let bound = model.bound_params(&mv);
    let store = model.params_mut();
    for (id, v) in bound {
        if let Some(grad) = g.grad(v) {
            store.accumulate_grad(id, grad)?;
        }
    }
    adam.step(store)?;
    Ok((base, ld_value))
}

/// Probability for every (bag, relation) pair of `bags`.
pub fn score_bags<'a, I>(model: &Model, bags: I) -> Result<Vec<ScoredPair>>
where
    I: IntoIterator<Item = &'a Bag>,
{
    let mut out = Vec::new();
    for bag in bags {
        let p = model.predict_bag(bag)?;
        out.extend(p.into_iter().enumerate().map(|(k, score)| ScoredPair {
            bag_id: bag.bag_id,
            relation: k,
            score,
            label: bag.has_relation(k),
        }));
    }
    Ok(out)
}

fn validation_auc(model: &Model, bags: &[&Bag]) -> Result<Option<f64>> {
    let scored = score_bags(model, bags.iter().copied())?;
    if !scored.iter().any(|s| s.label) {
        return Ok(None);
    }
    Ok(Some(pr_auc(&scored)?.auc_04))
}
