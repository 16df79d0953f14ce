//! Bag-level relation extraction models: selective attention (CNNs+ATT) and
//! relevance-weighted max pooling (DirectSup), optional entity-embedding
//! fusion, checkpoints and training.

mod ops;
mod train;

pub use ops::{
    att_bag_rep, attention_weights, bce_loss, directsup_bag_rep, directsup_weights, fuse_entities,
    predict,
};
pub use train::{score_bags, train, train_model, EpochRecord, TrainConfig, TrainOutcome};

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{
    apply_repr_mode, Bag, CorpusError, EncodedSentence, EntityId, FgetId, Inventory, RelationId,
    ReprMode, Sentence,
};
use crate::encoder::{xavier_tensor, Encoder, EncoderConfig, EncoderError, EncoderVars};
use crate::distractor::DistractorError;
use crate::evalsuite::EvalError;
use crate::tensor::{Graph, ParamId, ParamStore, Tensor, TensorError, Var};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Distractor(#[from] DistractorError),
    #[error("relation {relation} out of range for {num_relations} relations")]
    RelationOutOfRange {
        relation: RelationId,
        num_relations: usize,
    },
    #[error("entity {entity} has no row in the {rows}-row entity table")]
    UnknownEntity { entity: EntityId, rows: usize },
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("DirectSup needs sentence relevance labels; none found in the training bags")]
    MissingRelevanceLabels,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "cnns-att")]
    CnnsAtt,
    #[serde(rename = "directsup")]
    DirectSup,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::CnnsAtt => "cnns-att",
            ModelKind::DirectSup => "directsup",
        })
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "cnns-att" => Ok(ModelKind::CnnsAtt),
            "directsup" => Ok(ModelKind::DirectSup),
            other => Err(format!("unknown model `{other}` (expected cnns-att or directsup)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub repr: ReprMode,
    pub fusion: bool,
    #[serde(default = "default_entity_dim")]
    pub entity_dim: usize,
    #[serde(default)]
    pub encoder: EncoderConfig,
    pub inventory: Inventory,
}

fn default_entity_dim() -> usize {
    64
}

impl ModelConfig {
    pub fn new(kind: ModelKind, repr: ReprMode, fusion: bool, inventory: Inventory) -> Self {
        ModelConfig {
            kind,
            repr,
            fusion,
            entity_dim: default_entity_dim(),
            encoder: EncoderConfig::default(),
            inventory,
        }
    }

    fn validate(&self) -> Result<()> {
        let e = &self.encoder;
        if e.widths.is_empty() || e.widths.contains(&0) || e.channels == 0 || e.word_dim == 0 {
            return Err(ModelError::Config(
                "encoder needs at least one nonzero filter width, channels and word_dim".into(),
            ));
        }
        if self.inventory.num_relations == 0 {
            return Err(ModelError::Config("no relations in the inventory".into()));
        }
        if self.fusion && (self.inventory.num_entities == 0 || self.entity_dim == 0) {
            return Err(ModelError::Config(
                "fusion needs a nonempty entity inventory and entity_dim > 0".into(),
            ));
        }
        if !(e.init_std > 0.0) {
            return Err(ModelError::Config("init_std must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct HeadIds {
    rel_emb: ParamId,
    rel_bias: ParamId,
    att_query: Option<ParamId>,
    att_diag: Option<ParamId>,
    relevance_weight: Option<ParamId>,
    relevance_bias: Option<ParamId>,
    entity_emb: Option<ParamId>,
    fusion_weight: Option<ParamId>,
    fusion_bias: Option<ParamId>,
}

#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    params: ParamStore,
    encoder: Encoder,
    head: HeadIds,
}

/// Model parameters placed on one graph.
#[derive(Debug, Clone)]
pub struct ModelVars {
    encoder: EncoderVars,
    rel_emb: Var,
    rel_bias: Var,
    att_query: Option<Var>,
    att_diag: Option<Var>,
    relevance_weight: Option<Var>,
    relevance_bias: Option<Var>,
    fusion: Option<(Var, Var)>,
}

/// Sidecar stored next to a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config: ModelConfig,
    pub seed: u64,
}

/// Random stream used for parameter initialization.
pub(crate) const INIT_STREAM: u64 = 0;

impl Model {
    /// Builds a freshly initialized model; the seed fixes every table.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(INIT_STREAM);
        let mut store = ParamStore::new();
        let inv = &config.inventory;
        let rows = inv.vocab_size + inv.num_fget;
        let encoder = Encoder::new(config.encoder.clone(), rows, &mut store, &mut rng)?;
        let d = encoder.output_dim();
        let k = inv.num_relations;

        let rel_emb = store.add("rel_emb", xavier_tensor(vec![k, d], d, k, &mut rng), true)?;
        let rel_bias = store.add("rel_bias", Tensor::zeros(vec![k]), true)?;
        let (mut att_query, mut att_diag, mut relevance_weight, mut relevance_bias) =
            (None, None, None, None);
        match config.kind {
            ModelKind::CnnsAtt => {
                let q = xavier_tensor(vec![k, d], d, k, &mut rng);
                att_query = Some(store.add("att_query", q, true)?);
                att_diag = Some(store.add("att_diag", Tensor::full(vec![d], 1.0), true)?);
            }
            ModelKind::DirectSup => {
                let w = xavier_tensor(vec![d], d, 1, &mut rng);
                relevance_weight = Some(store.add("relevance.weight", w, true)?);
                relevance_bias = Some(store.add("relevance.bias", Tensor::zeros(vec![1]), true)?);
            }
        }
        let (mut entity_emb, mut fusion_weight, mut fusion_bias) = (None, None, None);
        if config.fusion {
            let de = config.entity_dim;
            let normal = Normal::new(0.0, config.encoder.init_std).expect("validated std");
            let n = inv.num_entities * de;
            let table = Tensor::new(
                vec![inv.num_entities, de],
                (0..n).map(|_| normal.sample(&mut rng)).collect(),
            )?;
            entity_emb = Some(store.add("entity_emb", table, false)?);
            let w = xavier_tensor(vec![d, d + 2 * de], d + 2 * de, d, &mut rng);
            fusion_weight = Some(store.add("fusion.weight", w, true)?);
            fusion_bias = Some(store.add("fusion.bias", Tensor::zeros(vec![d]), true)?);
        }
        Ok(Model {
            config,
            params: store,
            encoder,
            head: HeadIds {
                rel_emb,
                rel_bias,
                att_query,
                att_diag,
                relevance_weight,
                relevance_bias,
                entity_emb,
                fusion_weight,
                fusion_bias,
            },
        })
    }

    /// Overwrites word-table rows from a JSON map of token id to vector.
    pub fn load_embeddings(&mut self, json: &str) -> Result<usize> {
        Ok(self.encoder.load_embeddings(&mut self.params, json)?)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn num_relations(&self) -> usize {
        self.config.inventory.num_relations
    }

    /// Dimension `d` of sentence encodings and bag representations.
    pub fn encoding_dim(&self) -> usize {
        self.encoder.output_dim()
    }

    fn check_relation(&self, k: RelationId) -> Result<()> {
        if k >= self.num_relations() {
            return Err(ModelError::RelationOutOfRange {
                relation: k,
                num_relations: self.num_relations(),
            });
        }
        Ok(())
    }

    /// Places parameters on `g`; `track` makes trainable ones require grads.
    pub fn bind(&self, g: &mut Graph, track: bool) -> ModelVars {
        let p = &self.params;
        let h = &self.head;
        let opt = |g: &mut Graph, id: Option<ParamId>| id.map(|id| p.bind(g, id, track));
        ModelVars {
            encoder: self.encoder.bind(g, p, track),
            rel_emb: p.bind(g, h.rel_emb, track),
            rel_bias: p.bind(g, h.rel_bias, track),
            att_query: opt(g, h.att_query),
            att_diag: opt(g, h.att_diag),
            relevance_weight: opt(g, h.relevance_weight),
            relevance_bias: opt(g, h.relevance_bias),
            fusion: h
                .fusion_weight
                .zip(h.fusion_bias)
                .map(|(w, b)| (p.bind(g, w, track), p.bind(g, b, track))),
        }
    }

    /// Pairs each bound parameter with its graph variable.
    pub fn bound_params(&self, mv: &ModelVars) -> Vec<(ParamId, Var)> {
        let h = &self.head;
        let mut out = self.encoder.bound_params(&mv.encoder);
        out.push((h.rel_emb, mv.rel_emb));
        out.push((h.rel_bias, mv.rel_bias));
        let optional = [
            (h.att_query, mv.att_query),
            (h.att_diag, mv.att_diag),
            (h.relevance_weight, mv.relevance_weight),
            (h.relevance_bias, mv.relevance_bias),
            (h.fusion_weight, mv.fusion.map(|f| f.0)),
            (h.fusion_bias, mv.fusion.map(|f| f.1)),
        ];
        out.extend(optional.into_iter().filter_map(|(id, v)| id.zip(v)));
        out
    }

    /// Encoder input for a sentence of a bag with FGET pair `fget`.
    pub fn prepare(&self, sentence: &Sentence, fget: (FgetId, FgetId)) -> Result<EncodedSentence> {
        Ok(apply_repr_mode(sentence, fget, self.config.repr, &self.config.inventory)?)
    }

    pub fn encode_sentence(
        &self,
        g: &mut Graph,
        mv: &ModelVars,
        sentence: &EncodedSentence,
    ) -> Result<Var> {
        Ok(self.encoder.encode(g, &mv.encoder, &self.params, sentence)?)
    }

    pub fn encode_bag(&self, g: &mut Graph, mv: &ModelVars, bag: &Bag) -> Result<Vec<Var>> {
        bag.sentences
            .iter()
            .map(|s| {
                let e = self.prepare(s, bag.fget_pair())?;
                self.encode_sentence(g, mv, &e)
            })
            .collect()
    }

    fn relation_params(&self, g: &mut Graph, mv: &ModelVars, k: RelationId) -> Result<(Var, Var)> {
        self.check_relation(k)?;
        let d = self.encoding_dim();
        let r = g.gather(mv.rel_emb, &[k])?;
        let r = g.reshape(r, vec![d])?;
        let b = g.slice(mv.rel_bias, k, 1)?;
        Ok((r, b))
    }

    fn attention_vector(&self, g: &mut Graph, mv: &ModelVars, k: RelationId) -> Result<Var> {
        let (q, a) = mv.att_query.zip(mv.att_diag).expect("attention model");
        let q = g.gather(q, &[k])?;
        let q = g.reshape(q, vec![self.encoding_dim()])?;
        Ok(g.mul(q, a)?)
    }

    fn relevance_params(mv: &ModelVars) -> (Var, Var) {
        mv.relevance_weight
            .zip(mv.relevance_bias)
            .expect("relevance model")
    }

    /// Sentence weights: attention for relation `k` (CNNs+ATT) or the
    /// relation-independent relevance probabilities (DirectSup).
    pub fn importance(&self, g: &mut Graph, mv: &ModelVars, rows: &[Var], k: RelationId) -> Result<Var> {
        self.check_relation(k)?;
        let x = g.stack(rows)?;
        match self.config.kind {
            ModelKind::CnnsAtt => {
                let u = self.attention_vector(g, mv, k)?;
                let s = ops::row_dots(g, x, u)?;
                Ok(g.softmax(s)?)
            }
            ModelKind::DirectSup => {
                let (w, b) = Self::relevance_params(mv);
                Ok(ops::directsup_weights_g(g, x, w, b)?)
            }
        }
    }

    /// Relevance-classifier logits, one per sentence (DirectSup only).
    pub fn relevance_logits(&self, g: &mut Graph, mv: &ModelVars, rows: &[Var]) -> Result<Var> {
        if self.config.kind != ModelKind::DirectSup {
            return Err(ModelError::Config("relevance logits exist only for DirectSup".into()));
        }
        let (w, b) = Self::relevance_params(mv);
        let x = g.stack(rows)?;
        let s = ops::row_dots(g, x, w)?;
        Ok(g.add_scalar(s, b)?)
    }

    /// Bag representation before fusion. An empty bag is the zero vector.
    fn bag_rep(&self, g: &mut Graph, mv: &ModelVars, rows: &[Var], k: RelationId) -> Result<Var> {
        if rows.is_empty() {
            return Ok(g.constant(Tensor::zeros(vec![self.encoding_dim()])));
        }
        let alpha = self.importance(g, mv, rows, k)?;
        let x = g.stack(rows)?;
        Ok(match self.config.kind {
            ModelKind::CnnsAtt => ops::att_bag_rep_g(g, x, alpha)?,
            ModelKind::DirectSup => ops::directsup_bag_rep_g(g, x, alpha)?,
        })
    }

    fn entity_rows(&self, entities: (EntityId, EntityId)) -> Result<(&[f64], &[f64])> {
        let table = self.params.value(self.head.entity_emb.expect("fusion model"));
        let rows = table.shape()[0];
        for e in [entities.0, entities.1] {
            if e >= rows {
                return Err(ModelError::UnknownEntity { entity: e, rows });
            }
        }
        Ok((table.row(entities.0), table.row(entities.1)))
    }

    fn finish(&self, g: &mut Graph, mv: &ModelVars, z: Var, entities: (EntityId, EntityId)) -> Result<Var> {
        match mv.fusion {
            None => Ok(z),
            Some((w, b)) => {
                let (vi, vj) = self.entity_rows(entities)?;
                Ok(ops::fuse_entities_g(g, z, vi, vj, w, b)?)
            }
        }
    }

    /// Logit `o_k` of one relation, shape `[1]`.
    pub fn relation_logit(
        &self,
        g: &mut Graph,
        mv: &ModelVars,
        rows: &[Var],
        entities: (EntityId, EntityId),
        k: RelationId,
    ) -> Result<Var> {
        let z = self.bag_rep(g, mv, rows, k)?;
        let h = self.finish(g, mv, z, entities)?;
        let (r, b) = self.relation_params(g, mv, k)?;
        Ok(ops::logit_g(g, h, r, b)?)
    }

    /// Logits of all relations, shape `[K]`.
    pub fn logits(
        &self,
        g: &mut Graph,
        mv: &ModelVars,
        rows: &[Var],
        entities: (EntityId, EntityId),
    ) -> Result<Var> {
        match self.config.kind {
            ModelKind::CnnsAtt => {
                let per_k = (0..self.num_relations())
                    .map(|k| self.relation_logit(g, mv, rows, entities, k))
                    .collect::<Result<Vec<_>>>()?;
                Ok(g.concat(&per_k)?)
            }
            ModelKind::DirectSup => {
                let z = self.bag_rep(g, mv, rows, 0)?;
                let h = self.finish(g, mv, z, entities)?;
                let d = g.shape(h)[0];
                let col = g.reshape(h, vec![d, 1])?;
                let o = g.matmul(mv.rel_emb, col)?;
                let o = g.reshape(o, vec![self.num_relations()])?;
                Ok(g.add(o, mv.rel_bias)?)
            }
        }
    }

    /// `∂o_k/∂z` as a differentiable expression, where `z` is the bag
    /// representation before fusion. The ReLU gate of the fusion layer is
    /// held fixed at its forward value.
    fn logit_grad_wrt_rep(
        &self,
        g: &mut Graph,
        mv: &ModelVars,
        z: Var,
        entities: (EntityId, EntityId),
        k: RelationId,
    ) -> Result<Var> {
        let (r, _) = self.relation_params(g, mv, k)?;
        let Some((w, b)) = mv.fusion else {
            return Ok(r);
        };
        let (vi, vj) = self.entity_rows(entities)?;
        let pre = ops::fusion_preactivation_g(g, z, vi, vj, w, b)?;
        let gate = g.value(pre).data().iter().map(|&v| f64::from(v > 0.0)).collect();
        let gate = g.constant(Tensor::vector(gate));
        let gated = g.mul(r, gate)?;
        let d = g.shape(gated)[0];
        let col = g.reshape(gated, vec![d, 1])?;
        let wt = g.transpose(w)?;
        let full = g.matmul(wt, col)?;
        let n = g.shape(full)[0];
        let full = g.reshape(full, vec![n])?;
        Ok(g.slice(full, 0, self.encoding_dim())?)
    }

    /// Gradient×input of `o_k` for every row, built from forward kernels
    /// only so that the result can itself be differentiated.
    ///
    /// Attention: `GI_n = α_n (g·x_n) + α_n (g·x_n − g·z)(u·x_n)` with
    /// `u = A∘q_k`. Relevance max pooling: `GI_n = α_n t_n + α_n (1 − α_n)
    /// (w·x_n) t_n` with `t_n = Σ_i g_i x_n[i] 1[n wins column i]`.
    pub fn grad_input(
        &self,
        g: &mut Graph,
        mv: &ModelVars,
        rows: &[Var],
        entities: (EntityId, EntityId),
        k: RelationId,
    ) -> Result<Var> {
        self.check_relation(k)?;
        if rows.is_empty() {
            return Err(ModelError::Config("gradient×input of an empty bag".into()));
        }
        let n = rows.len();
        let x = g.stack(rows)?;
        match self.config.kind {
            ModelKind::CnnsAtt => {
                let u = self.attention_vector(g, mv, k)?;
                let s = ops::row_dots(g, x, u)?;
                let alpha = g.softmax(s)?;
                let z = ops::att_bag_rep_g(g, x, alpha)?;
                let gz_vec = self.logit_grad_wrt_rep(g, mv, z, entities, k)?;
                let gx = ops::row_dots(g, x, gz_vec)?;
                let gz = g.dot(gz_vec, z)?;
                let neg_gz = g.scale(gz, -1.0);
                let centered = g.add_scalar(gx, neg_gz)?;
                let first = g.mul(alpha, gx)?;
                let second = g.mul(alpha, centered)?;
                let second = g.mul(second, s)?;
                Ok(g.add(first, second)?)
            }
            ModelKind::DirectSup => {
                let (w, b) = Self::relevance_params(mv);
                let alpha = ops::directsup_weights_g(g, x, w, b)?;
                let weighted = g.row_scale(x, alpha)?;
                let z = g.max_axis0(weighted)?;
                let gz_vec = self.logit_grad_wrt_rep(g, mv, z, entities, k)?;
                let mask = g.constant(winner_mask(g.value(weighted)));
                let grads = g.stack(&vec![gz_vec; n])?;
                let routed = g.mul(grads, mask)?;
                let t = g.mul(x, routed)?;
                let t = g.sum_axis1(t)?;
                let wx = ops::row_dots(g, x, w)?;
                let one = g.constant(Tensor::scalar(1.0));
                let neg_alpha = g.scale(alpha, -1.0);
                let one_minus = g.add_scalar(neg_alpha, one)?;
                let slope = g.mul(alpha, one_minus)?;
                let first = g.mul(alpha, t)?;
                let second = g.mul(slope, wx)?;
                let second = g.mul(second, t)?;
                Ok(g.add(first, second)?)
            }
        }
    }

    /// Encodes every sentence of `bag` to plain vectors.
    pub fn encode_values(&self, bag: &Bag) -> Result<Vec<Vec<f64>>> {
        let mut g = Graph::new();
        let mv = self.bind(&mut g, false);
        let rows = self.encode_bag(&mut g, &mv, bag)?;
        Ok(rows.iter().map(|&r| g.value(r).data().to_vec()).collect())
    }

    /// Places precomputed encodings on `g` as leaves.
    pub fn encoding_leaves(g: &mut Graph, encodings: &[Vec<f64>], requires_grad: bool) -> Vec<Var> {
        encodings
            .iter()
            .map(|e| g.leaf(Tensor::vector(e.clone()), requires_grad))
            .collect()
    }

    /// All relation logits from precomputed encodings.
    pub fn logits_from_encodings(
        &self,
        encodings: &[Vec<f64>],
        entities: (EntityId, EntityId),
    ) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let mv = self.bind(&mut g, false);
        let rows = Self::encoding_leaves(&mut g, encodings, false);
        let o = self.logits(&mut g, &mv, &rows, entities)?;
        Ok(g.value(o).data().to_vec())
    }

    /// `o_k` from precomputed encodings; an empty slice scores the zero
    /// representation.
    pub fn relation_logit_from_encodings(
        &self,
        encodings: &[Vec<f64>],
        entities: (EntityId, EntityId),
        k: RelationId,
    ) -> Result<f64> {
        let mut g = Graph::new();
        let mv = self.bind(&mut g, false);
        let rows = Self::encoding_leaves(&mut g, encodings, false);
        let o = self.relation_logit(&mut g, &mv, &rows, entities, k)?;
        Ok(g.value(o).data()[0])
    }

    /// `P(r = k | bag)` for every relation.
    pub fn predict_bag(&self, bag: &Bag) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let mv = self.bind(&mut g, false);
        let rows = self.encode_bag(&mut g, &mv, bag)?;
        let o = self.logits(&mut g, &mv, &rows, bag.entities())?;
        let p = g.sigmoid(o);
        Ok(g.value(p).data().to_vec())
    }

    /// Writes the checkpoint to `path` and its sidecar to
    /// `<path>.meta.json`.
    pub fn save(&self, path: &Path, seed: u64) -> Result<()> {
        self.params.save(path)?;
        let meta = CheckpointMeta {
            config: self.config.clone(),
            seed,
        };
        let text = serde_json::to_string_pretty(&meta).expect("serializable");
        let side = sidecar_path(path);
        std::fs::write(&side, text).map_err(|e| ModelError::File {
            path: side,
            message: e.to_string(),
        })
    }

    /// Rebuilds a model from a checkpoint and its sidecar.
    pub fn load(path: &Path) -> Result<(Self, CheckpointMeta)> {
        let side = sidecar_path(path);
        let text = std::fs::read_to_string(&side).map_err(|e| ModelError::File {
            path: side.clone(),
            message: e.to_string(),
        })?;
        let meta: CheckpointMeta = serde_json::from_str(&text).map_err(|e| ModelError::File {
            path: side,
            message: e.to_string(),
        })?;
        let mut model = Model::new(meta.config.clone(), meta.seed)?;
        model.params.load(path)?;
        Ok((model, meta))
    }
}

pub fn sidecar_path(checkpoint: &Path) -> PathBuf {
    let mut s = checkpoint.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// One-hot rows marking, per column, the first row holding the maximum.
fn winner_mask(weighted: &Tensor) -> Tensor {
    let (n, d) = (weighted.shape()[0], weighted.shape()[1]);
    let v = weighted.data();
    let mut mask = vec![0.0; n * d];
    for c in 0..d {
        let mut best = 0;
        for r in 1..n {
            if v[r * d + c] > v[best * d + c] {
                best = r;
            }
        }
        mask[best * d + c] = 1.0;
    }
    Tensor::matrix(n, d, mask).expect("shape matches")
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use crate::corpus::Inventory;

    pub fn tiny_config(kind: ModelKind, fusion: bool) -> ModelConfig {
        let mut c = ModelConfig::new(
            kind,
            ReprMode::Raw,
            fusion,
            Inventory {
                vocab_size: 12,
                num_fget: 2,
                num_relations: 3,
                num_entities: 4,
            },
        );
        c.entity_dim = 3;
        c.encoder = EncoderConfig {
            word_dim: 4,
            position_dim: 2,
            widths: vec![2, 3],
            channels: 3,
            max_distance: 5,
            init_std: 0.5,
        };
        c
    }

    /// Random-ish encodings with distinct entries so max pooling has no ties.
    pub fn encodings(n: usize, d: usize, salt: f64) -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| {
                (0..d)
                    .map(|j| 0.1 + ((i * 7 + j * 3) as f64 * 0.37 + salt).sin().abs())
                    .collect()
            })
            .collect()
    }
}
