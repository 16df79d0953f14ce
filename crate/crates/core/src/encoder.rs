//! CNN sentence encoder: word and relative-position embeddings, one
//! convolution bank per filter width, max-over-time pooling, concatenation
//! and a final ReLU so encodings are nonnegative.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{EncodedSentence, Span};
use crate::tensor::{Graph, ParamId, ParamStore, Tensor, TensorError, Var};

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("token id {token} outside embedding table of {rows} rows")]
    UnknownToken { token: u32, rows: usize },
    #[error("empty sentence")]
    EmptySentence,
    #[error("embedding file: {0}")]
    EmbeddingFile(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T> = std::result::Result<T, EncoderError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub word_dim: usize,
    pub position_dim: usize,
    pub widths: Vec<usize>,
    pub channels: usize,
    /// Relative positions are clipped to `[-max_distance, max_distance]`.
    pub max_distance: usize,
    /// Standard deviation of the random embedding tables used when no
    /// pretrained vectors are supplied.
    pub init_std: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            word_dim: 300,
            position_dim: 5,
            widths: vec![2, 3, 4, 5],
            channels: 64,
            max_distance: 50,
            init_std: 0.1,
        }
    }
}

impl EncoderConfig {
    pub fn output_dim(&self) -> usize {
        self.widths.len() * self.channels
    }

    pub fn input_dim(&self) -> usize {
        self.word_dim + 2 * self.position_dim
    }
}

/// Signed distance from `token` to the nearest token of `span`, clipped to
/// `±max_distance`. Tokens inside the span get 0.
pub fn relative_position(token: usize, span: Span, max_distance: usize) -> i64 {
    let d = if token < span.start() {
        token as i64 - span.start() as i64
    } else if token >= span.end() {
        token as i64 - (span.end() as i64 - 1)
    } else {
        0
    };
    let p = max_distance as i64;
    d.clamp(-p, p)
}

#[derive(Debug, Clone)]
pub struct Encoder {
    config: EncoderConfig,
    word: ParamId,
    pos_i: ParamId,
    pos_j: ParamId,
    banks: Vec<(ParamId, ParamId)>,
}

/// Encoder parameters placed on one graph.
#[derive(Debug, Clone)]
pub struct EncoderVars {
    pos_i: Var,
    pos_j: Var,
    banks: Vec<(Var, Var)>,
}

fn normal_tensor<R: Rng>(shape: Vec<usize>, std: f64, rng: &mut R) -> Tensor {
    let n: usize = shape.iter().product();
    let dist = Normal::new(0.0, std).expect("positive std");
    let data = (0..n).map(|_| dist.sample(rng)).collect();
    Tensor::new(shape, data).expect("shape matches")
}

pub(crate) fn xavier_tensor<R: Rng>(
    shape: Vec<usize>,
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound);
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| dist.sample(rng)).collect();
    Tensor::new(shape, data).expect("shape matches")
}

impl Encoder {
    /// Registers encoder parameters. `table_rows` covers every word and FGET
    /// token id. The word/FGET table is frozen; position tables and filter
    /// banks train.
    pub fn new<R: Rng>(
        config: EncoderConfig,
        table_rows: usize,
        store: &mut ParamStore,
        rng: &mut R,
    ) -> Result<Self> {
        let std = config.init_std;
        let word = store.add(
            "encoder.word_emb",
            normal_tensor(vec![table_rows, config.word_dim], std, rng),
            false,
        )?;
        let positions = 2 * config.max_distance + 1;
        let pos_i = store.add(
            "encoder.pos_i_emb",
            normal_tensor(vec![positions, config.position_dim], std, rng),
            true,
        )?;
        let pos_j = store.add(
            "encoder.pos_j_emb",
            normal_tensor(vec![positions, config.position_dim], std, rng),
            true,
        )?;
        let c_in = config.input_dim();
        let mut banks = Vec::with_capacity(config.widths.len());
        for &w in &config.widths {
            let weight = store.add(
                &format!("encoder.conv{w}.weight"),
                xavier_tensor(vec![w, c_in, config.channels], w * c_in, config.channels, rng),
                true,
            )?;
            let bias = store.add(
                &format!("encoder.conv{w}.bias"),
                Tensor::zeros(vec![config.channels]),
                true,
            )?;
            banks.push((weight, bias));
        }
        Ok(Encoder {
            config,
            word,
            pos_i,
            pos_j,
            banks,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn output_dim(&self) -> usize {
        self.config.output_dim()
    }

    pub fn bind(&self, g: &mut Graph, store: &ParamStore, track: bool) -> EncoderVars {
        EncoderVars {
            pos_i: store.bind(g, self.pos_i, track),
            pos_j: store.bind(g, self.pos_j, track),
            banks: self
                .banks
                .iter()
                .map(|&(w, b)| (store.bind(g, w, track), store.bind(g, b, track)))
                .collect(),
        }
    }

    /// Pairs each bound parameter with its graph variable.
    pub(crate) fn bound_params(&self, vars: &EncoderVars) -> Vec<(ParamId, Var)> {
        let mut out = vec![(self.pos_i, vars.pos_i), (self.pos_j, vars.pos_j)];
        for (&(w, b), &(vw, vb)) in self.banks.iter().zip(&vars.banks) {
            out.push((w, vw));
            out.push((b, vb));
        }
        out
    }

    /// Encodes one sentence into a nonnegative vector of `output_dim()`.
    pub fn encode(
        &self,
        g: &mut Graph,
        vars: &EncoderVars,
        store: &ParamStore,
        sentence: &EncodedSentence,
    ) -> Result<Var> {
        let len = sentence.tokens.len();
        if len == 0 {
            return Err(EncoderError::EmptySentence);
        }
        let table = store.value(self.word);
        let (rows, dim) = (table.shape()[0], table.shape()[1]);
        let mut words = Vec::with_capacity(len * dim);
        for &t in &sentence.tokens {
            if t as usize >= rows {
                return Err(EncoderError::UnknownToken { token: t, rows });
            }
            words.extend_from_slice(table.row(t as usize));
        }
        let words = g.constant(Tensor::matrix(len, dim, words)?);

        let p = self.config.max_distance;
        let offsets = |span: Span| -> Vec<usize> {
            (0..len)
                .map(|t| (relative_position(t, span, p) + p as i64) as usize)
                .collect()
        };
        let pi = g.gather(vars.pos_i, &offsets(sentence.mention_i))?;
        let pj = g.gather(vars.pos_j, &offsets(sentence.mention_j))?;
        let input = g.concat(&[words, pi, pj])?;

        let mut pooled = Vec::with_capacity(vars.banks.len());
        for &(w, b) in &vars.banks {
            let conv = g.conv1d(input, w, b)?;
            pooled.push(g.max_axis0(conv)?);
        }
        let joined = g.concat(&pooled)?;
        Ok(g.relu(joined))
    }

    /// Overwrites rows of the frozen word table from a JSON object mapping
    /// token ids to vectors.
    pub fn load_embeddings(&self, store: &mut ParamStore, json: &str) -> Result<usize> {
        let rows: BTreeMap<String, Vec<f64>> =
            serde_json::from_str(json).map_err(|e| EncoderError::EmbeddingFile(e.to_string()))?;
        let table = &mut store.get_mut(self.word).value;
        let (n, dim) = (table.shape()[0], table.shape()[1]);
        for (key, vec) in &rows {
            let id: usize = key
                .parse()
                .map_err(|_| EncoderError::EmbeddingFile(format!("bad token id `{key}`")))?;
            if id >= n {
                return Err(EncoderError::UnknownToken {
                    token: id as u32,
                    rows: n,
                });
            }
            if vec.len() != dim {
                return Err(EncoderError::EmbeddingFile(format!(
                    "token {id}: expected {dim} values, found {}",
                    vec.len()
                )));
            }
            table.data_mut()[id * dim..(id + 1) * dim].copy_from_slice(vec);
        }
        Ok(rows.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::gradcheck::check_gradients;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_config() -> EncoderConfig {
        EncoderConfig {
            word_dim: 4,
            position_dim: 2,
            widths: vec![2, 3],
            channels: 3,
            max_distance: 5,
            init_std: 0.5,
        }
    }

    fn setup() -> (Encoder, ParamStore) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let enc = Encoder::new(small_config(), 20, &mut store, &mut rng).unwrap();
        (enc, store)
    }

    fn sentence(tokens: &[u32]) -> EncodedSentence {
        EncodedSentence {
            tokens: tokens.to_vec(),
            mention_i: Span(0, 1),
            mention_j: Span(tokens.len() - 1, tokens.len()),
        }
    }

    #[test]
    fn relative_positions() {
        assert_eq!(relative_position(4, Span(3, 6), 50), 0);
        assert_eq!(relative_position(2, Span(5, 6), 50), -3);
        assert_eq!(relative_position(206, Span(3, 6), 50), 50);
        assert_eq!(relative_position(6, Span(3, 6), 50), 1);
    }

    #[test]
    fn output_is_nonnegative_and_full_width() {
        let (enc, store) = setup();
        for tokens in [&[3u32][..], &[1, 2, 3, 4, 5, 6, 7]] {
            let mut g = Graph::new();
            let vars = enc.bind(&mut g, &store, false);
            let s = EncodedSentence {
                tokens: tokens.to_vec(),
                mention_i: Span(0, 1),
                mention_j: Span(0, 1),
            };
            let x = enc.encode(&mut g, &vars, &store, &s).unwrap();
            assert_eq!(g.shape(x), &[6]);
            assert!(g.value(x).data().iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn unknown_token_is_rejected() {
        let (enc, store) = setup();
        let mut g = Graph::new();
        let vars = enc.bind(&mut g, &store, false);
        assert!(matches!(
            enc.encode(&mut g, &vars, &store, &sentence(&[1, 20])),
            Err(EncoderError::UnknownToken { token: 20, rows: 20 })
        ));
    }

    #[test]
    fn filter_gradients_match_finite_differences() {
        let (enc, store) = setup();
        let s = sentence(&[5, 9, 2, 11, 7]);
        let readout: Vec<f64> = (0..6).map(|i| 0.3 * i as f64 - 0.7).collect();
        let weights: Vec<Tensor> = enc
            .banks
            .iter()
            .flat_map(|&(w, b)| [store.value(w).clone(), store.value(b).clone()])
            .collect();
        let report = check_gradients(&weights, 1e-5, |g, vars| {
            let mut ev = enc.bind(g, &store, false);
            ev.banks = vars.chunks(2).map(|c| (c[0], c[1])).collect();
            let x = enc.encode(g, &ev, &store, &s).map_err(|e| match e {
                EncoderError::Tensor(t) => t,
                other => panic!("{other}"),
            })?;
            let r = g.constant(Tensor::vector(readout.clone()));
            g.dot(x, r)
        })
        .unwrap();
        assert!(report.relative_error < 1e-4, "{}", report.relative_error);
    }

    #[test]
    fn embedding_file_overrides_rows() {
        let (enc, mut store) = setup();
        let n = enc
            .load_embeddings(&mut store, r#"{"3": [1.0, 2.0, 3.0, 4.0]}"#)
            .unwrap();
        assert_eq!(n, 1);
        assert_eq!(store.value(enc.word).row(3), &[1.0, 2.0, 3.0, 4.0]);
        assert!(enc.load_embeddings(&mut store, r#"{"3": [1.0]}"#).is_err());
        assert!(enc.load_embeddings(&mut store, r#"{"99": [1,2,3,4]}"#).is_err());
    }
}
