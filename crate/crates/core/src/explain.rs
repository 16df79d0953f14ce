//! Sentence importance for a relation: attention weights, saliency,
//! gradient×input and leave-one-out, all taken with respect to the sentence
//! encodings of a frozen model.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Bag, BagId, EntityId, RelationId};
use crate::models::{Model, Result};
use crate::tensor::Graph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Attention,
    Saliency,
    Gi,
    Loo,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Attention, Method::Saliency, Method::Gi, Method::Loo];

    pub fn name(self) -> &'static str {
        match self {
            Method::Attention => "attention",
            Method::Saliency => "saliency",
            Method::Gi => "gi",
            Method::Loo => "loo",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown method `{s}` (expected attention, saliency, gi or loo)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceScores {
    pub bag_id: BagId,
    pub relation: RelationId,
    pub method: Method,
    pub scores: Vec<f64>,
}

/// `∂o_k/∂x_n` for every sentence encoding.
pub fn logit_gradients(
    model: &Model,
    encodings: &[Vec<f64>],
    entities: (EntityId, EntityId),
    k: RelationId,
) -> Result<Vec<Vec<f64>>> {
    let mut g = Graph::new();
    let mv = model.bind(&mut g, false);
    let rows = Model::encoding_leaves(&mut g, encodings, true);
    let o = model.relation_logit(&mut g, &mv, &rows, entities, k)?;
    g.backward(o)?;
    Ok(rows
        .iter()
        .map(|&r| g.grad(r).expect("leaf requires grad").to_vec())
        .collect())
}

/// `Σ_i |∂o_k/∂x_n[i]|`.
pub fn saliency_from_encodings(
    model: &Model,
    encodings: &[Vec<f64>],
    entities: (EntityId, EntityId),
    k: RelationId,
) -> Result<Vec<f64>> {
    let grads = logit_gradients(model, encodings, entities, k)?;
    Ok(grads.iter().map(|g| g.iter().map(|v| v.abs()).sum()).collect())
}

/// `Σ_i x_n[i] ∂o_k/∂x_n[i]`.
pub fn grad_input_from_encodings(
    model: &Model,
    encodings: &[Vec<f64>],
    entities: (EntityId, EntityId),
    k: RelationId,
) -> Result<Vec<f64>> {
    let grads = logit_gradients(model, encodings, entities, k)?;
    Ok(grads
        .iter()
        .zip(encodings)
        .map(|(g, x)| g.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect())
}

/// `o_k − o_{k,−n}`, recomputing the relation-k logit without sentence n.
/// Removing the only sentence leaves the zero representation.
pub fn leave_one_out_from_encodings(
    model: &Model,
    encodings: &[Vec<f64>],
    entities: (EntityId, EntityId),
    k: RelationId,
) -> Result<Vec<f64>> {
    let full = model.relation_logit_from_encodings(encodings, entities, k)?;
    (0..encodings.len())
        .map(|n| {
            let rest: Vec<Vec<f64>> = encodings
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != n)
                .map(|(_, e)| e.clone())
                .collect();
            Ok(full - model.relation_logit_from_encodings(&rest, entities, k)?)
        })
        .collect()
}

/// Attention weights for relation `k`, or the relevance probabilities of a
/// DirectSup model (the same for every relation).
pub fn attention_from_encodings(model: &Model, encodings: &[Vec<f64>], k: RelationId) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let mv = model.bind(&mut g, false);
    let rows = Model::encoding_leaves(&mut g, encodings, false);
    let w = model.importance(&mut g, &mv, &rows, k)?;
    Ok(g.value(w).data().to_vec())
}

pub fn scores_from_encodings(
    model: &Model,
    encodings: &[Vec<f64>],
    entities: (EntityId, EntityId),
    k: RelationId,
    method: Method,
) -> Result<Vec<f64>> {
    match method {
        Method::Attention => attention_from_encodings(model, encodings, k),
        Method::Saliency => saliency_from_encodings(model, encodings, entities, k),
        Method::Gi => grad_input_from_encodings(model, encodings, entities, k),
        Method::Loo => leave_one_out_from_encodings(model, encodings, entities, k),
    }
}

/// Scores of several methods for one (bag, relation), encoding the bag once.
pub fn explain_bag(model: &Model, bag: &Bag, k: RelationId, methods: &[Method]) -> Result<Vec<ImportanceScores>> {
    let encodings = model.encode_values(bag)?;
    methods
        .iter()
        .map(|&method| {
            Ok(ImportanceScores {
                bag_id: bag.bag_id,
                relation: k,
                method,
                scores: scores_from_encodings(model, &encodings, bag.entities(), k, method)?,
            })
        })
        .collect()
}

pub fn explain(model: &Model, bag: &Bag, k: RelationId, method: Method) -> Result<ImportanceScores> {
    Ok(explain_bag(model, bag, k, &[method])?.remove(0))
}

pub fn saliency(model: &Model, bag: &Bag, k: RelationId) -> Result<ImportanceScores> {
    explain(model, bag, k, Method::Saliency)
}

pub fn grad_input(model: &Model, bag: &Bag, k: RelationId) -> Result<ImportanceScores> {
    explain(model, bag, k, Method::Gi)
}

pub fn leave_one_out(model: &Model, bag: &Bag, k: RelationId) -> Result<ImportanceScores> {
    explain(model, bag, k, Method::Loo)
}

pub fn attention_explanation(model: &Model, bag: &Bag, k: RelationId) -> Result<ImportanceScores> {
    explain(model, bag, k, Method::Attention)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::test_support::{bag, sentence};
    use crate::encoder::EncoderConfig;
    use crate::models::test_support::{encodings, tiny_config};
    use crate::models::{ModelError, ModelKind};
    use crate::tensor::Tensor;

    /// Single-sentence attention model with `d = 3`, so `o_k = r_k·x + b_k`.
    fn linear_model(w: &[f64], bias: f64) -> Model {
        let mut c = tiny_config(ModelKind::CnnsAtt, false);
        c.encoder = EncoderConfig {
            widths: vec![2],
            channels: 3,
            ..c.encoder
        };
        let mut m = Model::new(c, 0).unwrap();
        let store = m.params_mut();
        let id = store.id("rel_emb").unwrap();
        store.get_mut(id).value.data_mut()[..3].copy_from_slice(w);
        let id = store.id("rel_bias").unwrap();
        store.get_mut(id).value = Tensor::vector(vec![bias, 0.0, 0.0]);
        m
    }

    #[test]
    fn linear_head_analytic_values() {
        let m = linear_model(&[1.0, -2.0, 3.0], 0.0);
        let x = vec![vec![1.0, 1.0, 1.0]];
        assert_eq!(saliency_from_encodings(&m, &x, (0, 1), 0).unwrap(), vec![6.0]);
        assert_eq!(grad_input_from_encodings(&m, &x, (0, 1), 0).unwrap(), vec![2.0]);
        let o = m.relation_logit_from_encodings(&x, (0, 1), 0).unwrap();
        assert_eq!(o, 2.0);
        assert_eq!(grad_input_from_encodings(&m, &[vec![0.0; 3]], (0, 1), 0).unwrap(), vec![0.0]);
        let x = vec![vec![0.3, 1.7, 0.2]];
        let gi = grad_input_from_encodings(&m, &x, (0, 1), 0).unwrap()[0];
        let o = m.relation_logit_from_encodings(&x, (0, 1), 0).unwrap();
        assert!((gi - o).abs() < 1e-12);
    }

    #[test]
    fn single_sentence_loo_drops_to_bias() {
        let m = linear_model(&[0.5, 0.5, -1.0], 0.25);
        let x = vec![vec![2.0, 1.0, 0.5]];
        let o = m.relation_logit_from_encodings(&x, (0, 1), 0).unwrap();
        assert_eq!(leave_one_out_from_encodings(&m, &x, (0, 1), 0).unwrap(), vec![o - 0.25]);
    }

    #[test]
    fn loo_equals_two_pass_oracle() {
        for kind in [ModelKind::CnnsAtt, ModelKind::DirectSup] {
            let m = Model::new(tiny_config(kind, true), 1).unwrap();
            let enc = encodings(4, m.encoding_dim(), 0.3);
            let loo = leave_one_out_from_encodings(&m, &enc, (1, 2), 2).unwrap();
            for n in 0..4 {
                let mut rest = enc.clone();
                rest.remove(n);
                let mut g = Graph::new();
                let mv = m.bind(&mut g, false);
                let rows = Model::encoding_leaves(&mut g, &enc, false);
                let full = m.relation_logit(&mut g, &mv, &rows, (1, 2), 2).unwrap();
                let rows = Model::encoding_leaves(&mut g, &rest, false);
                let part = m.relation_logit(&mut g, &mv, &rows, (1, 2), 2).unwrap();
                assert_eq!(loo[n], g.value(full).data()[0] - g.value(part).data()[0]);
            }
        }
    }

    #[test]
    fn identical_sentences_under_max_pooling_have_zero_loo() {
        let m = Model::new(tiny_config(ModelKind::DirectSup, false), 2).unwrap();
        let x = encodings(1, m.encoding_dim(), 0.5);
        let twice = vec![x[0].clone(), x[0].clone()];
        assert_eq!(leave_one_out_from_encodings(&m, &twice, (0, 1), 1).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn sentence_outside_every_max_has_zero_saliency() {
        let m = Model::new(tiny_config(ModelKind::DirectSup, false), 2).unwrap();
        let mut enc = encodings(1, m.encoding_dim(), 0.5);
        enc.push(vec![0.0; m.encoding_dim()]);
        assert_eq!(saliency_from_encodings(&m, &enc, (0, 1), 0).unwrap()[1], 0.0);
    }

    #[test]
    fn attention_properties() {
        let m = Model::new(tiny_config(ModelKind::CnnsAtt, false), 2).unwrap();
        let enc = encodings(3, m.encoding_dim(), 0.7);
        let a = attention_from_encodings(&m, &enc, 1).unwrap();
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(attention_from_encodings(&m, &enc[..1], 0).unwrap(), vec![1.0]);
        let d = Model::new(tiny_config(ModelKind::DirectSup, false), 2).unwrap();
        let enc = encodings(3, d.encoding_dim(), 0.7);
        assert_eq!(
            attention_from_encodings(&d, &enc, 0).unwrap(),
            attention_from_encodings(&d, &enc, 2).unwrap()
        );
    }

    #[test]
    fn saliency_matches_finite_differences() {
        for kind in [ModelKind::CnnsAtt, ModelKind::DirectSup] {
            let m = Model::new(tiny_config(kind, true), 6).unwrap();
            let enc = encodings(3, m.encoding_dim(), 0.9);
            let grads = logit_gradients(&m, &enc, (0, 3), 1).unwrap();
            let h = 1e-5;
            for n in 0..3 {
                let mut fd = 0.0;
                for i in 0..enc[n].len() {
                    let mut up = enc.clone();
                    up[n][i] += h;
                    let mut down = enc.clone();
                    down[n][i] -= h;
                    let d = (m.relation_logit_from_encodings(&up, (0, 3), 1).unwrap()
                        - m.relation_logit_from_encodings(&down, (0, 3), 1).unwrap())
                        / (2.0 * h);
                    assert!((d - grads[n][i]).abs() <= 1e-4 * d.abs().max(1e-3));
                    fd += d.abs();
                }
                let s = saliency_from_encodings(&m, &enc, (0, 3), 1).unwrap()[n];
                assert!((fd - s).abs() < 1e-4 * s.max(1e-3));
            }
        }
    }

    #[test]
    fn explaining_leaves_parameters_untouched() {
        let m = Model::new(tiny_config(ModelKind::DirectSup, true), 3).unwrap();
        let before = m.params().to_json().unwrap();
        let b = bag(4, &[1], vec![sentence(&[1, 2, 3, 4], (0, 1), (2, 3)), sentence(&[5, 6, 7], (2, 3), (0, 1))]);
        let all = explain_bag(&m, &b, 1, &Method::ALL).unwrap();
        assert_eq!(all.len(), 4);
        assert!(all.iter().all(|s| s.scores.len() == 2 && s.bag_id == 4));
        assert_eq!(m.params().to_json().unwrap(), before);
        assert!(matches!(
            explain(&m, &b, 3, Method::Gi),
            Err(ModelError::RelationOutOfRange { .. })
        ));
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.name()));
        }
    }
}
