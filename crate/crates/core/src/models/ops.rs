//! Bag-level building blocks, as graph operations and as plain functions
//! over `f64` slices. The plain versions run the graph versions on constants.

use crate::tensor::{Graph, Result as TensorResult, Tensor, TensorError, Var};

fn as_column(g: &mut Graph, v: Var) -> TensorResult<Var> {
    let n = g.value(v).numel();
    g.reshape(v, vec![n, 1])
}

/// `x_n · w` for every row of `encodings: [n, d]`.
pub fn row_dots(g: &mut Graph, encodings: Var, w: Var) -> TensorResult<Var> {
    let col = as_column(g, w)?;
    let s = g.matmul(encodings, col)?;
    let n = g.shape(encodings)[0];
    g.reshape(s, vec![n])
}

/// Relevance weights `α_n = sigmoid(w · x_n + b)`.
pub fn directsup_weights_g(g: &mut Graph, encodings: Var, w: Var, b: Var) -> TensorResult<Var> {
    let s = row_dots(g, encodings, w)?;
    let s = g.add_scalar(s, b)?;
    Ok(g.sigmoid(s))
}

/// Elementwise max over the weighted rows `α_n x_n`.
pub fn directsup_bag_rep_g(g: &mut Graph, encodings: Var, alpha: Var) -> TensorResult<Var> {
    let weighted = g.row_scale(encodings, alpha)?;
    g.max_axis0(weighted)
}

/// Selective attention `softmax_n(x_n · (A ∘ q_k))` with `A` stored as its
/// diagonal.
pub fn attention_weights_g(g: &mut Graph, encodings: Var, query: Var, diag: Var) -> TensorResult<Var> {
    let u = g.mul(query, diag)?;
    let s = row_dots(g, encodings, u)?;
    g.softmax(s)
}

/// `Σ_n α_n x_n`.
pub fn att_bag_rep_g(g: &mut Graph, encodings: Var, alpha: Var) -> TensorResult<Var> {
    let n = g.shape(encodings)[0];
    let d = g.shape(encodings)[1];
    if g.shape(alpha) != [n] {
        return Err(TensorError::ShapeMismatch {
            kernel: "att_bag_rep",
            left: vec![n, d],
            right: g.shape(alpha).to_vec(),
        });
    }
    let row = g.reshape(alpha, vec![1, n])?;
    let z = g.matmul(row, encodings)?;
    g.reshape(z, vec![d])
}

/// Logit `o_k = rep · r_k + b_k`, shape `[1]`.
pub fn logit_g(g: &mut Graph, rep: Var, relation: Var, bias: Var) -> TensorResult<Var> {
    let o = g.dot(rep, relation)?;
    g.add_scalar(o, bias)
}

/// `relu(W [rep; v_i − v_j; v_i ∘ v_j] + b)`.
pub fn fuse_entities_g(
    g: &mut Graph,
    rep: Var,
    v_i: &[f64],
    v_j: &[f64],
    weight: Var,
    bias: Var,
) -> TensorResult<Var> {
    let pre = fusion_preactivation_g(g, rep, v_i, v_j, weight, bias)?;
    Ok(g.relu(pre))
}

pub(crate) fn fusion_preactivation_g(
    g: &mut Graph,
    rep: Var,
    v_i: &[f64],
    v_j: &[f64],
    weight: Var,
    bias: Var,
) -> TensorResult<Var> {
    if v_i.len() != v_j.len() {
        return Err(TensorError::ShapeMismatch {
            kernel: "fuse_entities",
            left: vec![v_i.len()],
            right: vec![v_j.len()],
        });
    }
    let diff = g.constant(Tensor::vector(v_i.iter().zip(v_j).map(|(a, b)| a - b).collect()));
    let prod = g.constant(Tensor::vector(v_i.iter().zip(v_j).map(|(a, b)| a * b).collect()));
    let feat = g.concat(&[rep, diff, prod])?;
    let col = as_column(g, feat)?;
    let out = g.matmul(weight, col)?;
    let d = g.shape(weight)[0];
    let out = g.reshape(out, vec![d])?;
    g.add(out, bias)
}

fn matrix(g: &mut Graph, rows: &[Vec<f64>]) -> TensorResult<Var> {
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(TensorError::InvalidShape {
            kernel: "encodings",
            shape: rows.iter().map(Vec::len).collect(),
        });
    }
    let data = rows.iter().flatten().copied().collect();
    Ok(g.constant(Tensor::matrix(rows.len(), d, data)?))
}

fn vector(g: &mut Graph, v: &[f64]) -> Var {
    g.constant(Tensor::vector(v.to_vec()))
}

pub fn directsup_weights(encodings: &[Vec<f64>], w: &[f64], b: f64) -> TensorResult<Vec<f64>> {
    let mut g = Graph::new();
    let x = matrix(&mut g, encodings)?;
    let w = vector(&mut g, w);
    let b = g.constant(Tensor::scalar(b));
    let a = directsup_weights_g(&mut g, x, w, b)?;
    Ok(g.value(a).data().to_vec())
}

pub fn directsup_bag_rep(encodings: &[Vec<f64>], alpha: &[f64]) -> TensorResult<Vec<f64>> {
    let mut g = Graph::new();
    let x = matrix(&mut g, encodings)?;
    let a = vector(&mut g, alpha);
    let z = directsup_bag_rep_g(&mut g, x, a)?;
    Ok(g.value(z).data().to_vec())
}

pub fn attention_weights(encodings: &[Vec<f64>], query: &[f64], diag: &[f64]) -> TensorResult<Vec<f64>> {
    let mut g = Graph::new();
    let x = matrix(&mut g, encodings)?;
    let q = vector(&mut g, query);
    let a = vector(&mut g, diag);
    let w = attention_weights_g(&mut g, x, q, a)?;
    Ok(g.value(w).data().to_vec())
}

pub fn att_bag_rep(encodings: &[Vec<f64>], alpha: &[f64]) -> TensorResult<Vec<f64>> {
    let mut g = Graph::new();
    let x = matrix(&mut g, encodings)?;
    let a = vector(&mut g, alpha);
    let z = att_bag_rep_g(&mut g, x, a)?;
    Ok(g.value(z).data().to_vec())
}

/// Returns `(P(r = k | B), o_k)`.
pub fn predict(rep: &[f64], relation: &[f64], bias: f64) -> TensorResult<(f64, f64)> {
    let mut g = Graph::new();
    let z = vector(&mut g, rep);
    let r = vector(&mut g, relation);
    let b = g.constant(Tensor::scalar(bias));
    let o = logit_g(&mut g, z, r, b)?;
    let p = g.sigmoid(o);
    Ok((g.value(p).data()[0], g.value(o).data()[0]))
}

pub fn fuse_entities(
    rep: &[f64],
    v_i: &[f64],
    v_j: &[f64],
    weight: &Tensor,
    bias: &[f64],
) -> TensorResult<Vec<f64>> {
    let mut g = Graph::new();
    let z = vector(&mut g, rep);
    let w = g.constant(weight.clone());
    let b = vector(&mut g, bias);
    let h = fuse_entities_g(&mut g, z, v_i, v_j, w, b)?;
    Ok(g.value(h).data().to_vec())
}

const BCE_EPS: f64 = 1e-12;

/// Summed binary cross entropy over every (bag, relation) probability,
/// with probabilities clamped to `[1e-12, 1 - 1e-12]`.
pub fn bce_loss(probabilities: &[f64], labels: &[bool]) -> f64 {
    probabilities
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
            if y {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::gradcheck::check_gradients;
    use std::f64::consts::LN_2;

    #[test]
    fn zero_relevance_classifier_gives_half() {
        let x = vec![vec![1.0, 2.0], vec![0.0, 5.0]];
        assert_eq!(directsup_weights(&x, &[0.0, 0.0], 0.0).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn identical_encodings_identical_weights() {
        let x = vec![vec![0.3, 0.2], vec![0.3, 0.2]];
        let a = directsup_weights(&x, &[1.5, -0.5], 0.1).unwrap();
        assert_eq!(a[0], a[1]);
    }

    #[test]
    fn relevance_at_ln3_is_three_quarters() {
        let x = vec![vec![3f64.ln()]];
        let a = directsup_weights(&x, &[1.0], 0.0).unwrap();
        assert!((a[0] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn directsup_rep_examples() {
        let x = vec![vec![2.0, 0.0], vec![4.0, 4.0]];
        assert_eq!(directsup_bag_rep(&x, &[1.0, 0.5]).unwrap(), vec![2.0, 2.0]);
        assert_eq!(directsup_bag_rep(&x[..1], &[0.25]).unwrap(), vec![0.5, 0.0]);
        let swapped = vec![x[1].clone(), x[0].clone()];
        assert_eq!(directsup_bag_rep(&swapped, &[0.5, 1.0]).unwrap(), vec![2.0, 2.0]);
    }

    #[test]
    fn attention_examples() {
        let x = vec![vec![0.4, 0.1]];
        assert_eq!(attention_weights(&x, &[1.0, 2.0], &[1.0, 1.0]).unwrap(), vec![1.0]);
        let x = vec![vec![0.4, 0.1], vec![0.4, 0.1]];
        assert_eq!(attention_weights(&x, &[1.0, 2.0], &[1.0, 1.0]).unwrap(), vec![0.5, 0.5]);
        let x = vec![vec![2f64.ln()], vec![0.0]];
        let a = attention_weights(&x, &[1.0], &[1.0]).unwrap();
        assert!((a[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((a[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn att_rep_examples() {
        let x = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(att_bag_rep(&x, &[1.0, 0.0]).unwrap(), vec![1.0, 0.0]);
        assert_eq!(att_bag_rep(&x, &[0.5, 0.5]).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn predict_examples() {
        assert_eq!(predict(&[1.0, -1.0], &[1.0, 1.0], 0.0).unwrap(), (0.5, 0.0));
        let (p, _) = predict(&[3.0, 7.0], &[0.0, 0.0], 0.4).unwrap();
        assert!((p - 1.0 / (1.0 + (-0.4f64).exp())).abs() < 1e-15);
        let (p, o) = predict(&[9f64.ln()], &[1.0], 0.0).unwrap();
        assert!((p - 0.9).abs() < 1e-15);
        assert!((o - 9f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn fusion_difference_block_vanishes_for_equal_entities() {
        let w = Tensor::matrix(1, 3, vec![0.0, 1.0, 0.0]).unwrap();
        let h = fuse_entities(&[5.0], &[0.7], &[0.7], &w, &[0.0]).unwrap();
        assert_eq!(h, vec![0.0]);
        let w = Tensor::matrix(2, 3, vec![-1.0, 2.0, 0.5, 1.0, -3.0, 0.1]).unwrap();
        let h = fuse_entities(&[0.2], &[0.3], &[-0.4], &w, &[0.0, -0.1]).unwrap();
        assert!(h.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn fusion_weight_gradient_matches_finite_differences() {
        let w = Tensor::matrix(2, 6, vec![0.3, -0.2, 0.5, 0.1, -0.4, 0.7, 0.6, 0.2, -0.3, 0.4, 0.2, -0.1]).unwrap();
        let b = Tensor::vector(vec![0.05, 0.1]);
        let report = check_gradients(&[w, b], 1e-5, |g, v| {
            let z = g.constant(Tensor::vector(vec![0.8, 0.3]));
            let h = fuse_entities_g(g, z, &[0.5, -0.2], &[0.1, 0.9], v[0], v[1])?;
            let r = g.constant(Tensor::vector(vec![1.0, -0.5]));
            g.dot(h, r)
        })
        .unwrap();
        assert!(report.relative_error < 1e-4);
    }

    #[test]
    fn bce_examples() {
        assert!((bce_loss(&[0.5], &[true]) - LN_2).abs() < 1e-15);
        assert!(bce_loss(&[1.0], &[true]) < 1e-11);
        assert!((bce_loss(&[0.5, 0.5], &[true, false]) - 2.0 * LN_2).abs() < 1e-15);
    }
}
