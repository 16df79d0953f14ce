//! Central finite-difference gradient checking.

use super::{Graph, Result, Tensor, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    /// Largest entrywise deviation divided by the larger infinity norm of the
    /// two gradients.
    pub relative_error: f64,
    pub analytic: Vec<Vec<f64>>,
    pub numeric: Vec<Vec<f64>>,
}

/// Compares reverse-mode gradients of the scalar built by `f` against
/// central differences with step `h`, for every input tensor.
pub fn check_gradients<F>(inputs: &[Tensor], h: f64, f: F) -> Result<GradCheck>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let root = f(&mut g, &vars)?;
    g.backward(root)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .map(|&v| g.grad(v).expect("leaf gradient").to_vec())
        .collect();

    let eval = |perturbed: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = perturbed.iter().map(|t| g.constant(t.clone())).collect();
        let root = f(&mut g, &vars)?;
        Ok(g.value(root).data()[0])
    };

    let mut numeric = Vec::with_capacity(inputs.len());
    let mut work = inputs.to_vec();
    for t in 0..inputs.len() {
        let mut col = Vec::with_capacity(inputs[t].numel());
        for i in 0..inputs[t].numel() {
            let orig = work[t].data()[i];
            work[t].data_mut()[i] = orig + h;
            let plus = eval(&work)?;
            work[t].data_mut()[i] = orig - h;
            let minus = eval(&work)?;
            work[t].data_mut()[i] = orig;
            col.push((plus - minus) / (2.0 * h));
        }
        numeric.push(col);
    }

    Ok(GradCheck {
        relative_error: relative_error(&analytic, &numeric),
        analytic,
        numeric,
    })
}

pub fn relative_error(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let flat_a = a.iter().flatten();
    let flat_b = b.iter().flatten();
    let mut diff: f64 = 0.0;
    let mut scale: f64 = 1e-10;
    for (x, y) in flat_a.zip(flat_b) {
        diff = diff.max((x - y).abs());
        scale = scale.max(x.abs()).max(y.abs());
    }
    diff / scale
}
