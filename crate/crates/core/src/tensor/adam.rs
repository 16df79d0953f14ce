use serde::{Deserialize, Serialize};

use super::{ParamStore, Result, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias correction. Moment buffers are aligned with the parameter
/// order of the store they were created for.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = store
            .iter()
            .map(|(_, p)| vec![0.0; p.value.numel()])
            .collect();
        Adam {
            config,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update to every trainable parameter, then zeroes the
    /// gradients.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        if store.len() != self.first.len() {
            return Err(TensorError::ShapeMismatch {
                kernel: "adam",
                left: vec![self.first.len()],
                right: vec![store.len()],
            });
        }
        if let Some((_, p)) = store.iter().find(|(_, p)| p.trainable && p.grad.is_none()) {
            return Err(TensorError::MissingGrad(p.name.clone()));
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (i, p) in store.params_mut().iter_mut().enumerate() {
            if !p.trainable {
                continue;
            }
            let grad = p.grad.as_mut().expect("checked above");
            let (m, v) = (&mut self.first[i], &mut self.second[i]);
            for (((w, g), m), v) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(grad.iter_mut())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *m = beta1 * *m + (1.0 - beta1) * *g;
                *v = beta2 * *v + (1.0 - beta2) * *g * *g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + epsilon);
                *g = 0.0;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn store(values: &[f64]) -> (ParamStore, Vec<crate::tensor::ParamId>) {
        let mut s = ParamStore::new();
        let ids = values
            .iter()
            .enumerate()
            .map(|(i, &v)| s.add(&format!("p{i}"), Tensor::scalar(v), true).unwrap())
            .collect();
        (s, ids)
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let (mut s, ids) = store(&[0.7]);
        s.accumulate_grad(ids[0], &[0.0]).unwrap();
        let mut adam = Adam::new(AdamConfig::default(), &s);
        adam.step(&mut s).unwrap();
        assert_eq!(s.value(ids[0]).data(), &[0.7]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let (mut s, ids) = store(&[1.0]);
        s.accumulate_grad(ids[0], &[1.0]).unwrap();
        let mut adam = Adam::new(AdamConfig::default(), &s);
        adam.step(&mut s).unwrap();
        // m_hat = v_hat = 1, so the update is lr / (1 + eps)
        let expected = 1.0 - 0.001 / (1.0 + 1e-8);
        assert!((s.value(ids[0]).data()[0] - expected).abs() < 1e-15);
        assert!((s.value(ids[0]).data()[0] - 0.999).abs() < 1e-9);
        assert_eq!(s.get(ids[0]).grad.as_deref(), Some(&[0.0][..]));
    }

    #[test]
    fn identical_params_stay_identical() {
        let (mut s, ids) = store(&[0.3, 0.3]);
        let mut adam = Adam::new(AdamConfig::default(), &s);
        for step in 0..50 {
            let g = (step as f64 * 0.37).sin();
            s.accumulate_grad(ids[0], &[g]).unwrap();
            s.accumulate_grad(ids[1], &[g]).unwrap();
            adam.step(&mut s).unwrap();
            assert_eq!(s.value(ids[0]), s.value(ids[1]));
        }
        assert_eq!(adam.steps(), 50);
    }

    #[test]
    fn missing_gradient_is_an_error() {
        let (mut s, _) = store(&[1.0]);
        let mut adam = Adam::new(AdamConfig::default(), &s);
        assert_eq!(adam.step(&mut s), Err(TensorError::MissingGrad("p0".into())));
    }
}
