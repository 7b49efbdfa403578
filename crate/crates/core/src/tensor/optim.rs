//! Adam optimizer over flat parameter lists.

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Result, SdnError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, rename_all = "kebab-case")]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam with bias correction. One instance tracks one parameter list; the
/// slot order passed to [`Adam::step`] must stay stable across calls.
#[derive(Debug)]
pub struct Adam {
    cfg: AdamConfig,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Self {
        Self { cfg, t: 0, m: Vec::new(), v: Vec::new() }
    }

    /// Applies one update. `grads[i]` pairs with `params[i]`; a `None` grad
    /// means no gradient reached that parameter this step and is treated as
    /// zero (moments still decay).
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Option<&Tensor>]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(SdnError::Training(format!(
                "{} parameters but {} gradients",
                params.len(),
                grads.len()
            )));
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.v = params.iter().map(|p| vec![0.0; p.len()]).collect();
        } else if self.m.len() != params.len() {
            return Err(SdnError::Training(format!(
                "optimizer state tracks {} parameters, got {}",
                self.m.len(),
                params.len()
            )));
        }
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.cfg;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for (slot, (param, grad)) in params.iter_mut().zip(grads).enumerate() {
            if let Some(g) = grad {
                if g.len() != param.len() {
                    return Err(SdnError::Training(format!(
                        "parameter {slot}: gradient shape {:?} vs parameter {:?}",
                        g.shape(),
                        param.shape()
                    )));
                }
                if !g.is_finite() {
                    return Err(SdnError::Training(format!(
                        "parameter {slot}: non-finite gradient"
                    )));
                }
            }
            let m = &mut self.m[slot];
            let v = &mut self.v[slot];
            for (i, p) in param.data_mut().iter_mut().enumerate() {
                let g = grad.map_or(0.0, |g| g.data()[i]);
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                *p -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }

    /// Number of updates applied so far.
    pub fn steps(&self) -> u64 {
        self.t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_has_learning_rate_magnitude() {
        // With bias correction the first update is lr * g / (|g| + eps').
        let mut adam = Adam::new(AdamConfig::default());
        let mut p = Tensor::from_vec(&[2], vec![1.0, -1.0]).unwrap();
        let g = Tensor::from_vec(&[2], vec![10.0, -0.01]).unwrap();
        adam.step(&mut [&mut p], &[Some(&g)]).unwrap();
        assert!((p.data()[0] - (1.0 - 1e-3)).abs() < 1e-6);
        assert!((p.data()[1] - (-1.0 + 1e-3)).abs() < 1e-6);
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn minimizes_a_quadratic() {
        // f(p) = (p - 3)^2, grad = 2(p - 3).
        let mut adam = Adam::new(AdamConfig { lr: 0.1, ..AdamConfig::default() });
        let mut p = Tensor::scalar(0.0);
        for _ in 0..500 {
            let g = Tensor::scalar(2.0 * (p.data()[0] - 3.0));
            adam.step(&mut [&mut p], &[Some(&g)]).unwrap();
        }
        assert!((p.data()[0] - 3.0).abs() < 0.05, "got {}", p.data()[0]);
    }

    #[test]
    fn rejects_nonfinite_gradient() {
        let mut adam = Adam::new(AdamConfig::default());
        let mut p = Tensor::scalar(0.0);
        let g = Tensor::scalar(f64::NAN);
        assert!(adam.step(&mut [&mut p], &[Some(&g)]).is_err());
    }

    #[test]
    fn rejects_shape_drift() {
        let mut adam = Adam::new(AdamConfig::default());
        let mut p = Tensor::zeros(&[3]);
        let g = Tensor::zeros(&[2]);
        assert!(adam.step(&mut [&mut p], &[Some(&g)]).is_err());
    }

    #[test]
    fn missing_gradient_decays_moments() {
        let mut adam = Adam::new(AdamConfig::default());
        let mut p = Tensor::scalar(1.0);
        let g = Tensor::scalar(1.0);
        adam.step(&mut [&mut p], &[Some(&g)]).unwrap();
        let after_first = p.data()[0];
        adam.step(&mut [&mut p], &[None]).unwrap();
        // Momentum keeps moving the parameter in the same direction.
        assert!(p.data()[0] < after_first);
    }
}
