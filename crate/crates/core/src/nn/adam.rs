use serde::{Deserialize, Serialize};

use crate::error::{Result, TdaError};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled: applied to the weights directly, not through the gradient.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-5,
        }
    }
}

/// Adam moments and step counter for one parameter vector.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step_count: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, n_params: usize) -> Self {
        AdamState {
            config,
            first_moment: vec![0.0; n_params],
            second_moment: vec![0.0; n_params],
            step_count: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.second_moment
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        let n = self.first_moment.len();
        for len in [params.len(), grad.len()] {
            if len != n {
                return Err(TdaError::Shape {
                    expected: n,
                    actual: len,
                });
            }
        }
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for i in 0..n {
            let g = grad[i];
            let m = beta1 * self.first_moment[i] + (1.0 - beta1) * g;
            let v = beta2 * self.second_moment[i] + (1.0 - beta2) * g * g;
            self.first_moment[i] = m;
            self.second_moment[i] = v;
            let m_hat = m / c1;
            let v_hat = v / c2;
            params[i] -= lr * (m_hat / (v_hat.sqrt() + eps) + weight_decay * params[i]);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_decay() -> AdamConfig {
        AdamConfig {
            weight_decay: 0.0,
            ..AdamConfig::default()
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut st = AdamState::new(no_decay(), 3);
        let mut p = vec![1.0, -2.0, 0.5];
        st.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
        assert_eq!(st.step_count(), 1);
    }

    #[test]
    fn first_step_moves_lr_against_sign() {
        for (b1, b2) in [(0.9, 0.999), (0.5, 0.7), (0.0, 0.0)] {
            let cfg = AdamConfig {
                beta1: b1,
                beta2: b2,
                ..no_decay()
            };
            let mut st = AdamState::new(cfg, 3);
            let mut p = vec![0.0; 3];
            st.step(&mut p, &[3.0, -0.2, 1e3]).unwrap();
            for (pi, s) in p.iter().zip([-1.0, 1.0, -1.0]) {
                assert!((pi - s * cfg.lr).abs() < 1e-6 * cfg.lr, "{pi}");
            }
        }
    }

    #[test]
    fn constant_gradient_moves_monotonically() {
        let mut st = AdamState::new(no_decay(), 1);
        let mut p = vec![0.0];
        let mut prev = 0.0;
        for _ in 0..2 {
            st.step(&mut p, &[0.4]).unwrap();
            assert!(p[0] < prev);
            prev = p[0];
        }
    }

    #[test]
    fn moments_start_at_zero_and_lengths_checked() {
        let mut st = AdamState::new(AdamConfig::default(), 2);
        assert!(st.first_moment().iter().all(|&m| m == 0.0));
        assert!(st.second_moment().iter().all(|&m| m == 0.0));
        assert!(st.step(&mut [0.0; 3], &[0.0; 3]).is_err());
    }
}
