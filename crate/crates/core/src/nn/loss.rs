use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TdaError};

/// Per-sample loss attached to a scalar network output.
///
/// * `Mse`: `(f - y)^2`.
/// * `Bce`: binary cross-entropy on a probability output.
/// * `Poisson`: output is a log-hazard `eta`; the loss is
///   `tau * exp(eta) - delta * (eta + ln tau)` with `delta` the target and
///   `tau` the exposure (time at risk).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Mse,
    Bce,
    Poisson,
}

const PROB_FLOOR: f64 = 1e-12;

impl LossKind {
    pub fn value(self, output: f64, target: f64, exposure: f64) -> f64 {
        match self {
            LossKind::Mse => (output - target).powi(2),
            LossKind::Bce => {
                let p = output.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
                -(target * p.ln() + (1.0 - target) * (1.0 - p).ln())
            }
            LossKind::Poisson => exposure * output.exp() - target * (output + exposure.ln()),
        }
    }

    /// Derivative of the loss with respect to the network output.
    pub fn derivative(self, output: f64, target: f64, exposure: f64) -> f64 {
        match self {
            LossKind::Mse => 2.0 * (output - target),
            LossKind::Bce => {
                let p = output.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
                (p - target) / (p * (1.0 - p))
            }
            LossKind::Poisson => exposure * output.exp() - target,
        }
    }
}

/// Samples fed to a scalar-output network: one input row, target and
/// exposure per sample. Exposure is only read by the Poisson loss.
#[derive(Clone, Debug)]
pub struct Batch {
    pub inputs: Array2<f64>,
    pub targets: Vec<f64>,
    pub exposure: Vec<f64>,
    pub ids: Vec<usize>,
}

impl Batch {
    pub fn new(inputs: Array2<f64>, targets: Vec<f64>) -> Result<Self> {
        let n = inputs.nrows();
        Batch::with_exposure(inputs, targets, vec![1.0; n])
    }

    pub fn with_exposure(inputs: Array2<f64>, targets: Vec<f64>, exposure: Vec<f64>) -> Result<Self> {
        let n = inputs.nrows();
        for len in [targets.len(), exposure.len()] {
            if len != n {
                return Err(TdaError::Shape {
                    expected: n,
                    actual: len,
                });
            }
        }
        Ok(Batch {
            inputs,
            targets,
            exposure,
            ids: (0..n).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn select(&self, rows: &[usize]) -> Batch {
        Batch {
            inputs: self.inputs.select(ndarray::Axis(0), rows),
            targets: rows.iter().map(|&r| self.targets[r]).collect(),
            exposure: rows.iter().map(|&r| self.exposure[r]).collect(),
            ids: rows.iter().map(|&r| self.ids[r]).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-6;
        for kind in [LossKind::Mse, LossKind::Bce, LossKind::Poisson] {
            for &(f, y, tau) in &[(0.3, 1.0, 0.7), (0.8, 0.0, 2.0), (-0.4, 1.0, 0.2)] {
                let f = if kind == LossKind::Bce { f64::abs(f) } else { f };
                let fd = (kind.value(f + h, y, tau) - kind.value(f - h, y, tau)) / (2.0 * h);
                let an = kind.derivative(f, y, tau);
                assert!((fd - an).abs() < 1e-6 * (1.0 + an.abs()), "{kind:?}: {fd} vs {an}");
            }
        }
    }
}
