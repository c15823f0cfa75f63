use ndarray::{ArrayView1, ArrayView2};

use super::{Penalty, TargetingConfig};
use crate::error::{Result, TdaError};
use crate::linalg::{LassoGram, RidgeFactor};
use crate::nn::ScoreMatrix;

/// Result of regressing one influence vector on the score matrix.
#[derive(Clone, Debug)]
pub struct Projection {
    pub alpha: Vec<f64>,
    pub projected: Vec<f64>,
    /// `‖D − projected‖ / √n`.
    pub residual_norm: f64,
}

/// A score matrix prepared for projecting several influence vectors.
pub struct Projector<'a> {
    scores: ArrayView2<'a, f64>,
    solver: Solver,
}

enum Solver {
    Ridge(RidgeFactor),
    Lasso { gram: LassoGram, lambda: f64 },
}

impl<'a> Projector<'a> {
    pub fn new(scores: &'a ScoreMatrix, cfg: &TargetingConfig) -> Result<Self> {
        let view = scores.values.view();
        let solver = match cfg.penalty {
            Penalty::L2 => Solver::Ridge(RidgeFactor::new(view, cfg.lambda)?),
            Penalty::L1 => Solver::Lasso {
                gram: LassoGram::new(view)?,
                lambda: cfg.lambda,
            },
        };
        Ok(Projector {
            scores: view,
            solver,
        })
    }

    pub fn project(&self, d: &[f64]) -> Result<Projection> {
        let n = self.scores.nrows();
        if d.len() != n {
            return Err(TdaError::Shape {
                expected: n,
                actual: d.len(),
            });
        }
        let alpha = match &self.solver {
            Solver::Ridge(f) => f.solve(d)?,
            Solver::Lasso { gram, lambda } => {
                let corr = gram.correlations(self.scores, d)?;
                let rr = d.iter().map(|v| v * v).sum::<f64>() / n as f64;
                gram.solve(&corr, rr, *lambda)?.alpha
            }
        };
        let projected = self.scores.dot(&ArrayView1::from(&alpha)).to_vec();
        let resid = d
            .iter()
            .zip(&projected)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        Ok(Projection {
            alpha,
            projected,
            residual_norm: resid / (n as f64).sqrt(),
        })
    }
}

/// Penalised regression of `d` on the rows of `scores`.
pub fn project_influence(d: &[f64], scores: &ScoreMatrix, cfg: &TargetingConfig) -> Result<Projection> {
    Projector::new(scores, cfg)?.project(d)
}
