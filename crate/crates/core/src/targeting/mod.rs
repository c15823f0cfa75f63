//! Projection-based targeting of a network parameter subset.
//!
//! Each iteration computes per-sample scores of the targeted parameters,
//! regresses the influence function(s) on them, and moves the targeted
//! parameters along the resulting direction until the empirical mean of
//! every projected influence function falls below its tolerance.

mod direct;
mod engine;
mod project;
mod report;
mod selection;

pub use direct::{tda_direct, DirectFit};
pub use engine::{
    combine_directions, stopping_threshold, LOSS_SLACK, targeting_step, tda_run, tda_run_multi, Candidate,
    InfluenceSource, NetSubmodel, StepOutcome, Submodel,
};
pub use project::{project_influence, Projection, Projector};
pub use report::{FinalEstimate, IterationRecord, StopReason, TargetingReport};
pub use selection::{block_gradients, mean_output_gradient, plateau_select, RankedBlock, PLATEAU_REL_TOL};

use serde::{Deserialize, Serialize};

use crate::error::{Result, TdaError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Penalty {
    L1,
    L2,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// Fixed step size.
    Fixed { gamma: f64 },
    /// Candidates `gamma0 * 2^-j` for `j = 0..=halvings`.
    LineSearch { gamma0: f64, halvings: u32 },
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule::LineSearch {
            gamma0: 1.0,
            halvings: 12,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetingConfig {
    pub lambda: f64,
    pub penalty: Penalty,
    pub max_iters: usize,
    pub step_rule: StepRule,
}

impl TargetingConfig {
    /// L2 with `λ = 0.01`, 100 iterations.
    pub fn ate_default() -> Self {
        TargetingConfig {
            lambda: 0.01,
            penalty: Penalty::L2,
            max_iters: 100,
            step_rule: StepRule::default(),
        }
    }

    /// L1 with `λ = 1e-5`, 200 iterations.
    pub fn survival_default() -> Self {
        TargetingConfig {
            lambda: 1e-5,
            penalty: Penalty::L1,
            max_iters: 200,
            step_rule: StepRule::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(TdaError::Config("max_iters must be at least 1".into()));
        }
        match self.penalty {
            Penalty::L1 if !(self.lambda > 0.0) => {
                return Err(TdaError::Config("L1 penalty needs lambda > 0".into()))
            }
            Penalty::L2 if !(self.lambda >= 0.0) => {
                return Err(TdaError::Config("L2 penalty needs lambda >= 0".into()))
            }
            _ => {}
        }
        match self.step_rule {
            StepRule::Fixed { gamma } if !(gamma > 0.0) => {
                Err(TdaError::Config("fixed step needs gamma > 0".into()))
            }
            StepRule::LineSearch { gamma0, .. } if !(gamma0 > 0.0) => {
                Err(TdaError::Config("line search needs gamma0 > 0".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Empirical mean and (n − 1) standard deviation.
pub(crate) fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
