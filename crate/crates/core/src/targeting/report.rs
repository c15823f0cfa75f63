use serde::{Deserialize, Serialize};

use super::TargetingConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    ToleranceMet,
    MaxIters,
    NoLossImprovement,
    /// A solver or model error ended the run; the trace is partial.
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    /// `P_n[D*_proj]` for each target parameter.
    pub mean_dproj: Vec<f64>,
    /// Standard deviation of `D*_proj` for each target parameter.
    pub sd_dproj: Vec<f64>,
    pub eta_n: Vec<f64>,
    /// Step size taken after this record, if a step was taken.
    pub gamma: Option<f64>,
    /// Norm of the combined update direction.
    pub alpha_norm: f64,
    pub projection_residual_norm: Vec<f64>,
    pub train_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalEstimate {
    pub label: String,
    pub psi: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetingReport {
    pub config: TargetingConfig,
    pub iterations: Vec<IterationRecord>,
    pub converged: bool,
    pub reason: StopReason,
    pub error: Option<String>,
    pub estimates: Vec<FinalEstimate>,
    /// Free-form notes such as fallbacks or clipping counts.
    pub notes: Vec<String>,
}

impl TargetingReport {
    pub fn new(config: TargetingConfig) -> Self {
        TargetingReport {
            config,
            iterations: Vec::new(),
            converged: false,
            reason: StopReason::MaxIters,
            error: None,
            estimates: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.iterations.last()
    }

    /// Number of parameter updates actually applied.
    pub fn steps_taken(&self) -> usize {
        self.iterations.iter().filter(|r| r.gamma.is_some()).count()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}
