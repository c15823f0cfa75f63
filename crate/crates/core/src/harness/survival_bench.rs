//! Monte-Carlo benchmark of marginal survival curve estimators.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::metrics::{MethodRecord, ReplicationRecord};
use crate::ate::Z_95;
use crate::error::{Result, TdaError};
use crate::rng::stream;
use crate::survival::{
    fit_hazard, km_estimate, simulate, survival_curves, target_survival_curve, true_marginal_survival, DgpParams,
    HazardModelSpec, SurvivalDataset, TimeGrid, G_MIN,
};
use crate::targeting::TargetingConfig;

/// Plug-in curve from the fitted hazard network.
pub const INITIAL: &str = "initial";
/// Kaplan–Meier with Greenwood intervals.
pub const KM: &str = "km";
/// Targeted curve.
pub const TDA: &str = "tda";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurvivalBenchConfig {
    pub replications: usize,
    pub seed: u64,
    pub workers: usize,
    pub n: usize,
    pub targeting: TargetingConfig,
    pub hazard: HazardModelSpec,
    pub dgp: DgpParams,
    /// Floor on estimated censoring survival in the IPCW weights.
    pub g_min: f64,
    /// Reference sample size and integration refinement for the true curve.
    pub truth_n: usize,
    pub truth_substeps: usize,
    pub truth_seed: u64,
}

impl Default for SurvivalBenchConfig {
    fn default() -> Self {
        SurvivalBenchConfig {
            replications: 50,
            seed: 2025,
            workers: 1,
            n: 1000,
            targeting: TargetingConfig::survival_default(),
            hazard: HazardModelSpec::default(),
            dgp: DgpParams::default(),
            g_min: G_MIN,
            truth_n: 20_000,
            truth_substeps: 20,
            truth_seed: 7,
        }
    }
}

impl SurvivalBenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications < 1 {
            return Err(TdaError::Config("replications must be at least 1".into()));
        }
        if self.workers < 1 {
            return Err(TdaError::Config("workers must be at least 1".into()));
        }
        if self.n < 10 {
            return Err(TdaError::Config(format!("n must be at least 10, got {}", self.n)));
        }
        if !(self.g_min > 0.0 && self.g_min <= 1.0) {
            return Err(TdaError::Config(format!("g_min must lie in (0, 1], got {}", self.g_min)));
        }
        if self.truth_n < 1 || self.truth_substeps < 1 {
            return Err(TdaError::Config("truth sample and substeps must be positive".into()));
        }
        self.targeting.validate()?;
        self.dgp.validate()
    }

    pub fn truth(&self, grid: &TimeGrid) -> Result<Vec<f64>> {
        true_marginal_survival(&self.dgp, grid, self.truth_n, self.truth_substeps, self.truth_seed)
    }
}

#[allow(clippy::too_many_arguments)]
fn curve_record(
    method: &str,
    estimate: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    truth: &[f64],
    converged: Option<bool>,
    iterations: Option<usize>,
    seconds: f64,
) -> MethodRecord {
    MethodRecord {
        method: method.to_string(),
        estimate,
        lower,
        upper,
        truth: truth.to_vec(),
        converged,
        iterations,
        seconds,
    }
}

/// Initial, Kaplan–Meier and targeted curves for one dataset.
pub fn run_survival_methods(
    data: &SurvivalDataset,
    cfg: &SurvivalBenchConfig,
    grid: &TimeGrid,
    truth: &[f64],
    rng: &mut crate::rng::TdaRng,
) -> Result<Vec<MethodRecord>> {
    let (train, val) = data.split(rng);
    let x = data.x.view();
    let started = Instant::now();
    let hazard = fit_hazard(x, &data.time, &data.event, &train, &val, grid, &cfg.hazard, rng)?;
    let censored: Vec<bool> = data.event.iter().map(|e| !e).collect();
    let censoring = fit_hazard(x, &data.time, &censored, &train, &val, grid, &cfg.hazard, rng)?;
    let g_hat = survival_curves(&censoring.net, x, grid)?;
    let fit_secs = started.elapsed().as_secs_f64();

    let t0 = Instant::now();
    let fit = target_survival_curve(&hazard.net, x, &data.time, &data.event, &g_hat, grid, &cfg.targeting, cfg.g_min)?;
    let target_secs = t0.elapsed().as_secs_f64();

    let t0 = Instant::now();
    let km = km_estimate(&data.time, &data.event, grid)?;
    let (km_lo, km_hi) = km.ci(Z_95);
    let km_secs = t0.elapsed().as_secs_f64();
    if km.degenerate {
        log::debug!("Greenwood degenerate term used");
    }

    let steps = fit.report.steps_taken();
    Ok(vec![
        curve_record(
            INITIAL,
            fit.initial.survival,
            fit.initial.lower,
            fit.initial.upper,
            truth,
            None,
            None,
            fit_secs,
        ),
        curve_record(KM, km.survival, km_lo, km_hi, truth, None, None, km_secs),
        curve_record(
            TDA,
            fit.targeted.survival,
            fit.targeted.lower,
            fit.targeted.upper,
            truth,
            Some(fit.report.converged),
            Some(steps),
            fit_secs + target_secs,
        ),
    ])
}

/// One replication on its own generator stream; errors are captured.
pub fn survival_replication(cfg: &SurvivalBenchConfig, grid: &TimeGrid, truth: &[f64], rep: usize) -> ReplicationRecord {
    let mut rng = stream(cfg.seed, rep as u64);
    let result = simulate(cfg.n, &cfg.dgp, &mut rng)
        .and_then(|data| run_survival_methods(&data, cfg, grid, truth, &mut rng));
    match result {
        Ok(methods) => ReplicationRecord {
            replication: rep,
            error: None,
            methods,
            times: Some(grid.points().to_vec()),
        },
        Err(e) => {
            log::warn!("replication {rep} failed: {e}");
            ReplicationRecord {
                replication: rep,
                error: Some(e.to_string()),
                methods: Vec::new(),
                times: Some(grid.points().to_vec()),
            }
        }
    }
}
