//! Monte-Carlo benchmark of the ATE estimators.

use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::ihdp::{ihdp_synthesize, IhdpConfig};
use super::metrics::{MethodRecord, ReplicationRecord};
use crate::ate::{
    aipw_ate, fit_dragonnet, plugin_ate, post_tmle, tda_ate, tda_direct_ate, treg_estimate, AteDataset, AteEstimate,
    AteInfluence, AteMethod, HeadPartition, Nuisance,
};
use crate::error::{Result, TdaError};
use crate::nn::TrainConfig;
use crate::rng::{stream, TdaRng};
use crate::targeting::TargetingConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AteBenchConfig {
    pub replications: usize,
    pub seed: u64,
    pub workers: usize,
    pub methods: Vec<AteMethod>,
    pub targeting: TargetingConfig,
    /// Submodel used by `tda_full`.
    pub full_partition: HeadPartition,
    /// Influence values projected by `tda_last` / `tda_full`.
    pub influence: AteInfluence,
    /// Weight of the targeted-regularisation term for `treg`.
    pub treg_lambda: f64,
    pub train: TrainConfig,
    pub ihdp: IhdpConfig,
    /// Optional CSV with `mu0`/`mu1` columns; when set every replication
    /// reuses it (fresh split and initialisation) instead of simulating.
    pub data: Option<PathBuf>,
    /// Estimate and target on the validation rows only (sample splitting)
    /// instead of the full sample; the truth is then the validation-row ATE.
    pub heldout_targeting: bool,
}

impl Default for AteBenchConfig {
    fn default() -> Self {
        AteBenchConfig {
            replications: 100,
            seed: 2025,
            workers: 1,
            methods: AteMethod::ALL.to_vec(),
            targeting: TargetingConfig::ate_default(),
            full_partition: HeadPartition::OutcomeHeads,
            influence: AteInfluence::default(),
            treg_lambda: 0.01,
            train: TrainConfig::default(),
            ihdp: IhdpConfig::default(),
            data: None,
            heldout_targeting: false,
        }
    }
}

impl AteBenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications < 1 {
            return Err(TdaError::Config("replications must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(TdaError::Config("at least one method is required".into()));
        }
        if self.workers < 1 {
            return Err(TdaError::Config("workers must be at least 1".into()));
        }
        self.targeting.validate()?;
        self.ihdp.validate()
    }
}

fn record(est: &AteEstimate, truth: f64, iterations: Option<usize>, started: Instant) -> MethodRecord {
    MethodRecord {
        method: est.method.name().to_string(),
        estimate: vec![est.psi],
        lower: vec![est.ci_lower],
        upper: vec![est.ci_upper],
        truth: vec![truth],
        converged: est.converged,
        iterations,
        seconds: started.elapsed().as_secs_f64(),
    }
}

/// Runs every requested estimator on one dataset.
pub fn run_ate_methods(
    data: &AteDataset,
    cfg: &AteBenchConfig,
    rng: &mut TdaRng,
) -> Result<Vec<MethodRecord>> {
    if data.true_ate.is_none() {
        return Err(TdaError::Schema {
            column: "mu0".into(),
            message: "benchmarks need ground-truth mu0/mu1".into(),
        });
    }
    let split = data.split(rng);
    let started = Instant::now();
    let base = fit_dragonnet(data, &split, &cfg.train, None, rng)?;
    let base_secs = started.elapsed();
    let fit_data = data;
    let heldout;
    let data = if cfg.heldout_targeting {
        heldout = fit_data.subset(&split.validation)?;
        &heldout
    } else {
        fit_data
    };
    let truth = data.true_ate.expect("checked above");
    let pred = base.model.predict(data.x.view())?;
    let nu = Nuisance::new(&pred.g, pred.q0.clone(), pred.q1.clone())?;
    let mut out = Vec::new();
    for &method in &cfg.methods {
        let t0 = Instant::now() - base_secs;
        let (est, iters) = match method {
            AteMethod::Plugin => (plugin_ate(&nu, &data.a, &data.y)?, None),
            AteMethod::Aipw => (aipw_ate(&nu, &data.a, &data.y)?, None),
            AteMethod::PostTmle => (post_tmle(&nu, &data.a, &data.y)?.0, None),
            AteMethod::Treg => {
                let t = Instant::now();
                let fit = fit_dragonnet(fit_data, &split, &cfg.train, Some(cfg.treg_lambda), rng)?;
                let est = treg_estimate(&fit.model, fit.epsilon.unwrap_or(0.0), &data.x, &data.a, &data.y)?;
                out.push(record(&est, truth, None, t));
                continue;
            }
            AteMethod::TdaLast | AteMethod::TdaFull => {
                let part = if method == AteMethod::TdaLast {
                    HeadPartition::LastLayer
                } else {
                    cfg.full_partition.clone()
                };
                let fit = tda_ate(&base.model, &data.x, &data.a, &data.y, &part, method, cfg.influence, &cfg.targeting)?;
                let steps = fit.report.steps_taken();
                (fit.estimate, Some(steps))
            }
            AteMethod::TdaDirect => (tda_direct_ate(&base.model, &data.x, &data.a, &data.y)?.0, None),
        };
        out.push(record(&est, truth, iters, t0));
    }
    Ok(out)
}

/// One replication: simulate (or reuse) data, fit, estimate. Errors are
/// captured in the record rather than propagated.
pub fn ate_replication(cfg: &AteBenchConfig, base: Option<&AteDataset>, rep: usize) -> ReplicationRecord {
    let mut rng = stream(cfg.seed, rep as u64);
    let result = (|| -> Result<Vec<MethodRecord>> {
        let owned;
        let data = match base {
            Some(d) => d,
            None => {
                owned = ihdp_synthesize(&cfg.ihdp, &mut rng)?;
                &owned
            }
        };
        run_ate_methods(data, cfg, &mut rng)
    })();
    match result {
        Ok(methods) => ReplicationRecord {
            replication: rep,
            error: None,
            methods,
            times: None,
        },
        Err(e) => {
            log::warn!("replication {rep} failed: {e}");
            ReplicationRecord {
                replication: rep,
                error: Some(e.to_string()),
                methods: Vec::new(),
                times: None,
            }
        }
    }
}
