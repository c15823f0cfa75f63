//! Monte-Carlo harness: data provisioning, replication driver, metrics
//! and persisted outputs.

pub mod ate_bench;
pub mod ihdp;
pub mod metrics;
pub mod persist;
pub mod survival_bench;

pub use ate_bench::{ate_replication, run_ate_methods, AteBenchConfig};
pub use ihdp::{ihdp_synthesize, IhdpConfig};
pub use metrics::{quantile, summarize, MethodRecord, MethodSummary, ReplicationRecord, SummaryTable};
pub use persist::{
    bands, load_records, outperformance, persist, resummarize, Bands, Manifest, Outperformance, Override, Provenance,
};
pub use survival_bench::{run_survival_methods, survival_replication, SurvivalBenchConfig};

use rayon::prelude::*;

use crate::ate::AteDataset;
use crate::error::{Result, TdaError};
use crate::survival::TimeGrid;

/// Runs `f` for every replication index on a pool of `workers` threads and
/// returns the results in replication order.
pub fn run_replications<F>(replications: usize, workers: usize, f: F) -> Result<Vec<ReplicationRecord>>
where
    F: Fn(usize) -> ReplicationRecord + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| TdaError::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| {
        (0..replications)
            .into_par_iter()
            .map(|rep| {
                let r = f(rep);
                log::info!(
                    "replication {}/{} {}",
                    rep + 1,
                    replications,
                    if r.error.is_none() { "done" } else { "failed" }
                );
                r
            })
            .collect()
    }))
}

#[derive(Clone, Debug)]
pub struct BenchOutput {
    pub records: Vec<ReplicationRecord>,
    pub summary: SummaryTable,
}

pub fn run_ate_bench(cfg: &AteBenchConfig) -> Result<BenchOutput> {
    cfg.validate()?;
    let base = match &cfg.data {
        Some(path) => Some(AteDataset::from_csv(path)?),
        None => None,
    };
    let records = run_replications(cfg.replications, cfg.workers, |rep| {
        ate_replication(cfg, base.as_ref(), rep)
    })?;
    let summary = summarize(&records)?;
    Ok(BenchOutput { records, summary })
}

/// Survival benchmark on the standard 50-point grid; the true curve is
/// computed once and shared by all replications.
pub fn run_survival_bench(cfg: &SurvivalBenchConfig) -> Result<BenchOutput> {
    cfg.validate()?;
    let grid = TimeGrid::standard();
    let truth = cfg.truth(&grid)?;
    let records = run_replications(cfg.replications, cfg.workers, |rep| {
        survival_replication(cfg, &grid, &truth, rep)
    })?;
    let summary = summarize(&records)?;
    Ok(BenchOutput { records, summary })
}
