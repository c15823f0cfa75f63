use std::path::Path;

use serde::{Deserialize, Serialize};
use tda_core::ate::{
    fit_dragonnet, tda_ate, AteDataset, AteInfluence, AteMethod, DragonNet, HeadPartition,
};
use tda_core::harness::{
    ihdp_synthesize, persist, resummarize, run_ate_bench, run_survival_bench, AteBenchConfig, IhdpConfig, Manifest,
    Override, Provenance, SurvivalBenchConfig,
};
use tda_core::nn::{checkpoint, TrainConfig};
use tda_core::rng::seeded;
use tda_core::survival::{
    fit_hazard, simulate as simulate_survival, survival_curves, target_survival_curve, write_metadata, DatasetMetadata,
    DgpParams, HazardModelSpec, SurvivalDataset, TimeGrid, G_MIN,
};
use tda_core::targeting::{Penalty, TargetingConfig};
use tda_core::TdaError;

use crate::config::Layered;
use crate::{AteBenchArgs, CliError, CommonArgs, ReportArgs, SimulateArgs, SurvivalBenchArgs, TargetArgs, TargetingArgs, Task};

pub const REPORT_FILE: &str = "targeting_report.json";
pub const MODEL_FILE: &str = "model.json";
pub const TARGETED_MODEL_FILE: &str = "targeted_model.json";
pub const CURVE_FILE: &str = "curve.csv";
pub const DATA_FILE: &str = "data.csv";

/// Validation failures of an accepted-but-inconsistent configuration are
/// usage errors; everything else is a runtime failure.
fn classify(e: TdaError) -> CliError {
    match e {
        TdaError::Config(msg) => CliError::Usage(msg),
        other => CliError::Runtime(other.into()),
    }
}

fn layered<C: Serialize>(defaults: &C, common: &CommonArgs) -> Result<Layered, CliError> {
    let mut l = Layered::new(defaults)?;
    if let Some(path) = &common.config {
        l.merge_file(path)?;
    }
    l.seed_from_env("seed", common.seed)?;
    if let Some(seed) = common.seed {
        l.set("seed", seed, Provenance::Flag)?;
    }
    Ok(l)
}

fn apply_targeting(l: &mut Layered, prefix: &str, t: &TargetingArgs) -> Result<(), CliError> {
    if let Some(v) = t.lambda {
        l.set(&format!("{prefix}.lambda"), v, Provenance::Flag)?;
    }
    if let Some(v) = t.penalty {
        l.set(&format!("{prefix}.penalty"), Penalty::from(v), Provenance::Flag)?;
    }
    if let Some(v) = t.tmax {
        l.set(&format!("{prefix}.max_iters"), v, Provenance::Flag)?;
    }
    Ok(())
}

fn set_opt<V: Serialize>(l: &mut Layered, key: &str, v: Option<V>) -> Result<(), CliError> {
    match v {
        Some(v) => l.set(key, v, Provenance::Flag),
        None => Ok(()),
    }
}

/// Writes the manifest before any heavy computation starts.
fn start<C: Serialize>(
    command: &str,
    config: &C,
    seed: u64,
    common: &CommonArgs,
    overrides: Vec<Override>,
) -> Result<(), CliError> {
    std::fs::create_dir_all(&common.out)?;
    let mut manifest = Manifest::new(command, config, Some(seed))?;
    manifest.config_file = common.config.clone();
    manifest.overrides = overrides;
    let path = manifest.write(&common.out)?;
    log::info!("manifest written to {}", path.display());
    Ok(())
}

fn print_written(paths: &[std::path::PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

pub fn ate_bench(a: AteBenchArgs) -> Result<(), CliError> {
    let mut l = layered(&AteBenchConfig::default(), &a.common)?;
    apply_targeting(&mut l, "targeting", &a.targeting)?;
    set_opt(&mut l, "replications", a.replications)?;
    set_opt(&mut l, "ihdp.n", a.n)?;
    set_opt(&mut l, "methods", a.methods)?;
    set_opt(&mut l, "full_partition", a.partition)?;
    set_opt(&mut l, "workers", a.workers)?;
    set_opt(&mut l, "data", a.data)?;
    let (cfg, overrides): (AteBenchConfig, _) = l.build()?;
    cfg.validate().map_err(classify)?;
    start("ate-bench", &cfg, cfg.seed, &a.common, overrides)?;
    let out = run_ate_bench(&cfg)?;
    let written = persist(&out.records, &out.summary, &a.common.out, AteMethod::TdaLast.name())?;
    print_written(&written);
    Ok(())
}

pub fn survival_bench(a: SurvivalBenchArgs) -> Result<(), CliError> {
    let mut l = layered(&SurvivalBenchConfig::default(), &a.common)?;
    apply_targeting(&mut l, "targeting", &a.targeting)?;
    set_opt(&mut l, "replications", a.replications)?;
    set_opt(&mut l, "n", a.n)?;
    set_opt(&mut l, "workers", a.workers)?;
    let (cfg, overrides): (SurvivalBenchConfig, _) = l.build()?;
    cfg.validate().map_err(classify)?;
    start("survival-bench", &cfg, cfg.seed, &a.common, overrides)?;
    let out = run_survival_bench(&cfg)?;
    let written = persist(&out.records, &out.summary, &a.common.out, tda_core::harness::survival_bench::TDA)?;
    print_written(&written);
    Ok(())
}

/// Settings of `target --task ate`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AteTargetConfig {
    pub seed: u64,
    pub partition: HeadPartition,
    pub influence: AteInfluence,
    pub targeting: TargetingConfig,
    /// Training settings used when no model checkpoint is given.
    pub train: TrainConfig,
}

impl Default for AteTargetConfig {
    fn default() -> Self {
        AteTargetConfig {
            seed: 2025,
            partition: HeadPartition::LastLayer,
            influence: AteInfluence::default(),
            targeting: TargetingConfig::ate_default(),
            train: TrainConfig::default(),
        }
    }
}

/// Settings of `target --task survival`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SurvivalTargetConfig {
    pub seed: u64,
    pub targeting: TargetingConfig,
    /// Architecture and training of the hazard and censoring networks.
    pub hazard: HazardModelSpec,
    pub g_min: f64,
}

impl Default for SurvivalTargetConfig {
    fn default() -> Self {
        SurvivalTargetConfig {
            seed: 2025,
            targeting: TargetingConfig::survival_default(),
            hazard: HazardModelSpec::default(),
            g_min: G_MIN,
        }
    }
}

pub fn target(a: TargetArgs) -> Result<(), CliError> {
    match a.task {
        Task::Ate => target_ate(a),
        Task::Survival => target_survival(a),
    }
}

fn write_report(report: &tda_core::targeting::TargetingReport, dir: &Path) -> Result<(), CliError> {
    let path = dir.join(REPORT_FILE);
    std::fs::write(&path, report.to_json())?;
    println!("wrote {}", path.display());
    println!("converged: {}", report.converged);
    Ok(())
}

fn target_ate(a: TargetArgs) -> Result<(), CliError> {
    let mut l = layered(&AteTargetConfig::default(), &a.common)?;
    apply_targeting(&mut l, "targeting", &a.targeting)?;
    set_opt(&mut l, "partition", a.partition.clone())?;
    let (cfg, overrides): (AteTargetConfig, _) = l.build()?;
    cfg.targeting.validate().map_err(classify)?;
    start("target", &cfg, cfg.seed, &a.common, overrides)?;

    let data = AteDataset::from_csv(&a.data)?;
    let mut rng = seeded(cfg.seed);
    let (model, trained) = match &a.model {
        Some(path) => (DragonNet::load(path)?, false),
        None => {
            log::info!("no model given; training one on {}", a.data.display());
            let split = data.split(&mut rng);
            let fit = fit_dragonnet(&data, &split, &cfg.train, None, &mut rng)?;
            let path = a.common.out.join(MODEL_FILE);
            fit.model.save(&path)?;
            println!("wrote {}", path.display());
            (fit.model, true)
        }
    };
    if model.trunk.input_dim() != data.n_covariates() {
        return Err(CliError::Runtime(anyhow::anyhow!(
            "model expects {} covariates, data has {}",
            model.trunk.input_dim(),
            data.n_covariates()
        )));
    }
    let method = if cfg.partition == HeadPartition::LastLayer {
        AteMethod::TdaLast
    } else {
        AteMethod::TdaFull
    };
    let mut fit = tda_ate(&model, &data.x, &data.a, &data.y, &cfg.partition, method, cfg.influence, &cfg.targeting)?;
    if trained {
        fit.report.notes.push("initial model trained by the target command".into());
    }
    let path = a.common.out.join(TARGETED_MODEL_FILE);
    fit.model.save(&path)?;
    println!("wrote {}", path.display());
    write_report(&fit.report, &a.common.out)?;
    println!(
        "ate: {:.6} [{:.6}, {:.6}]",
        fit.estimate.psi, fit.estimate.ci_lower, fit.estimate.ci_upper
    );
    Ok(())
}

fn target_survival(a: TargetArgs) -> Result<(), CliError> {
    if let Some(p) = &a.partition {
        if *p != HeadPartition::LastLayer {
            return Err(CliError::Usage(format!(
                "survival targeting supports --partition last-layer only, got {p}"
            )));
        }
    }
    let mut l = layered(&SurvivalTargetConfig::default(), &a.common)?;
    apply_targeting(&mut l, "targeting", &a.targeting)?;
    let (cfg, overrides): (SurvivalTargetConfig, _) = l.build()?;
    cfg.targeting.validate().map_err(classify)?;
    if !(cfg.g_min > 0.0 && cfg.g_min <= 1.0) {
        return Err(CliError::Usage(format!("g_min must lie in (0, 1], got {}", cfg.g_min)));
    }
    start("target", &cfg, cfg.seed, &a.common, overrides)?;

    let data = SurvivalDataset::from_csv(&a.data)?;
    let grid = TimeGrid::standard();
    let mut rng = seeded(cfg.seed);
    let (train, val) = data.split(&mut rng);
    let x = data.x.view();
    let (net, trained) = match &a.model {
        Some(path) => (checkpoint::load(path)?, false),
        None => {
            log::info!("no model given; training a hazard network on {}", a.data.display());
            let fit = fit_hazard(x, &data.time, &data.event, &train, &val, &grid, &cfg.hazard, &mut rng)?;
            let path = a.common.out.join(MODEL_FILE);
            checkpoint::save(&fit.net, &path)?;
            println!("wrote {}", path.display());
            (fit.net, true)
        }
    };
    if net.input_dim() != data.n_covariates() + 1 {
        return Err(CliError::Runtime(anyhow::anyhow!(
            "hazard model takes {} inputs, data has {} covariates plus time",
            net.input_dim(),
            data.n_covariates()
        )));
    }
    let censored: Vec<bool> = data.event.iter().map(|e| !e).collect();
    let censoring = fit_hazard(x, &data.time, &censored, &train, &val, &grid, &cfg.hazard, &mut rng)?;
    let g_hat = survival_curves(&censoring.net, x, &grid)?;
    let mut fit = target_survival_curve(&net, x, &data.time, &data.event, &g_hat, &grid, &cfg.targeting, cfg.g_min)?;
    if trained {
        fit.report.notes.push("initial hazard model trained by the target command".into());
    }
    let path = a.common.out.join(TARGETED_MODEL_FILE);
    checkpoint::save(&fit.net, &path)?;
    println!("wrote {}", path.display());
    let path = a.common.out.join(CURVE_FILE);
    write_curve(&path, &grid, &fit)?;
    println!("wrote {}", path.display());
    write_report(&fit.report, &a.common.out)
}

fn write_curve(path: &Path, grid: &TimeGrid, fit: &tda_core::survival::SurvivalTargetFit) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Runtime(e.into()))?;
    let runtime = |e: csv::Error| CliError::Runtime(e.into());
    w.write_record(["time", "initial", "initial_lower", "initial_upper", "targeted", "targeted_lower", "targeted_upper"])
        .map_err(runtime)?;
    for (k, t) in grid.points().iter().enumerate() {
        let row = [
            *t,
            fit.initial.survival[k],
            fit.initial.lower[k],
            fit.initial.upper[k],
            fit.targeted.survival[k],
            fit.targeted.lower[k],
            fit.targeted.upper[k],
        ];
        w.write_record(row.iter().map(|v| v.to_string())).map_err(runtime)?;
    }
    w.flush()?;
    Ok(())
}

/// Settings of `simulate --task ate`.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct AteSimConfig {
    pub seed: u64,
    pub ihdp: IhdpConfig,
}

/// Settings of `simulate --task survival`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SurvivalSimConfig {
    pub seed: u64,
    pub n: usize,
    pub dgp: DgpParams,
}

impl Default for SurvivalSimConfig {
    fn default() -> Self {
        SurvivalSimConfig {
            seed: 0,
            n: 1000,
            dgp: DgpParams::default(),
        }
    }
}

pub fn simulate(a: SimulateArgs) -> Result<(), CliError> {
    let path = a.common.out.join(DATA_FILE);
    match a.task {
        Task::Ate => {
            let mut l = layered(&AteSimConfig::default(), &a.common)?;
            set_opt(&mut l, "ihdp.n", a.n)?;
            let (cfg, overrides): (AteSimConfig, _) = l.build()?;
            cfg.ihdp.validate().map_err(classify)?;
            start("simulate", &cfg, cfg.seed, &a.common, overrides)?;
            let data = ihdp_synthesize(&cfg.ihdp, &mut seeded(cfg.seed))?;
            data.to_csv(&path)?;
        }
        Task::Survival => {
            let mut l = layered(&SurvivalSimConfig::default(), &a.common)?;
            set_opt(&mut l, "n", a.n)?;
            let (cfg, overrides): (SurvivalSimConfig, _) = l.build()?;
            if cfg.n < 1 {
                return Err(CliError::Usage("n must be at least 1".into()));
            }
            cfg.dgp.validate().map_err(classify)?;
            start("simulate", &cfg, cfg.seed, &a.common, overrides)?;
            let data = simulate_survival(cfg.n, &cfg.dgp, &mut seeded(cfg.seed))?;
            data.to_csv(&path)?;
            let meta = DatasetMetadata {
                n: cfg.n,
                seed: cfg.seed,
                dgp_sha256: cfg.dgp.config_hash(),
                dgp: cfg.dgp.clone(),
            };
            let meta_path = write_metadata(&path, &meta)?;
            println!("wrote {}", meta_path.display());
        }
    }
    println!("wrote {}", path.display());
    Ok(())
}

pub fn report(a: ReportArgs) -> Result<(), CliError> {
    let records = a.out.join(tda_core::harness::persist::REPLICATIONS_FILE);
    if !records.exists() {
        return Err(CliError::Usage(format!("no replication records at {}", records.display())));
    }
    let (records, summary) = resummarize(&records)?;
    let target = if records.iter().any(|r| r.times.is_some()) {
        tda_core::harness::survival_bench::TDA
    } else {
        AteMethod::TdaLast.name()
    };
    let written = persist(&records, &summary, &a.out, target)?;
    print_written(&written);
    Ok(())
}
