//! Files written by a benchmark run.
//!
//! * `summary.csv` — `method,metric,time,value`; `time` is `all` for
//!   scalar targets and for time-averaged survival metrics, otherwise the
//!   grid time.
//! * `replications.jsonl` — one [`ReplicationRecord`] per line.
//! * `bands.csv` — `time,truth` then `{method}_q025,{method}_median,
//!   {method}_q975` per method (curve targets only).
//! * `outperformance.csv` — `time` then `vs_{competitor}` for each
//!   competitor: share of replications where the targeted curve is closer
//!   to the truth (curve targets only).
//! * `manifest.json` — see [`Manifest`].

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::metrics::{quantile, summarize, MethodSummary, ReplicationRecord, SummaryTable};
use crate::error::{Result, TdaError};

pub const SUMMARY_FILE: &str = "summary.csv";
pub const REPLICATIONS_FILE: &str = "replications.jsonl";
pub const BANDS_FILE: &str = "bands.csv";
pub const OUTPERFORMANCE_FILE: &str = "outperformance.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Where a configuration value came from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Default,
    File,
    Env,
    Flag,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Override {
    pub key: String,
    pub value: String,
    pub source: Provenance,
}

/// Run description written before any heavy computation starts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub package_version: String,
    pub seed: Option<u64>,
    /// SHA-256 of the canonical JSON of `config`.
    pub config_sha256: String,
    pub config: serde_json::Value,
    pub config_file: Option<PathBuf>,
    pub overrides: Vec<Override>,
}

impl Manifest {
    pub fn new<C: Serialize>(command: &str, config: &C, seed: Option<u64>) -> Result<Self> {
        let config = serde_json::to_value(config).map_err(|e| TdaError::Serde(e.to_string()))?;
        let canonical = serde_json::to_string(&config).map_err(|e| TdaError::Serde(e.to_string()))?;
        Ok(Manifest {
            command: command.to_string(),
            package_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config_sha256: sha256_hex(canonical.as_bytes()),
            config,
            config_file: None,
            overrides: Vec::new(),
        })
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        crate::nn::checkpoint::save_json(self, &path)?;
        Ok(path)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| TdaError::io(parent, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| TdaError::io(path, e))?))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> TdaError + '_ {
    move |e| match e.into_kind() {
        csv::ErrorKind::Io(io) => TdaError::io(path, io),
        other => TdaError::Serde(format!("{other:?}")),
    }
}

fn metric_rows(m: &MethodSummary, times: Option<&[f64]>) -> Vec<(String, String, f64)> {
    let mut rows = vec![("replications".to_string(), "all".to_string(), m.replications as f64)];
    if let Some(c) = m.converged {
        rows.push(("converged".into(), "all".into(), c as f64));
    }
    let aggregates = [
        ("bias", m.mean_bias),
        ("abs_bias", m.mean_abs_bias),
        ("variance", m.mean_variance),
        ("mse", m.mean_mse),
        ("coverage", m.mean_coverage),
        ("ci_width", m.mean_ci_width),
    ];
    rows.extend(aggregates.iter().map(|(k, v)| (k.to_string(), "all".to_string(), *v)));
    if let Some(times) = times {
        let per_point = [
            ("bias", &m.bias),
            ("variance", &m.variance),
            ("mse", &m.mse),
            ("coverage", &m.coverage),
            ("ci_width", &m.ci_width),
        ];
        for (k, values) in per_point {
            for (t, v) in times.iter().zip(values.iter()) {
                rows.push((k.to_string(), t.to_string(), *v));
            }
        }
    }
    rows
}

pub fn write_summary_csv(summary: &SummaryTable, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let err = csv_err(path);
    w.write_record(["method", "metric", "time", "value"]).map_err(&err)?;
    for m in &summary.methods {
        for (metric, time, value) in metric_rows(m, summary.times.as_deref()) {
            w.write_record([m.method.as_str(), &metric, &time, &value.to_string()])
                .map_err(&err)?;
        }
    }
    w.write_record(["all", "failed_replications", "all", &summary.failed.to_string()])
        .map_err(&err)?;
    w.flush().map_err(|e| TdaError::io(path, e))
}

pub fn write_records(records: &[ReplicationRecord], path: &Path) -> Result<()> {
    let mut w = create(path)?;
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| TdaError::Serde(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| TdaError::io(path, e))?;
    }
    w.flush().map_err(|e| TdaError::io(path, e))
}

pub fn load_records(path: &Path) -> Result<Vec<ReplicationRecord>> {
    let file = File::open(path).map_err(|e| TdaError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| TdaError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| TdaError::Serde(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

/// Per-time truth and 2.5% / 50% / 97.5% quantiles of each method's
/// estimates across successful replications.
#[derive(Clone, Debug, PartialEq)]
pub struct Bands {
    pub times: Vec<f64>,
    pub truth: Vec<f64>,
    /// `(method, [q025, median, q975] per time)`.
    pub methods: Vec<(String, Vec<[f64; 3]>)>,
}

fn successful(records: &[ReplicationRecord]) -> Vec<&ReplicationRecord> {
    records.iter().filter(|r| r.error.is_none()).collect()
}

fn method_names(records: &[&ReplicationRecord]) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    for r in records {
        for m in &r.methods {
            if !names.contains(&m.method) {
                names.push(m.method.clone());
            }
        }
    }
    names
}

fn estimates_at<'a>(records: &'a [&ReplicationRecord], method: &'a str) -> impl Iterator<Item = (&'a [f64], &'a [f64])> {
    records
        .iter()
        .filter_map(move |r| r.methods.iter().find(|m| m.method == method))
        .map(|m| (m.estimate.as_slice(), m.truth.as_slice()))
}

/// `None` for scalar targets or when no replication succeeded.
pub fn bands(records: &[ReplicationRecord]) -> Option<Bands> {
    let ok = successful(records);
    let times = ok.iter().find_map(|r| r.times.clone())?;
    let first = ok.first()?.methods.first()?;
    let truth = first.truth.clone();
    let methods = method_names(&ok)
        .into_iter()
        .map(|name| {
            let per_time = (0..times.len())
                .map(|k| {
                    let v: Vec<f64> = estimates_at(&ok, &name).map(|(e, _)| e[k]).collect();
                    [quantile(&v, 0.025), quantile(&v, 0.5), quantile(&v, 0.975)]
                })
                .collect();
            (name, per_time)
        })
        .collect();
    Some(Bands { times, truth, methods })
}

/// Per-time share of replications where `target` has strictly smaller
/// absolute error than each competitor.
#[derive(Clone, Debug, PartialEq)]
pub struct Outperformance {
    pub times: Vec<f64>,
    pub target: String,
    pub competitors: Vec<(String, Vec<f64>)>,
}

pub fn outperformance(records: &[ReplicationRecord], target: &str) -> Option<Outperformance> {
    let ok = successful(records);
    let times = ok.iter().find_map(|r| r.times.clone())?;
    let competitors = method_names(&ok)
        .into_iter()
        .filter(|m| m != target)
        .map(|comp| {
            let fracs = (0..times.len())
                .map(|k| {
                    let mut wins = 0usize;
                    let mut total = 0usize;
                    for r in &ok {
                        let t = r.methods.iter().find(|m| m.method == target);
                        let c = r.methods.iter().find(|m| m.method == comp);
                        if let (Some(t), Some(c)) = (t, c) {
                            total += 1;
                            if (t.estimate[k] - t.truth[k]).abs() < (c.estimate[k] - c.truth[k]).abs() {
                                wins += 1;
                            }
                        }
                    }
                    if total == 0 {
                        f64::NAN
                    } else {
                        wins as f64 / total as f64
                    }
                })
                .collect();
            (comp, fracs)
        })
        .collect();
    Some(Outperformance {
        times,
        target: target.to_string(),
        competitors,
    })
}

pub fn write_bands_csv(b: &Bands, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let err = csv_err(path);
    let mut header = vec!["time".to_string(), "truth".to_string()];
    for (m, _) in &b.methods {
        header.extend([format!("{m}_q025"), format!("{m}_median"), format!("{m}_q975")]);
    }
    w.write_record(&header).map_err(&err)?;
    for (k, t) in b.times.iter().enumerate() {
        let mut row = vec![t.to_string(), b.truth[k].to_string()];
        for (_, q) in &b.methods {
            row.extend(q[k].iter().map(|v| v.to_string()));
        }
        w.write_record(&row).map_err(&err)?;
    }
    w.flush().map_err(|e| TdaError::io(path, e))
}

pub fn write_outperformance_csv(o: &Outperformance, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let err = csv_err(path);
    let mut header = vec!["time".to_string()];
    header.extend(o.competitors.iter().map(|(c, _)| format!("vs_{c}")));
    w.write_record(&header).map_err(&err)?;
    for (k, t) in o.times.iter().enumerate() {
        let mut row = vec![t.to_string()];
        row.extend(o.competitors.iter().map(|(_, f)| f[k].to_string()));
        w.write_record(&row).map_err(&err)?;
    }
    w.flush().map_err(|e| TdaError::io(path, e))
}

/// Writes summary, records and, for curve targets, band and
/// outperformance data. `target` names the method compared against the
/// others in the outperformance file.
pub fn persist(records: &[ReplicationRecord], summary: &SummaryTable, dir: &Path, target: &str) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| TdaError::io(dir, e))?;
    let mut written = Vec::new();
    let path = dir.join(SUMMARY_FILE);
    write_summary_csv(summary, &path)?;
    written.push(path);
    let path = dir.join(REPLICATIONS_FILE);
    write_records(records, &path)?;
    written.push(path);
    if let Some(b) = bands(records) {
        let path = dir.join(BANDS_FILE);
        write_bands_csv(&b, &path)?;
        written.push(path);
    }
    if let Some(o) = outperformance(records, target) {
        if !o.competitors.is_empty() {
            let path = dir.join(OUTPERFORMANCE_FILE);
            write_outperformance_csv(&o, &path)?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Recomputes the summary from a stored `replications.jsonl`.
pub fn resummarize(path: &Path) -> Result<(Vec<ReplicationRecord>, SummaryTable)> {
    let records = load_records(path)?;
    let summary = summarize(&records)?;
    Ok((records, summary))
}
