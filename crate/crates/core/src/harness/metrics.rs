//! Per-replication records and their Monte-Carlo summaries.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TdaError};

/// One method's output in one replication. Scalar targets use length-1
/// vectors; survival curves use one entry per grid point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodRecord {
    pub method: String,
    pub estimate: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub truth: Vec<f64>,
    /// Targeting convergence where applicable.
    pub converged: Option<bool>,
    pub iterations: Option<usize>,
    pub seconds: f64,
}

/// Everything one replication produced. Failed replications carry the
/// error message and no method records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub replication: usize,
    pub error: Option<String>,
    pub methods: Vec<MethodRecord>,
    /// Grid for curve-valued targets.
    pub times: Option<Vec<f64>>,
}

/// Aggregate metrics for one method. Per-point vectors have one entry per
/// target component; the scalar fields average them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub replications: usize,
    pub converged: Option<usize>,
    pub bias: Vec<f64>,
    /// Sample variance (divisor `R - 1`) of the errors `estimate - truth`.
    pub variance: Vec<f64>,
    pub mse: Vec<f64>,
    pub coverage: Vec<f64>,
    pub ci_width: Vec<f64>,
    pub mean_bias: f64,
    pub mean_abs_bias: f64,
    pub mean_variance: f64,
    pub mean_mse: f64,
    pub mean_coverage: f64,
    pub mean_ci_width: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub methods: Vec<MethodSummary>,
    pub times: Option<Vec<f64>>,
    pub failed: usize,
}

impl SummaryTable {
    pub fn method(&self, name: &str) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == name)
    }
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, c) = v.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    if c == 0 {
        f64::NAN
    } else {
        s / c as f64
    }
}

/// Aggregates successful replications per method, in first-seen order.
/// Failed replications are counted and otherwise ignored.
pub fn summarize(records: &[ReplicationRecord]) -> Result<SummaryTable> {
    let ok: Vec<&ReplicationRecord> = records.iter().filter(|r| r.error.is_none()).collect();
    let failed = records.len() - ok.len();
    let mut names: Vec<String> = Vec::new();
    for r in &ok {
        for m in &r.methods {
            if !names.contains(&m.method) {
                names.push(m.method.clone());
            }
        }
    }
    let times = ok.iter().find_map(|r| r.times.clone());
    let mut methods = Vec::with_capacity(names.len());
    for name in names {
        let rows: Vec<&MethodRecord> = ok
            .iter()
            .filter_map(|r| r.methods.iter().find(|m| m.method == name))
            .collect();
        methods.push(summarize_method(&name, &rows)?);
    }
    Ok(SummaryTable { methods, times, failed })
}

fn summarize_method(name: &str, rows: &[&MethodRecord]) -> Result<MethodSummary> {
    let r = rows.len();
    let k = rows[0].estimate.len();
    for m in rows {
        let lens = [m.estimate.len(), m.lower.len(), m.upper.len(), m.truth.len()];
        if lens.iter().any(|&l| l != k) {
            return Err(TdaError::Shape {
                expected: k,
                actual: *lens.iter().find(|&&l| l != k).expect("mismatch"),
            });
        }
    }
    let rf = r as f64;
    let (mut bias, mut variance, mut mse, mut coverage, mut width) =
        (vec![0.0; k], vec![0.0; k], vec![0.0; k], vec![0.0; k], vec![0.0; k]);
    for t in 0..k {
        let err: Vec<f64> = rows.iter().map(|m| m.estimate[t] - m.truth[t]).collect();
        let b = err.iter().sum::<f64>() / rf;
        bias[t] = b;
        variance[t] = if r > 1 {
            err.iter().map(|e| (e - b).powi(2)).sum::<f64>() / (rf - 1.0)
        } else {
            0.0
        };
        mse[t] = err.iter().map(|e| e * e).sum::<f64>() / rf;
        coverage[t] = rows
            .iter()
            .filter(|m| m.lower[t] <= m.truth[t] && m.truth[t] <= m.upper[t])
            .count() as f64
            / rf;
        width[t] = rows.iter().map(|m| m.upper[t] - m.lower[t]).sum::<f64>() / rf;
    }
    let conv: Vec<bool> = rows.iter().filter_map(|m| m.converged).collect();
    Ok(MethodSummary {
        method: name.to_string(),
        replications: r,
        converged: if conv.is_empty() {
            None
        } else {
            Some(conv.iter().filter(|&&c| c).count())
        },
        mean_bias: mean(bias.iter().copied()),
        mean_abs_bias: mean(bias.iter().map(|b| b.abs())),
        mean_variance: mean(variance.iter().copied()),
        mean_mse: mean(mse.iter().copied()),
        mean_coverage: mean(coverage.iter().copied()),
        mean_ci_width: mean(width.iter().copied()),
        bias,
        variance,
        mse,
        coverage,
        ci_width: width,
    })
}

/// Linear-interpolation quantile of unsorted data (`q` in `[0, 1]`).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}
