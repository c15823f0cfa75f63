use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TdaError};
use crate::rng::{permutation, TdaRng};

/// Number of covariates in the IHDP-style layout.
pub const N_COVARIATES: usize = 25;

/// Observational treatment-effect data: covariates, binary treatment and
/// continuous outcome, with optional potential-outcome means.
#[derive(Clone, Debug, PartialEq)]
pub struct AteDataset {
    pub x: Array2<f64>,
    pub a: Vec<f64>,
    pub y: Vec<f64>,
    pub mu0: Option<Vec<f64>>,
    pub mu1: Option<Vec<f64>>,
    /// Sample average of `mu1 - mu0` when both are known.
    pub true_ate: Option<f64>,
    pub covariate_names: Vec<String>,
}

/// Train / validation row indices used for fitting and early stopping.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

impl AteDataset {
    pub fn new(x: Array2<f64>, a: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = x.nrows();
        if a.len() != n || y.len() != n {
            return Err(TdaError::Shape {
                expected: n,
                actual: if a.len() != n { a.len() } else { y.len() },
            });
        }
        if n == 0 {
            return Err(TdaError::Domain("dataset has no rows".into()));
        }
        if let Some(i) = a.iter().position(|&v| v != 0.0 && v != 1.0) {
            return Err(TdaError::Schema {
                column: "treatment".into(),
                message: format!("row {} has value {} (expected 0 or 1)", i + 1, a[i]),
            });
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(TdaError::NonFinite {
                sample: i,
                what: "outcome".into(),
            });
        }
        if let Some(((i, _), _)) = x.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(TdaError::NonFinite {
                sample: i,
                what: "covariate".into(),
            });
        }
        let covariate_names = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
        Ok(AteDataset {
            x,
            a,
            y,
            mu0: None,
            mu1: None,
            true_ate: None,
            covariate_names,
        })
    }

    /// Attaches potential-outcome means and sets `true_ate` to their
    /// average difference.
    pub fn with_truth(mut self, mu0: Vec<f64>, mu1: Vec<f64>) -> Result<Self> {
        if mu0.len() != self.len() || mu1.len() != self.len() {
            return Err(TdaError::Shape {
                expected: self.len(),
                actual: mu0.len().min(mu1.len()),
            });
        }
        let ate = mu1.iter().zip(&mu0).map(|(m1, m0)| m1 - m0).sum::<f64>() / self.len() as f64;
        self.true_ate = Some(ate);
        self.mu0 = Some(mu0);
        self.mu1 = Some(mu1);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    /// The listed rows, in the given order, with their truth columns.
    pub fn subset(&self, rows: &[usize]) -> Result<Self> {
        if let Some(&i) = rows.iter().find(|&&i| i >= self.len()) {
            return Err(TdaError::Shape {
                expected: self.len(),
                actual: i + 1,
            });
        }
        let pick = |v: &[f64]| rows.iter().map(|&i| v[i]).collect::<Vec<f64>>();
        let mut out = AteDataset::new(self.x.select(ndarray::Axis(0), rows), pick(&self.a), pick(&self.y))?;
        out.covariate_names = self.covariate_names.clone();
        if let (Some(m0), Some(m1)) = (&self.mu0, &self.mu1) {
            out = out.with_truth(pick(m0), pick(m1))?;
        }
        Ok(out)
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_covariates(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_treated(&self) -> usize {
        self.a.iter().filter(|&&v| v == 1.0).count()
    }

    /// 80/20 train/validation split, stratified by treatment so both arms
    /// appear in each part. Deterministic given the generator state.
    pub fn split(&self, rng: &mut TdaRng) -> Split {
        let mut train = Vec::new();
        let mut validation = Vec::new();
        for arm in [0.0, 1.0] {
            let rows: Vec<usize> = (0..self.len()).filter(|&i| self.a[i] == arm).collect();
            let order = permutation(rows.len(), rng);
            let n_val = (rows.len() as f64 * 0.2).round() as usize;
            for (k, &o) in order.iter().enumerate() {
                if k < n_val {
                    validation.push(rows[o]);
                } else {
                    train.push(rows[o]);
                }
            }
        }
        train.sort_unstable();
        validation.sort_unstable();
        Split { train, validation }
    }

    /// Reads a CSV with a header row. Columns `treatment` and `outcome` are
    /// required, `mu0`/`mu1` are optional, and every other column is a
    /// covariate, taken in file order.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| TdaError::io(path, e))?;
        Self::from_reader(file)
    }

    pub fn from_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| TdaError::Serde(e.to_string()))?
            .iter()
            .map(str::to_string)
            .collect();
        let find = |name: &str| header.iter().position(|h| h == name);
        let t_col = find("treatment").ok_or_else(|| TdaError::Schema {
            column: "treatment".into(),
            message: "required column is missing".into(),
        })?;
        let y_col = find("outcome").ok_or_else(|| TdaError::Schema {
            column: "outcome".into(),
            message: "required column is missing".into(),
        })?;
        let mu0_col = find("mu0");
        let mu1_col = find("mu1");
        if mu0_col.is_some() != mu1_col.is_some() {
            return Err(TdaError::Schema {
                column: if mu0_col.is_some() { "mu1" } else { "mu0" }.into(),
                message: "mu0 and mu1 must be given together".into(),
            });
        }
        let special = [Some(t_col), Some(y_col), mu0_col, mu1_col];
        let cov_cols: Vec<usize> = (0..header.len()).filter(|c| !special.contains(&Some(*c))).collect();
        if cov_cols.is_empty() {
            return Err(TdaError::Schema {
                column: "covariates".into(),
                message: "no covariate columns".into(),
            });
        }
        let mut xs = Vec::new();
        let (mut a, mut y, mut mu0, mut mu1) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (r, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| TdaError::Serde(e.to_string()))?;
            let get = |c: usize| -> Result<f64> {
                let raw = rec.get(c).unwrap_or("");
                raw.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| TdaError::Schema {
                    column: header[c].clone(),
                    message: format!("row {}: `{raw}` is not a finite number", r + 1),
                })
            };
            for &c in &cov_cols {
                xs.push(get(c)?);
            }
            a.push(get(t_col)?);
            y.push(get(y_col)?);
            if let (Some(c0), Some(c1)) = (mu0_col, mu1_col) {
                mu0.push(get(c0)?);
                mu1.push(get(c1)?);
            }
        }
        let n = y.len();
        let x = Array2::from_shape_vec((n, cov_cols.len()), xs).expect("row-major fill");
        let mut data = AteDataset::new(x, a, y)?;
        data.covariate_names = cov_cols.iter().map(|&c| header[c].clone()).collect();
        if mu0_col.is_some() {
            data = data.with_truth(mu0, mu1)?;
        }
        Ok(data)
    }

    pub fn to_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| TdaError::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        let ser = |e: csv::Error| TdaError::Serde(e.to_string());
        let mut header = self.covariate_names.clone();
        header.extend(["treatment".to_string(), "outcome".to_string()]);
        let truth = self.mu0.as_ref().zip(self.mu1.as_ref());
        if truth.is_some() {
            header.extend(["mu0".to_string(), "mu1".to_string()]);
        }
        w.write_record(&header).map_err(ser)?;
        for i in 0..self.len() {
            let mut row: Vec<String> = self.x.row(i).iter().map(|v| v.to_string()).collect();
            row.push(self.a[i].to_string());
            row.push(self.y[i].to_string());
            if let Some((m0, m1)) = truth {
                row.push(m0[i].to_string());
                row.push(m1[i].to_string());
            }
            w.write_record(&row).map_err(ser)?;
        }
        w.flush().map_err(|e| TdaError::io(path, e))
    }
}
