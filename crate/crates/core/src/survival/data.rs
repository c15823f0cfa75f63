use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::dgp::DgpParams;
use crate::error::{Result, TdaError};
use crate::rng::{permutation, TdaRng};

/// Right-censored observations: covariates, observed time `min(T, C)` and
/// event indicator `1(T ≤ C)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SurvivalDataset {
    pub x: Array2<f64>,
    pub time: Vec<f64>,
    pub event: Vec<bool>,
}

/// Sidecar written next to a generated dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetadata {
    pub n: usize,
    pub seed: u64,
    pub dgp_sha256: String,
    pub dgp: DgpParams,
}

impl SurvivalDataset {
    pub fn new(x: Array2<f64>, time: Vec<f64>, event: Vec<bool>) -> Result<Self> {
        let n = x.nrows();
        if time.len() != n || event.len() != n {
            return Err(TdaError::Shape {
                expected: n,
                actual: if time.len() != n { time.len() } else { event.len() },
            });
        }
        if n == 0 {
            return Err(TdaError::Domain("dataset has no rows".into()));
        }
        if let Some(i) = time.iter().position(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(TdaError::Schema {
                column: "time".into(),
                message: format!("row {} has value {} (expected finite and >= 0)", i + 1, time[i]),
            });
        }
        if let Some(((i, _), _)) = x.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(TdaError::NonFinite {
                sample: i,
                what: "covariate".into(),
            });
        }
        Ok(SurvivalDataset { x, time, event })
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn n_covariates(&self) -> usize {
        self.x.ncols()
    }

    pub fn censoring_fraction(&self) -> f64 {
        self.event.iter().filter(|e| !**e).count() as f64 / self.len() as f64
    }

    /// Random 80/20 subject split, each part sorted.
    pub fn split(&self, rng: &mut TdaRng) -> (Vec<usize>, Vec<usize>) {
        let perm = permutation(self.len(), rng);
        let n_val = (self.len() as f64 * 0.2).round() as usize;
        let mut val = perm[..n_val].to_vec();
        let mut train = perm[n_val..].to_vec();
        train.sort_unstable();
        val.sort_unstable();
        (train, val)
    }

    /// Reads `x1..xp,time,event`; every column other than `time` and
    /// `event` is a covariate, in file order.
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
        let find = |name: &str| {
            header.iter().position(|h| h == name).ok_or_else(|| TdaError::Schema {
                column: name.into(),
                message: "required column is missing".into(),
            })
        };
        let t_col = find("time")?;
        let e_col = find("event")?;
        let cov_cols: Vec<usize> = (0..header.len()).filter(|c| *c != t_col && *c != e_col).collect();
        if cov_cols.is_empty() {
            return Err(TdaError::Schema {
                column: "covariates".into(),
                message: "no covariate columns".into(),
            });
        }
        let (mut xs, mut time, mut event) = (Vec::new(), Vec::new(), Vec::new());
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
            time.push(get(t_col)?);
            let e = get(e_col)?;
            if e != 0.0 && e != 1.0 {
                return Err(TdaError::Schema {
                    column: "event".into(),
                    message: format!("row {} has value {e} (expected 0 or 1)", r + 1),
                });
            }
            event.push(e == 1.0);
        }
        let n = time.len();
        let x = Array2::from_shape_vec((n, cov_cols.len()), xs).expect("row-major fill");
        SurvivalDataset::new(x, time, event)
    }

    /// Writes `x1..xp,time,event`.
    pub fn to_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| TdaError::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        let ser = |e: csv::Error| TdaError::Serde(e.to_string());
        let mut header: Vec<String> = (1..=self.n_covariates()).map(|j| format!("x{j}")).collect();
        header.extend(["time".to_string(), "event".to_string()]);
        w.write_record(&header).map_err(ser)?;
        for i in 0..self.len() {
            let mut row: Vec<String> = self.x.row(i).iter().map(|v| v.to_string()).collect();
            row.push(self.time[i].to_string());
            row.push(u8::from(self.event[i]).to_string());
            w.write_record(&row).map_err(ser)?;
        }
        w.flush().map_err(|e| TdaError::io(path, e))
    }
}

/// `data.csv` → `data.csv.meta.json`.
pub fn metadata_path(csv_path: &Path) -> PathBuf {
    let mut name = csv_path.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

pub fn write_metadata(csv_path: &Path, meta: &DatasetMetadata) -> Result<PathBuf> {
    let path = metadata_path(csv_path);
    crate::nn::checkpoint::save_json(meta, &path)?;
    Ok(path)
}
