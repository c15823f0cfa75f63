use ndarray::Array2;

use crate::error::{Result, TdaError};

/// Floor applied to estimated censoring survival before weighting.
pub const G_MIN: f64 = 0.05;

/// IPCW influence vectors for several time points.
#[derive(Clone, Debug, PartialEq)]
pub struct IpcwInfluence {
    /// One vector per time point, one value per subject.
    pub values: Vec<Vec<f64>>,
    /// Number of `(subject, time)` pairs where the floor was active.
    pub floored: usize,
}

/// `D_t(O_i) = 1(T̃_i > t) / max(Ĝ(t|X_i), g_min) − Ŝ(t)` for every grid
/// time `t_k`; `g_hat` holds `Ĝ(t_k|X_i)` with subjects as rows.
pub fn ipcw_influence(
    times: &[f64],
    time: &[f64],
    g_hat: &Array2<f64>,
    s_hat: &[f64],
    g_min: f64,
) -> Result<IpcwInfluence> {
    let n = time.len();
    if g_hat.dim() != (n, times.len()) {
        return Err(TdaError::Shape {
            expected: n * times.len(),
            actual: g_hat.len(),
        });
    }
    if s_hat.len() != times.len() {
        return Err(TdaError::Shape {
            expected: times.len(),
            actual: s_hat.len(),
        });
    }
    if !(g_min > 0.0) {
        return Err(TdaError::Config(format!("censoring floor must be positive, got {g_min}")));
    }
    let mut floored = 0;
    let values = times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            (0..n)
                .map(|i| {
                    let g = g_hat[[i, k]];
                    if g < g_min {
                        floored += 1;
                    }
                    let alive = if time[i] > t { 1.0 } else { 0.0 };
                    alive / g.max(g_min) - s_hat[k]
                })
                .collect()
        })
        .collect();
    Ok(IpcwInfluence { values, floored })
}
