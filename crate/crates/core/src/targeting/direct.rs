use ndarray::{ArrayView1, ArrayView2};

use crate::error::{Result, TdaError};
use crate::linalg::least_squares;

/// Result of a single closed-form targeting update of a linear last
/// layer.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectFit {
    /// Updated last-layer weights `θ + ε α`.
    pub theta: Vec<f64>,
    pub epsilon: f64,
    /// Least-squares coefficients of the clever covariate on the features.
    pub alpha: Vec<f64>,
    /// The feature Gram matrix was singular and the minimum-norm
    /// solution was used.
    pub rank_deficient: bool,
}

/// Regresses the clever covariate `h` on the last-layer features `phi`
/// (rows aligned with samples) and moves `theta_last` along the fitted
/// coefficients.
///
/// Along that direction the squared-error loss of the factual
/// predictions is quadratic in `ε`, so the line search is solved
/// exactly: `ε = Σ rᵢ pᵢ / Σ pᵢ²` with `r` the current residuals and
/// `p = Φ α`. A direction with no component on the data gives `ε = 0`.
pub fn tda_direct(
    phi: ArrayView2<'_, f64>,
    h: &[f64],
    residual: &[f64],
    theta_last: &[f64],
) -> Result<DirectFit> {
    let (n, m) = phi.dim();
    if h.len() != n || residual.len() != n {
        return Err(TdaError::Shape {
            expected: n,
            actual: if h.len() != n { h.len() } else { residual.len() },
        });
    }
    if theta_last.len() != m {
        return Err(TdaError::Shape {
            expected: m,
            actual: theta_last.len(),
        });
    }
    let (alpha, rank_deficient) = least_squares(phi, h)?;
    if rank_deficient {
        log::warn!("last-layer features are rank deficient; using the minimum-norm direction");
    }
    let p = phi.dot(&ArrayView1::from(alpha.as_slice()));
    let pp = p.dot(&p);
    let epsilon = if pp > 0.0 {
        p.dot(&ArrayView1::from(residual)) / pp
    } else {
        0.0
    };
    let theta = theta_last
        .iter()
        .zip(&alpha)
        .map(|(t, a)| t + epsilon * a)
        .collect();
    Ok(DirectFit {
        theta,
        epsilon,
        alpha,
        rank_deficient,
    })
}
