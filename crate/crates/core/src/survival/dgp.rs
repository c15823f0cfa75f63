use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::data::SurvivalDataset;
use super::grid::TimeGrid;
use crate::error::{Result, TdaError};
use crate::rng::{normal, open_unit, seeded, TdaRng};

/// Number of covariates in the simulation design.
pub const N_SURVIVAL_COVARIATES: usize = 10;

/// Largest covariate exponent allowed in the hazard before clamping.
pub const MAX_EXPONENT: f64 = 50.0;

/// Informative-censoring survival design.
///
/// Event hazard:
/// `λ(t|x) = λ₀(t)·exp(√t·β_{1:3}ᵀx_{1:3} + Σ_{j=4..6} exp(x_j β_j)
///           + Σ_{7≤j<k≤10} x_j x_k β_j β_k)`
/// with Weibull baseline `λ₀(t) = (α/η)(t/η)^{α−1}`.
///
/// Censoring: `C ~ Weibull(α_c, η_c·exp(γᵀx + Σ_{j=2..4} |x_j|^{1.5}))`.
/// Indices are 1-based as in the formulas; the arrays are 0-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DgpParams {
    pub alpha: f64,
    pub eta: f64,
    pub beta: [f64; N_SURVIVAL_COVARIATES],
    pub alpha_c: f64,
    pub eta_c: f64,
    pub gamma: [f64; N_SURVIVAL_COVARIATES],
    /// Covariate correlation `Σ_ij = rho^|i−j|`.
    pub rho: f64,
    /// End of the cumulative-hazard inversion grid; later event times are
    /// truncated here.
    pub inversion_horizon: f64,
    pub inversion_substeps: usize,
}

/// Censoring scale giving a 30% censoring rate for the default design,
/// found by [`calibrate_eta_c`] with `n = 100_000`, seed 0.
pub const CALIBRATED_ETA_C: f64 = 0.378_934_500_108_739_5;

impl Default for DgpParams {
    fn default() -> Self {
        DgpParams {
            alpha: 1.5,
            eta: 10.0,
            beta: [0.10, -0.05, 0.05, 0.15, 0.10, -0.10, 0.20, -0.15, 0.10, -0.10],
            alpha_c: 1.2,
            eta_c: CALIBRATED_ETA_C,
            gamma: [0.15, 0.10, 0.10, 0.05, 0.05, -0.05, -0.05, -0.10, -0.10, -0.15],
            rho: 0.3,
            inversion_horizon: 32.0,
            inversion_substeps: 2000,
        }
    }
}

impl DgpParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("eta", self.eta),
            ("alpha_c", self.alpha_c),
            ("eta_c", self.eta_c),
            ("inversion_horizon", self.inversion_horizon),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(TdaError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.rho.abs() < 1.0) {
            return Err(TdaError::Config(format!("rho must lie in (-1, 1), got {}", self.rho)));
        }
        if self.inversion_substeps == 0 {
            return Err(TdaError::Config("inversion_substeps must be at least 1".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn config_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("params serialise");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Weibull baseline hazard.
    pub fn baseline_hazard(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return if self.alpha < 1.0 {
                f64::INFINITY
            } else if self.alpha == 1.0 {
                1.0 / self.eta
            } else {
                0.0
            };
        }
        (self.alpha / self.eta) * (t / self.eta).powf(self.alpha - 1.0)
    }

    /// The covariate-dependent parts of the hazard exponent for one subject.
    pub fn hazard_terms(&self, x: &[f64]) -> HazardTerms {
        let b = &self.beta;
        let varying = (0..3).map(|j| b[j] * x[j]).sum();
        let mut fixed: f64 = (3..6).map(|j| (x[j] * b[j]).exp()).sum();
        for j in 6..10 {
            for k in j + 1..10 {
                fixed += x[j] * x[k] * b[j] * b[k];
            }
        }
        HazardTerms { varying, fixed }
    }

    pub fn true_hazard(&self, t: f64, x: &[f64]) -> f64 {
        self.hazard_terms(x).hazard(self, t)
    }

    /// Covariate-dependent Weibull scale of the censoring time.
    pub fn censoring_scale(&self, x: &[f64]) -> f64 {
        let lin: f64 = self.gamma.iter().zip(x).map(|(g, v)| g * v).sum();
        let extra: f64 = (1..4).map(|j| x[j].abs().powf(1.5)).sum();
        self.eta_c * clamp_exponent(lin + extra).exp()
    }
}

fn clamp_exponent(e: f64) -> f64 {
    if e > MAX_EXPONENT {
        log::debug!("hazard exponent {e:.3} clamped to {MAX_EXPONENT}");
        MAX_EXPONENT
    } else {
        e
    }
}

/// `λ(t|x) = λ₀(t)·exp(√t·varying + fixed)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HazardTerms {
    pub varying: f64,
    pub fixed: f64,
}

impl HazardTerms {
    pub fn hazard(&self, p: &DgpParams, t: f64) -> f64 {
        let base = p.baseline_hazard(t);
        if base == 0.0 {
            return 0.0;
        }
        base * clamp_exponent(t.max(0.0).sqrt() * self.varying + self.fixed).exp()
    }
}

/// Draws from `N(0, Σ)` with `Σ_ij = rho^|i−j|`.
///
/// Uses the Cholesky factor of this covariance, which has the closed form
/// `L_{i0} = rho^i`, `L_{ij} = rho^{i−j}·√(1−rho²)` for `1 ≤ j ≤ i`; applying
/// it to standard normals is the recursion
/// `x_0 = z_0`, `x_i = rho·x_{i−1} + √(1−rho²)·z_i`.
pub fn gen_covariates(n: usize, d: usize, rho: f64, rng: &mut TdaRng) -> Array2<f64> {
    let s = (1.0 - rho * rho).sqrt();
    let mut x = Array2::zeros((n, d));
    for i in 0..n {
        let mut prev = 0.0;
        for j in 0..d {
            let z = normal(rng);
            prev = if j == 0 { z } else { rho * prev + s * z };
            x[[i, j]] = prev;
        }
    }
    x
}

/// Solves `Λ(t) = target` by integrating `hazard` with the trapezoid rule
/// on `substeps` uniform steps over `[0, horizon]` and interpolating
/// linearly inside the crossing step. Returns `None` when `Λ(horizon)`
/// stays below `target`.
pub fn invert_cumulative_hazard<H: Fn(f64) -> f64>(
    hazard: H,
    target: f64,
    horizon: f64,
    substeps: usize,
) -> Result<Option<f64>> {
    let h = horizon / substeps as f64;
    let mut cum = 0.0;
    let mut prev = hazard(0.0);
    for s in 1..=substeps {
        let t = horizon * s as f64 / substeps as f64;
        let cur = hazard(t);
        let inc = 0.5 * (prev + cur) * h;
        if !(inc >= 0.0) {
            return Err(TdaError::Domain(format!(
                "cumulative hazard not increasing at t = {t} (increment {inc})"
            )));
        }
        if cum + inc >= target {
            let frac = if inc > 0.0 { (target - cum) / inc } else { 0.0 };
            return Ok(Some(t - h + frac * h));
        }
        cum += inc;
        prev = cur;
    }
    Ok(None)
}

/// Event time for one subject by inversion of the cumulative hazard at
/// `−ln U`. Draws past the inversion grid are truncated to its end.
pub fn sample_event_time(x: &[f64], p: &DgpParams, rng: &mut TdaRng) -> Result<f64> {
    let terms = p.hazard_terms(x);
    event_time_from_uniform(|t| terms.hazard(p, t), open_unit(rng), p)
}

fn event_time_from_uniform<H: Fn(f64) -> f64>(hazard: H, u: f64, p: &DgpParams) -> Result<f64> {
    let target = -u.ln();
    Ok(invert_cumulative_hazard(hazard, target, p.inversion_horizon, p.inversion_substeps)?
        .unwrap_or(p.inversion_horizon))
}

/// Weibull censoring draw by inversion: `scale·(−ln U)^{1/α_c}`.
pub fn sample_censoring_time(x: &[f64], p: &DgpParams, rng: &mut TdaRng) -> f64 {
    p.censoring_scale(x) * (-open_unit(rng).ln()).powf(1.0 / p.alpha_c)
}

/// Draws `n` subjects: covariates, event and censoring times, and the
/// observed `(min(T, C), 1(T ≤ C))`. Truncated event times that are not
/// censored earlier are recorded as censored at the truncation point.
pub fn simulate(n: usize, p: &DgpParams, rng: &mut TdaRng) -> Result<SurvivalDataset> {
    p.validate()?;
    let x = gen_covariates(n, N_SURVIVAL_COVARIATES, p.rho, rng);
    let mut time = Vec::with_capacity(n);
    let mut event = Vec::with_capacity(n);
    for row in x.rows() {
        let row = row.to_vec();
        let t = sample_event_time(&row, p, rng)?;
        let c = sample_censoring_time(&row, p, rng);
        let truncated = t >= p.inversion_horizon;
        if t <= c && !truncated {
            time.push(t);
            event.push(true);
        } else {
            time.push(c.min(t));
            event.push(false);
        }
    }
    SurvivalDataset::new(x, time, event)
}

/// Finds `η_c` giving the requested censoring fraction by bisection on
/// `ln η_c`. Covariates, event times and censoring noise are drawn once
/// (common random numbers), so the fraction is monotone in `η_c`.
pub fn calibrate_eta_c(p: &DgpParams, target: f64, n: usize, seed: u64) -> Result<f64> {
    if !(0.0 < target && target < 1.0) || n == 0 {
        return Err(TdaError::Config(format!("cannot calibrate to {target} with n = {n}")));
    }
    p.validate()?;
    let mut rng = seeded(seed);
    let x = gen_covariates(n, N_SURVIVAL_COVARIATES, p.rho, &mut rng);
    let unit = DgpParams { eta_c: 1.0, ..p.clone() };
    let mut times = Vec::with_capacity(n);
    let mut base = Vec::with_capacity(n);
    for row in x.rows() {
        let row = row.to_vec();
        times.push(sample_event_time(&row, p, &mut rng)?);
        base.push(sample_censoring_time(&row, &unit, &mut rng));
    }
    let fraction = |log_eta: f64| {
        let eta_c = log_eta.exp();
        times
            .iter()
            .zip(&base)
            .filter(|(&t, &b)| t >= p.inversion_horizon || eta_c * b < t)
            .count() as f64
            / n as f64
    };
    let (mut lo, mut hi) = (-12.0f64, 12.0f64);
    if fraction(lo) < target || fraction(hi) > target {
        return Err(TdaError::Config(format!("censoring fraction {target} not bracketed")));
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if fraction(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

/// Ground-truth marginal survival on the grid: the mean over a large
/// reference sample of `exp(−Λ(t|x))`, with `Λ` integrated by the
/// trapezoid rule on `substeps_per_cell` pieces per grid cell.
pub fn true_marginal_survival(
    p: &DgpParams,
    grid: &TimeGrid,
    n_ref: usize,
    substeps_per_cell: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    p.validate()?;
    if n_ref == 0 {
        return Err(TdaError::Config("reference sample must be nonempty".into()));
    }
    let fine = TimeGrid::new(grid.points().to_vec(), substeps_per_cell)?;
    let nodes = fine.nodes();
    let mut rng = seeded(seed);
    let x = gen_covariates(n_ref, N_SURVIVAL_COVARIATES, p.rho, &mut rng);
    let mut acc = vec![0.0; grid.len()];
    let mut values = vec![0.0; nodes.len()];
    for row in x.rows() {
        let terms = p.hazard_terms(row.as_slice().expect("contiguous row"));
        for (v, &t) in values.iter_mut().zip(&nodes) {
            *v = terms.hazard(p, t);
        }
        for (a, cum) in acc.iter_mut().zip(fine.integrate_to_points(&values)) {
            *a += (-cum).exp();
        }
    }
    Ok(acc.into_iter().map(|a| a / n_ref as f64).collect())
}
