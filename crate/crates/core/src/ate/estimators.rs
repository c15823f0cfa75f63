//! ATE estimators built from fitted nuisance functions, the efficient
//! influence function and Wald intervals.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TdaError};

/// Propensities are clipped to `[PROPENSITY_CLIP, 1 - PROPENSITY_CLIP]`
/// before any inverse weighting.
pub const PROPENSITY_CLIP: f64 = 0.01;

/// 97.5% standard-normal quantile used for all 95% intervals.
pub const Z_95: f64 = 1.96;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AteMethod {
    Plugin,
    Treg,
    Aipw,
    PostTmle,
    TdaLast,
    TdaFull,
    TdaDirect,
}

impl AteMethod {
    pub const ALL: [AteMethod; 7] = [
        AteMethod::Plugin,
        AteMethod::Treg,
        AteMethod::Aipw,
        AteMethod::PostTmle,
        AteMethod::TdaLast,
        AteMethod::TdaFull,
        AteMethod::TdaDirect,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AteMethod::Plugin => "plugin",
            AteMethod::Treg => "treg",
            AteMethod::Aipw => "aipw",
            AteMethod::PostTmle => "post_tmle",
            AteMethod::TdaLast => "tda_last",
            AteMethod::TdaFull => "tda_full",
            AteMethod::TdaDirect => "tda_direct",
        }
    }
}

impl fmt::Display for AteMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AteMethod {
    type Err = TdaError;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        AteMethod::ALL
            .into_iter()
            .find(|m| m.name() == key)
            .ok_or_else(|| TdaError::Config(format!("unknown ATE method `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AteEstimate {
    pub method: AteMethod,
    pub psi: f64,
    pub eif: Vec<f64>,
    pub ci_lower: f64,
    pub ci_upper: f64,
    /// Targeting convergence, for the iterative methods.
    pub converged: Option<bool>,
    pub notes: Vec<String>,
}

impl AteEstimate {
    /// Builds an estimate with a Wald interval from the influence values.
    pub fn from_eif(method: AteMethod, psi: f64, eif: Vec<f64>) -> Self {
        let (ci_lower, ci_upper) = wald_ci(psi, &eif);
        AteEstimate {
            method,
            psi,
            eif,
            ci_lower,
            ci_upper,
            converged: None,
            notes: Vec::new(),
        }
    }

    pub fn ci_width(&self) -> f64 {
        self.ci_upper - self.ci_lower
    }
}

/// Clips one propensity; the flag reports whether clipping was active.
pub fn clip_propensity(g: f64) -> (f64, bool) {
    let c = g.clamp(PROPENSITY_CLIP, 1.0 - PROPENSITY_CLIP);
    (c, c != g)
}

/// `a / g - (1 - a) / (1 - g)`.
pub fn clever_covariate(a: f64, g: f64) -> Result<f64> {
    if !(g > 0.0 && g < 1.0) {
        return Err(TdaError::Domain(format!("propensity {g} outside (0, 1)")));
    }
    Ok(a / g - (1.0 - a) / (1.0 - g))
}

/// `H(a, g) (y - q_a) + q1 - q0 - psi`.
pub fn eif_ate(y: f64, a: f64, q0: f64, q1: f64, g: f64, psi: f64) -> Result<f64> {
    let qa = if a == 1.0 { q1 } else { q0 };
    Ok(clever_covariate(a, g)? * (y - qa) + q1 - q0 - psi)
}

/// `psi ± 1.96 sqrt(mean(eif²) / n)`, using the uncentred second moment.
pub fn wald_ci(psi: f64, eif: &[f64]) -> (f64, f64) {
    let n = eif.len() as f64;
    if eif.is_empty() {
        return (psi, psi);
    }
    let m2 = eif.iter().map(|d| d * d).sum::<f64>() / n;
    let half = Z_95 * (m2 / n).sqrt();
    (psi - half, psi + half)
}

/// Fitted nuisance functions evaluated on the estimation sample, with the
/// propensity already clipped.
#[derive(Clone, Debug, PartialEq)]
pub struct Nuisance {
    pub g: Vec<f64>,
    pub q0: Vec<f64>,
    pub q1: Vec<f64>,
    /// Number of propensities moved by clipping.
    pub clipped: usize,
}

impl Nuisance {
    pub fn new(g_raw: &[f64], q0: Vec<f64>, q1: Vec<f64>) -> Result<Self> {
        let n = g_raw.len();
        if q0.len() != n || q1.len() != n {
            return Err(TdaError::Shape {
                expected: n,
                actual: q0.len().min(q1.len()),
            });
        }
        let mut clipped = 0;
        let g = g_raw
            .iter()
            .map(|&g| {
                let (c, hit) = clip_propensity(g);
                clipped += hit as usize;
                c
            })
            .collect();
        if clipped > 0 {
            log::debug!("clipped {clipped} of {n} propensities to [{PROPENSITY_CLIP}, {}]", 1.0 - PROPENSITY_CLIP);
        }
        Ok(Nuisance { g, q0, q1, clipped })
    }

    pub fn len(&self) -> usize {
        self.g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g.is_empty()
    }

    pub fn clever(&self, a: &[f64]) -> Result<Vec<f64>> {
        a.iter().zip(&self.g).map(|(&ai, &g)| clever_covariate(ai, g)).collect()
    }

    pub fn plugin_psi(&self) -> f64 {
        self.q1.iter().zip(&self.q0).map(|(a, b)| a - b).sum::<f64>() / self.len() as f64
    }

    /// Influence values at `psi`.
    pub fn eif(&self, a: &[f64], y: &[f64], psi: f64) -> Result<Vec<f64>> {
        self.check(a, y)?;
        (0..self.len())
            .map(|i| eif_ate(y[i], a[i], self.q0[i], self.q1[i], self.g[i], psi))
            .collect()
    }

    fn check(&self, a: &[f64], y: &[f64]) -> Result<()> {
        if a.len() != self.len() || y.len() != self.len() {
            return Err(TdaError::Shape {
                expected: self.len(),
                actual: a.len().min(y.len()),
            });
        }
        Ok(())
    }

    fn note(&self, est: &mut AteEstimate) {
        if self.clipped > 0 {
            est.notes.push(format!("clipped {} propensities", self.clipped));
        }
    }
}

/// Mean of `q1 - q0`.
pub fn plugin_ate(nu: &Nuisance, a: &[f64], y: &[f64]) -> Result<AteEstimate> {
    let psi = nu.plugin_psi();
    let mut est = AteEstimate::from_eif(AteMethod::Plugin, psi, nu.eif(a, y, psi)?);
    nu.note(&mut est);
    Ok(est)
}

/// `P_n[q1 - q0 + H (y - q_A)]`.
pub fn aipw_ate(nu: &Nuisance, a: &[f64], y: &[f64]) -> Result<AteEstimate> {
    let plug = nu.plugin_psi();
    let correction = nu.eif(a, y, plug)?.iter().sum::<f64>() / nu.len() as f64;
    let psi = plug + correction;
    let mut est = AteEstimate::from_eif(AteMethod::Aipw, psi, nu.eif(a, y, psi)?);
    nu.note(&mut est);
    Ok(est)
}

/// Closed-form fluctuation coefficient `Σ H (y - q_A) / Σ H²`.
pub fn fluctuation_epsilon(h: &[f64], resid: &[f64]) -> Result<f64> {
    let hh: f64 = h.iter().map(|v| v * v).sum();
    if hh == 0.0 {
        return Err(TdaError::Degenerate("clever covariate is identically zero".into()));
    }
    Ok(h.iter().zip(resid).map(|(a, b)| a * b).sum::<f64>() / hh)
}

/// Shifts both outcome predictions along the clever covariate:
/// `q1 + ε / g` and `q0 - ε / (1 - g)`.
pub fn fluctuate(nu: &Nuisance, epsilon: f64) -> Nuisance {
    Nuisance {
        g: nu.g.clone(),
        q0: nu.q0.iter().zip(&nu.g).map(|(q, g)| q - epsilon / (1.0 - g)).collect(),
        q1: nu.q1.iter().zip(&nu.g).map(|(q, g)| q + epsilon / g).collect(),
        clipped: nu.clipped,
    }
}

/// One linear fluctuation `Q* = Q + ε H` with the closed-form `ε` solving
/// `P_n[H (Y - Q*)] = 0`.
pub fn post_tmle(nu: &Nuisance, a: &[f64], y: &[f64]) -> Result<(AteEstimate, f64)> {
    nu.check(a, y)?;
    let h = nu.clever(a)?;
    let resid: Vec<f64> = (0..nu.len())
        .map(|i| y[i] - if a[i] == 1.0 { nu.q1[i] } else { nu.q0[i] })
        .collect();
    let eps = fluctuation_epsilon(&h, &resid)?;
    let star = fluctuate(nu, eps);
    let psi = star.plugin_psi();
    let mut est = AteEstimate::from_eif(AteMethod::PostTmle, psi, star.eif(a, y, psi)?);
    nu.note(&mut est);
    Ok((est, eps))
}
