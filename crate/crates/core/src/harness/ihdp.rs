//! Semi-synthetic IHDP-style data with known potential-outcome means.
//!
//! Construction (every constant lives in [`IhdpConfig`]):
//! * 6 continuous covariates `N(0, 1)` and 19 binary covariates
//!   `Bernoulli(p_j)`;
//! * treatment `A ~ Bernoulli(sigmoid(c + Xγ))`, roughly 19% treated;
//! * sparse outcome coefficients `β_j ∈ {0, .1, .2, .3, .4}` drawn with
//!   probabilities `{.6, .1, .1, .1, .1}` in every replication;
//! * control surface `μ0 = exp((X + 0.5) β)`, treated surface
//!   `μ1 = X β - ω`, with `ω` set so the average effect on the treated
//!   is 4;
//! * `Y = μ_A + N(0, 1)`.
//!
//! The sample true ATE is `mean(μ1 - μ0)`.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ate::AteDataset;
use crate::error::{Result, TdaError};
use crate::nn::net::sigmoid;
use crate::rng::{normal, TdaRng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IhdpConfig {
    pub n: usize,
    pub n_continuous: usize,
    /// Success probabilities of the binary covariates.
    pub binary_p: Vec<f64>,
    pub propensity_intercept: f64,
    /// Propensity slopes, one per covariate (continuous first).
    pub propensity_coef: Vec<f64>,
    pub beta_values: Vec<f64>,
    pub beta_probs: Vec<f64>,
    /// Offset added to every covariate inside the control surface.
    pub control_offset: f64,
    /// Target average effect on the treated.
    pub att: f64,
    pub noise_sd: f64,
}

impl Default for IhdpConfig {
    fn default() -> Self {
        IhdpConfig {
            n: 747,
            n_continuous: 6,
            binary_p: vec![
                0.51, 0.09, 0.36, 0.27, 0.50, 0.14, 0.13, 0.96, 0.59, 0.37, 0.14, 0.14, 0.16, 0.08, 0.07,
                0.13, 0.16, 0.08, 0.10,
            ],
            propensity_intercept: -1.9,
            propensity_coef: vec![
                0.5, -0.4, 0.3, 0.0, 0.2, -0.3, 0.4, 0.0, -0.3, 0.0, 0.3, 0.0, 0.0, 0.0, 0.0, 0.2, 0.0, 0.0, 0.0,
                0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
            ],
            beta_values: vec![0.0, 0.1, 0.2, 0.3, 0.4],
            beta_probs: vec![0.6, 0.1, 0.1, 0.1, 0.1],
            control_offset: 0.5,
            att: 4.0,
            noise_sd: 1.0,
        }
    }
}

impl IhdpConfig {
    pub fn n_covariates(&self) -> usize {
        self.n_continuous + self.binary_p.len()
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.n_covariates();
        if self.n < 4 {
            return Err(TdaError::Config("ihdp.n must be at least 4".into()));
        }
        if self.propensity_coef.len() != p {
            return Err(TdaError::Config(format!(
                "ihdp.propensity_coef has {} entries, expected {p}",
                self.propensity_coef.len()
            )));
        }
        if self.beta_values.len() != self.beta_probs.len() || self.beta_values.is_empty() {
            return Err(TdaError::Config("ihdp.beta_values and beta_probs must align".into()));
        }
        if (self.beta_probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 || self.beta_probs.iter().any(|&q| q < 0.0) {
            return Err(TdaError::Config("ihdp.beta_probs must be a probability vector".into()));
        }
        if self.binary_p.iter().any(|q| !(0.0..=1.0).contains(q)) {
            return Err(TdaError::Config("ihdp.binary_p entries must lie in [0, 1]".into()));
        }
        if !(self.noise_sd >= 0.0) {
            return Err(TdaError::Config("ihdp.noise_sd must be nonnegative".into()));
        }
        Ok(())
    }
}

/// One replication of the semi-synthetic benchmark.
pub fn ihdp_synthesize(cfg: &IhdpConfig, rng: &mut TdaRng) -> Result<AteDataset> {
    cfg.validate()?;
    let n = cfg.n;
    let p = cfg.n_covariates();
    let mut x = Array2::zeros((n, p));
    for i in 0..n {
        for j in 0..cfg.n_continuous {
            x[[i, j]] = normal(rng);
        }
        for (k, &q) in cfg.binary_p.iter().enumerate() {
            x[[i, cfg.n_continuous + k]] = (rng.random::<f64>() < q) as u8 as f64;
        }
    }
    let a: Vec<f64> = (0..n)
        .map(|i| {
            let lin = cfg.propensity_intercept
                + x.row(i).iter().zip(&cfg.propensity_coef).map(|(v, c)| v * c).sum::<f64>();
            (rng.random::<f64>() < sigmoid(lin)) as u8 as f64
        })
        .collect();
    let beta: Vec<f64> = (0..p)
        .map(|_| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (v, q) in cfg.beta_values.iter().zip(&cfg.beta_probs) {
                acc += q;
                if u < acc {
                    return *v;
                }
            }
            *cfg.beta_values.last().expect("nonempty")
        })
        .collect();
    let lin: Vec<f64> = (0..n)
        .map(|i| x.row(i).iter().zip(&beta).map(|(v, b)| v * b).sum())
        .collect();
    let mu0: Vec<f64> = (0..n)
        .map(|i| {
            x.row(i)
                .iter()
                .zip(&beta)
                .map(|(v, b)| (v + cfg.control_offset) * b)
                .sum::<f64>()
                .exp()
        })
        .collect();
    let treated: Vec<usize> = (0..n).filter(|&i| a[i] == 1.0).collect();
    let rows: Vec<usize> = if treated.is_empty() { (0..n).collect() } else { treated };
    let gap = rows.iter().map(|&i| lin[i] - mu0[i]).sum::<f64>() / rows.len() as f64;
    let omega = gap - cfg.att;
    let mu1: Vec<f64> = lin.iter().map(|l| l - omega).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| if a[i] == 1.0 { mu1[i] } else { mu0[i] } + cfg.noise_sd * normal(rng))
        .collect();
    AteDataset::new(x, a, y)?.with_truth(mu0, mu1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{seeded, stream};

    #[test]
    fn att_is_exact_and_truth_is_populated() {
        let cfg = IhdpConfig::default();
        let d = ihdp_synthesize(&cfg, &mut seeded(1)).unwrap();
        assert_eq!(d.len(), 747);
        assert_eq!(d.n_covariates(), 25);
        let (m0, m1) = (d.mu0.as_ref().unwrap(), d.mu1.as_ref().unwrap());
        let t: Vec<usize> = (0..d.len()).filter(|&i| d.a[i] == 1.0).collect();
        let att = t.iter().map(|&i| m1[i] - m0[i]).sum::<f64>() / t.len() as f64;
        assert!((att - 4.0).abs() < 1e-9);
        assert!(d.true_ate.is_some());
    }

    #[test]
    fn seeds_differ_and_treated_share_is_near_target() {
        let cfg = IhdpConfig::default();
        let a = ihdp_synthesize(&cfg, &mut stream(5, 0)).unwrap();
        let b = ihdp_synthesize(&cfg, &mut stream(5, 1)).unwrap();
        assert_ne!(a.y, b.y);
        let mut share = 0.0;
        for r in 0..20 {
            let d = ihdp_synthesize(&cfg, &mut stream(9, r)).unwrap();
            share += d.n_treated() as f64 / d.len() as f64 / 20.0;
        }
        assert!((share - 0.19).abs() < 0.04, "treated share {share}");
    }
}
