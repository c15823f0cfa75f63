//! Shared-trunk network with a propensity head and two outcome heads.
//!
//! Outcomes are standardised internally (`(y - y_mean) / y_scale`) so that
//! training and targeting operate on unit scale; predictions are reported
//! on the original scale.

use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::data::{AteDataset, Split};
use super::estimators::clip_propensity;
use crate::error::{Result, TdaError};
use crate::nn::checkpoint::{load_json, save_json, NetRecord};
use crate::nn::{train, Activation, DenseNet, Objective, TrainConfig, TrainHistory};
use crate::rng::TdaRng;

pub const HIDDEN: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct DragonNet {
    /// Two ELU layers shared by all heads.
    pub trunk: DenseNet,
    /// One ELU layer and a sigmoid output: `g(x) = P(A = 1 | x)`.
    pub propensity: DenseNet,
    /// `heads[a]`: one ELU layer and a linear output for `E[Y | A = a, x]`
    /// on the standardised scale.
    pub heads: [DenseNet; 2],
    pub y_mean: f64,
    pub y_scale: f64,
}

/// Model outputs for a set of rows, outcomes on the original scale.
#[derive(Clone, Debug, PartialEq)]
pub struct Predictions {
    /// Unclipped propensity.
    pub g: Vec<f64>,
    pub q0: Vec<f64>,
    pub q1: Vec<f64>,
}

impl Predictions {
    pub fn factual(&self, a: &[f64]) -> Vec<f64> {
        a.iter()
            .enumerate()
            .map(|(i, &ai)| if ai == 1.0 { self.q1[i] } else { self.q0[i] })
            .collect()
    }
}

fn head(rng: &mut TdaRng) -> Result<DenseNet> {
    DenseNet::init(&[HIDDEN, HIDDEN, 1], Activation::Elu, Activation::Identity, 0.0, rng)
}

impl DragonNet {
    pub fn init(n_covariates: usize, rng: &mut TdaRng) -> Result<Self> {
        let trunk = DenseNet::init(&[n_covariates, HIDDEN, HIDDEN], Activation::Elu, Activation::Elu, 0.0, rng)?;
        let propensity = DenseNet::init(&[HIDDEN, HIDDEN, 1], Activation::Elu, Activation::Sigmoid, 0.0, rng)?;
        let heads = [head(rng)?, head(rng)?];
        Ok(DragonNet {
            trunk,
            propensity,
            heads,
            y_mean: 0.0,
            y_scale: 1.0,
        })
    }

    fn nets(&self) -> [&DenseNet; 4] {
        [&self.trunk, &self.propensity, &self.heads[0], &self.heads[1]]
    }

    pub fn n_params(&self) -> usize {
        self.nets().iter().map(|n| n.n_params()).sum()
    }

    /// Trunk, propensity head, control head, treated head, each in its own
    /// flat order.
    pub fn flat_params(&self) -> Vec<f64> {
        self.nets().iter().flat_map(|n| n.flat_params()).collect()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(TdaError::Shape {
                expected: self.n_params(),
                actual: flat.len(),
            });
        }
        let mut off = 0;
        let [h0, h1] = &mut self.heads;
        for net in [&mut self.trunk, &mut self.propensity, h0, h1] {
            let k = net.n_params();
            net.set_flat_params(&flat[off..off + k])?;
            off += k;
        }
        Ok(())
    }

    /// Trunk output (shared representation) for each row of `x`.
    pub fn features(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        Ok(self.trunk.forward_batch(x, None)?.output().clone())
    }

    /// Standardised head outputs `(q0, q1)` for precomputed trunk features.
    pub fn heads_std(&self, feats: ArrayView2<'_, f64>) -> Result<(Vec<f64>, Vec<f64>)> {
        let q0 = self.heads[0].forward_batch(feats, None)?.output().column(0).to_vec();
        let q1 = self.heads[1].forward_batch(feats, None)?.output().column(0).to_vec();
        Ok((q0, q1))
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Predictions> {
        let feats = self.features(x)?;
        let g = self.propensity.forward_batch(feats.view(), None)?.output().column(0).to_vec();
        let (q0, q1) = self.heads_std(feats.view())?;
        let un = |v: Vec<f64>| v.into_iter().map(|q| self.y_mean + self.y_scale * q).collect();
        Ok(Predictions { g, q0: un(q0), q1: un(q1) })
    }

    pub fn standardize(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|v| (v - self.y_mean) / self.y_scale).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_json(&DragonRecord::from(self), path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        load_json::<DragonRecord>(path)?.try_into()
    }
}

#[derive(Serialize, Deserialize)]
struct DragonRecord {
    format: String,
    version: u32,
    y_mean: f64,
    y_scale: f64,
    trunk: NetRecord,
    propensity: NetRecord,
    head0: NetRecord,
    head1: NetRecord,
}

const DRAGON_FORMAT: &str = "tda-dragonnet";

impl From<&DragonNet> for DragonRecord {
    fn from(m: &DragonNet) -> Self {
        DragonRecord {
            format: DRAGON_FORMAT.into(),
            version: 1,
            y_mean: m.y_mean,
            y_scale: m.y_scale,
            trunk: (&m.trunk).into(),
            propensity: (&m.propensity).into(),
            head0: (&m.heads[0]).into(),
            head1: (&m.heads[1]).into(),
        }
    }
}

impl TryFrom<DragonRecord> for DragonNet {
    type Error = TdaError;

    fn try_from(r: DragonRecord) -> Result<Self> {
        if r.format != DRAGON_FORMAT || r.version != 1 {
            return Err(TdaError::Serde(format!(
                "unsupported checkpoint {} v{}",
                r.format, r.version
            )));
        }
        Ok(DragonNet {
            trunk: r.trunk.try_into()?,
            propensity: r.propensity.try_into()?,
            heads: [r.head0.try_into()?, r.head1.try_into()?],
            y_mean: r.y_mean,
            y_scale: r.y_scale,
        })
    }
}

/// Joint objective: binary cross-entropy for the propensity plus squared
/// error of the factual head, optionally with the targeted-regularisation
/// term `λ (y - Q - ε H)²` and a trainable scalar `ε` appended to the
/// parameter vector.
struct DragonObjective<'a> {
    model: DragonNet,
    x: &'a Array2<f64>,
    a: &'a [f64],
    y: Vec<f64>,
    train_rows: &'a [usize],
    val_rows: &'a [usize],
    treg_lambda: Option<f64>,
    epsilon: f64,
}

impl DragonObjective<'_> {
    fn loss_grad(&self, rows: &[usize], want_grad: bool) -> Result<(f64, Vec<f64>)> {
        let m = &self.model;
        let b = rows.len() as f64;
        let x = self.x.select(Axis(0), rows);
        let trunk = m.trunk.forward_batch(x.view(), None)?;
        let feats = trunk.output();
        let prop = m.propensity.forward_batch(feats.view(), None)?;
        let h0 = m.heads[0].forward_batch(feats.view(), None)?;
        let h1 = m.heads[1].forward_batch(feats.view(), None)?;
        let nr = rows.len();
        let mut seed_g = Array2::zeros((nr, 1));
        let mut seed_q = [Array2::zeros((nr, 1)), Array2::zeros((nr, 1))];
        let mut d_eps = 0.0;
        let mut total = 0.0;
        for (k, &i) in rows.iter().enumerate() {
            let a = self.a[i];
            let y = self.y[i];
            let g = prop.output()[[k, 0]].clamp(1e-12, 1.0 - 1e-12);
            let arm = a as usize;
            let q = if arm == 1 { h1.output()[[k, 0]] } else { h0.output()[[k, 0]] };
            let bce = -(a * g.ln() + (1.0 - a) * (1.0 - g).ln());
            let r = q - y;
            total += bce + r * r;
            let mut dg = (-a / g + (1.0 - a) / (1.0 - g)) / b;
            let mut dq = 2.0 * r / b;
            if let Some(lambda) = self.treg_lambda {
                let (gc, clipped) = clip_propensity(g);
                let h = a / gc - (1.0 - a) / (1.0 - gc);
                let t = y - q - self.epsilon * h;
                total += lambda * t * t;
                dq -= 2.0 * lambda * t / b;
                d_eps -= 2.0 * lambda * t * h / b;
                if !clipped {
                    let dh_dg = -a / (gc * gc) - (1.0 - a) / ((1.0 - gc) * (1.0 - gc));
                    dg -= 2.0 * lambda * t * self.epsilon * dh_dg / b;
                }
            }
            seed_g[[k, 0]] = dg;
            seed_q[arm][[k, 0]] = dq;
        }
        let loss = total / b;
        if !want_grad {
            return Ok((loss, Vec::new()));
        }
        let (gp, dfp) = m.propensity.backward_batch(&prop, seed_g.view());
        let (g0, df0) = m.heads[0].backward_batch(&h0, seed_q[0].view());
        let (g1, df1) = m.heads[1].backward_batch(&h1, seed_q[1].view());
        let dfeat = dfp + df0 + df1;
        let (gt, _) = m.trunk.backward_batch(&trunk, dfeat.view());
        let mut grad = Vec::with_capacity(m.n_params() + 1);
        grad.extend(gt);
        grad.extend(gp);
        grad.extend(g0);
        grad.extend(g1);
        if self.treg_lambda.is_some() {
            grad.push(d_eps);
        }
        Ok((loss, grad))
    }
}

impl Objective for DragonObjective<'_> {
    fn params(&self) -> Vec<f64> {
        let mut p = self.model.flat_params();
        if self.treg_lambda.is_some() {
            p.push(self.epsilon);
        }
        p
    }

    fn set_params(&mut self, params: &[f64]) {
        let k = self.model.n_params();
        self.model.set_flat_params(&params[..k]).expect("length preserved");
        if self.treg_lambda.is_some() {
            self.epsilon = params[k];
        }
    }

    fn n_train(&self) -> usize {
        self.train_rows.len()
    }

    fn batch_loss_grad(&mut self, rows: &[usize], _rng: &mut TdaRng) -> Result<(f64, Vec<f64>)> {
        let mapped: Vec<usize> = rows.iter().map(|&r| self.train_rows[r]).collect();
        self.loss_grad(&mapped, true)
    }

    fn validation_loss(&self) -> Result<f64> {
        Ok(self.loss_grad(self.val_rows, false)?.0)
    }
}

/// Output of [`fit_dragonnet`].
#[derive(Clone, Debug)]
pub struct DragonFit {
    pub model: DragonNet,
    pub history: TrainHistory,
    /// Trained fluctuation coefficient (standardised scale) when targeted
    /// regularisation was on.
    pub epsilon: Option<f64>,
}

/// Trains a fresh network on `split.train`, early-stopping on
/// `split.validation`. With `treg_lambda = Some(λ)` the targeted
/// regularisation term and its `ε` (initialised at 0) are trained jointly.
pub fn fit_dragonnet(
    data: &AteDataset,
    split: &Split,
    cfg: &TrainConfig,
    treg_lambda: Option<f64>,
    rng: &mut TdaRng,
) -> Result<DragonFit> {
    if split.train.is_empty() || split.validation.is_empty() {
        return Err(TdaError::Domain("train and validation parts must be nonempty".into()));
    }
    if let Some(l) = treg_lambda {
        if !(l >= 0.0) {
            return Err(TdaError::Config(format!("targeted regularisation weight {l} < 0")));
        }
    }
    let mut model = DragonNet::init(data.n_covariates(), rng)?;
    let ty: Vec<f64> = split.train.iter().map(|&i| data.y[i]).collect();
    let mean = ty.iter().sum::<f64>() / ty.len() as f64;
    let var = ty.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / ty.len() as f64;
    model.y_mean = mean;
    model.y_scale = if var > 0.0 { var.sqrt() } else { 1.0 };
    let y = model.standardize(&data.y);
    let mut obj = DragonObjective {
        model,
        x: &data.x,
        a: &data.a,
        y,
        train_rows: &split.train,
        val_rows: &split.validation,
        treg_lambda,
        epsilon: 0.0,
    };
    let history = train(&mut obj, cfg, rng)?;
    Ok(DragonFit {
        epsilon: treg_lambda.map(|_| obj.epsilon),
        model: obj.model,
        history,
    })
}
