use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::loss::{Batch, LossKind};
use super::net::DenseNet;
use super::scores::loss_and_seed;
use crate::error::{Result, TdaError};
use crate::rng::{permutation, TdaRng};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Number of consecutive non-improving epochs tolerated.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            adam: AdamConfig::default(),
            batch_size: 128,
            max_epochs: 300,
            patience: 10,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub best_epoch: usize,
}

/// Something trainable by minibatch Adam with validation early stopping.
pub trait Objective {
    fn params(&self) -> Vec<f64>;
    fn set_params(&mut self, params: &[f64]);
    fn n_train(&self) -> usize;
    /// Mean loss and its gradient over the given training rows.
    fn batch_loss_grad(&mut self, rows: &[usize], rng: &mut TdaRng) -> Result<(f64, Vec<f64>)>;
    /// Mean validation loss in inference mode.
    fn validation_loss(&self) -> Result<f64>;
}

/// Minibatch Adam; keeps the parameters with the best validation loss.
/// Training stops once `patience` consecutive epochs fail to improve on it.
pub fn train<O: Objective>(obj: &mut O, cfg: &TrainConfig, rng: &mut TdaRng) -> Result<TrainHistory> {
    if cfg.batch_size == 0 {
        return Err(TdaError::Config("batch size must be at least 1".into()));
    }
    let n = obj.n_train();
    if n == 0 {
        return Err(TdaError::Domain("empty training set".into()));
    }
    let mut params = obj.params();
    let mut adam = AdamState::new(cfg.adam, params.len());
    let mut history = TrainHistory::default();
    let mut best = (f64::INFINITY, params.clone());
    let mut stale = 0;
    for epoch in 0..cfg.max_epochs {
        let order = permutation(n, rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let (loss, grad) = obj.batch_loss_grad(chunk, rng)?;
            if !loss.is_finite() {
                return Err(TdaError::NanLoss { epoch });
            }
            total += loss * chunk.len() as f64;
            adam.step(&mut params, &grad)?;
            obj.set_params(&params);
        }
        let val = obj.validation_loss()?;
        if !val.is_finite() {
            return Err(TdaError::NanLoss { epoch });
        }
        history.train_loss.push(total / n as f64);
        history.val_loss.push(val);
        if val < best.0 {
            best = (val, params.clone());
            history.best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale > cfg.patience {
                break;
            }
        }
    }
    obj.set_params(&best.1);
    Ok(history)
}

/// A `DenseNet` fitted to a training batch, early-stopped on a validation batch.
pub struct DenseObjective<'a> {
    pub net: DenseNet,
    pub loss: LossKind,
    pub train: &'a Batch,
    pub val: &'a Batch,
}

impl Objective for DenseObjective<'_> {
    fn params(&self) -> Vec<f64> {
        self.net.flat_params()
    }

    fn set_params(&mut self, params: &[f64]) {
        self.net.set_flat_params(params).expect("length preserved");
    }

    fn n_train(&self) -> usize {
        self.train.len()
    }

    fn batch_loss_grad(&mut self, rows: &[usize], rng: &mut TdaRng) -> Result<(f64, Vec<f64>)> {
        let sub = self.train.select(rows);
        let cache = self.net.forward_batch(sub.inputs.view(), Some(rng))?;
        let (loss, seed) = loss_and_seed(self.loss, cache.output(), &sub);
        let (grad, _) = self.net.backward_batch(&cache, seed.view());
        Ok((loss, grad))
    }

    fn validation_loss(&self) -> Result<f64> {
        super::scores::mean_loss(&self.net, self.loss, self.val)
    }
}

pub fn train_dense(
    net: DenseNet,
    loss: LossKind,
    train_batch: &Batch,
    val_batch: &Batch,
    cfg: &TrainConfig,
    rng: &mut TdaRng,
) -> Result<(DenseNet, TrainHistory)> {
    let mut obj = DenseObjective {
        net,
        loss,
        train: train_batch,
        val: val_batch,
    };
    let history = train(&mut obj, cfg, rng)?;
    Ok((obj.net, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::net::{Activation, Dense};
    use crate::rng::seeded;
    use ndarray::{array, Array2};

    fn linear_data(n: usize, rng: &mut TdaRng) -> Batch {
        let x = Array2::from_shape_fn((n, 1), |_| crate::rng::normal(rng));
        let y = x.column(0).iter().map(|v| 2.0 * v).collect();
        Batch::new(x, y).unwrap()
    }

    #[test]
    fn learns_slope_two() {
        let mut rng = seeded(11);
        let train_b = linear_data(200, &mut rng);
        let val_b = linear_data(50, &mut rng);
        let net = DenseNet::new(
            vec![Dense::new(array![[0.1]], array![0.0], Activation::Identity).unwrap()],
            0.0,
        )
        .unwrap();
        let cfg = TrainConfig {
            adam: AdamConfig {
                lr: 0.05,
                weight_decay: 0.0,
                ..AdamConfig::default()
            },
            batch_size: 32,
            max_epochs: 400,
            patience: 20,
        };
        let (net, hist) = train_dense(net, LossKind::Mse, &train_b, &val_b, &cfg, &mut rng).unwrap();
        let slope = net.layers()[0].weights[[0, 0]];
        assert!((slope - 2.0).abs() < 0.05, "slope {slope}");
        assert_eq!(hist.train_loss.len(), hist.val_loss.len());
    }

    /// Validation loss that only gets worse after the first epoch.
    struct Worsening {
        p: Vec<f64>,
        epochs: usize,
    }

    impl Objective for Worsening {
        fn params(&self) -> Vec<f64> {
            self.p.clone()
        }
        fn set_params(&mut self, params: &[f64]) {
            self.p = params.to_vec();
        }
        fn n_train(&self) -> usize {
            1
        }
        fn batch_loss_grad(&mut self, _: &[usize], _: &mut TdaRng) -> Result<(f64, Vec<f64>)> {
            self.epochs += 1;
            Ok((1.0, vec![1.0]))
        }
        fn validation_loss(&self) -> Result<f64> {
            Ok(self.epochs as f64)
        }
    }

    #[test]
    fn zero_patience_restores_first_epoch_weights() {
        let mut obj = Worsening { p: vec![0.0], epochs: 0 };
        let cfg = TrainConfig {
            adam: AdamConfig {
                weight_decay: 0.0,
                ..AdamConfig::default()
            },
            batch_size: 1,
            max_epochs: 50,
            patience: 0,
        };
        let mut rng = seeded(0);
        let hist = train(&mut obj, &cfg, &mut rng).unwrap();
        assert_eq!(hist.val_loss.len(), 2);
        assert_eq!(hist.best_epoch, 0);
        // One Adam step of size lr against a positive gradient.
        assert!((obj.p[0] + 1e-3).abs() < 1e-9);
    }

    #[test]
    fn seeded_training_is_bitwise_reproducible() {
        let run = || {
            let mut rng = seeded(5);
            let tb = linear_data(64, &mut rng);
            let vb = linear_data(16, &mut rng);
            let net = DenseNet::init(&[1, 8, 1], Activation::Elu, Activation::Identity, 0.2, &mut rng)
                .unwrap();
            let cfg = TrainConfig {
                max_epochs: 15,
                batch_size: 16,
                ..TrainConfig::default()
            };
            train_dense(net, LossKind::Mse, &tb, &vb, &cfg, &mut rng).unwrap().1
        };
        let a = run();
        let b = run();
        assert_eq!(a, b);
    }

    #[test]
    fn nan_loss_aborts_with_epoch() {
        struct Nan;
        impl Objective for Nan {
            fn params(&self) -> Vec<f64> {
                vec![0.0]
            }
            fn set_params(&mut self, _: &[f64]) {}
            fn n_train(&self) -> usize {
                1
            }
            fn batch_loss_grad(&mut self, _: &[usize], _: &mut TdaRng) -> Result<(f64, Vec<f64>)> {
                Ok((f64::NAN, vec![0.0]))
            }
            fn validation_loss(&self) -> Result<f64> {
                Ok(0.0)
            }
        }
        let err = train(&mut Nan, &TrainConfig::default(), &mut seeded(0)).unwrap_err();
        assert!(matches!(err, TdaError::NanLoss { epoch: 0 }));
    }
}
