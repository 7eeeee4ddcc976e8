//! Masked-likelihood training with Adam and leaf-mask sampling.

use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::rng::{streams, substream};
use crate::synth::Dataset;

use super::forward::masked_log_likelihood_grad;
use super::masks::sample_leaf_mask_with;
use super::{FansConfig, FansModel};

/// Training hyperparameters. Epochs are a cap; an early stop fires when the
/// moving-average NLL over `early_stop_window` epochs improves by less than
/// `early_stop_tol` against the preceding window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub early_stop_window: usize,
    pub early_stop_tol: f64,
}

impl TrainConfig {
    pub fn defaults_for(config: &FansConfig, seed: u64) -> Self {
        TrainConfig {
            epochs: 5000,
            batch_size: config.default_batch_size(),
            learning_rate: 1e-3,
            seed,
            early_stop_window: 200,
            early_stop_tol: 1e-4,
        }
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr,
        }
    }

    /// One descent step on `params` for loss gradient `grad`.
    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let bc1 = 1.0 - Self::BETA1.powi(self.t);
        let bc2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grad[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grad[i] * grad[i];
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= self.lr * mhat / (vhat.sqrt() + Self::EPS);
        }
    }
}

/// Trains the model in place by maximizing the leaf-masked log-likelihood.
/// Returns the per-epoch mean negative log-likelihood trace. Deterministic
/// for a fixed `(model, dataset, config)`.
pub fn train(model: &mut FansModel, dataset: &Dataset, cfg: &TrainConfig) -> Result<Vec<f64>> {
    let d = model.config().d;
    let m = model.config().m;
    if dataset.d() != d {
        return Err(CoreError::InvalidConfig(format!(
            "dataset has {} variables, model d={d}",
            dataset.d()
        )));
    }
    if cfg.batch_size == 0 {
        return Err(CoreError::InvalidParameter {
            name: "batch_size",
            reason: "must be positive".into(),
        });
    }
    let n = dataset.n();
    let mut params = model.param_vector();
    let mut adam = Adam::new(params.len(), cfg.learning_rate);
    let mut mask_rng = substream(cfg.seed, streams::MASK_SAMPLE);
    let mut shuffle_rng = substream(cfg.seed, streams::SHUFFLE);
    let mut trace = Vec::new();
    let mut indices: Vec<usize> = (0..n).collect();

    for epoch in 0..cfg.epochs {
        indices.shuffle(&mut shuffle_rng);
        let mut epoch_ll = 0.0;
        for (bi, chunk) in indices.chunks(cfg.batch_size).enumerate() {
            let mask = sample_leaf_mask_with(&mut mask_rng, d, m);
            let batch = gather_rows(&dataset.data, chunk);
            let (ll, grad_ll) = masked_log_likelihood_grad(model, &batch, &mask).map_err(|e| match e {
                CoreError::NonFiniteLoss { mask } => CoreError::TrainingDiverged {
                    epoch,
                    batch: bi,
                    mask,
                },
                other => other,
            })?;
            if grad_ll.iter().any(|g| !g.is_finite()) {
                return Err(CoreError::TrainingDiverged {
                    epoch,
                    batch: bi,
                    mask,
                });
            }
            // Minimize the negative log-likelihood.
            let grad_loss: Vec<f64> = grad_ll.iter().map(|g| -g).collect();
            adam.step(&mut params, &grad_loss);
            model.set_param_vector(&params)?;
            epoch_ll += ll * chunk.len() as f64;
        }
        trace.push(-(epoch_ll / n as f64));

        let w = cfg.early_stop_window;
        if w > 0 && trace.len() >= 2 * w {
            let len = trace.len();
            let recent: f64 = trace[len - w..].iter().sum::<f64>() / w as f64;
            let prev: f64 = trace[len - 2 * w..len - w].iter().sum::<f64>() / w as f64;
            if prev - recent < cfg.early_stop_tol {
                break;
            }
        }
    }
    Ok(trace)
}

fn gather_rows(data: &Array2<f64>, rows: &[usize]) -> Array2<f64> {
    Array2::from_shape_fn((rows.len(), data.ncols()), |(i, j)| data[(rows[i], j)])
}
