use rand::seq::SliceRandom;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{softmax_xent, Adam, AdamConfig, ForwardMode, GradScope, Matrix, Mlp};
use crate::rng::rng_from;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub max_epochs: usize,
    /// Epochs without holdout improvement before stopping.
    pub patience: usize,
    /// Defaults to `min(32, train size)`.
    pub batch_size: Option<usize>,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 200,
            patience: 10,
            batch_size: None,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOutcome {
    pub epochs: usize,
    pub best_epoch: usize,
    /// Mean holdout cross-entropy of the restored parameters.
    pub best_loss: f64,
}

/// Labeled matrix view used by the training routines.
#[derive(Debug, Clone, Copy)]
pub struct Labeled<'a, T> {
    pub inputs: &'a Matrix<T>,
    pub labels: &'a [usize],
}

fn mean_loss<T: Real>(model: &Mlp<T>, data: Labeled<'_, T>) -> Result<f64> {
    let logits = model.logits(data.inputs)?;
    Ok(softmax_xent(&logits, data.labels)?.mean_loss.as_f64())
}

/// Mini-batch Adam on `train` with early stopping on the mean `holdout`
/// loss. The parameters of the best holdout epoch are restored on return.
///
/// Stops once `patience` consecutive epochs fail to improve the best loss,
/// so `patience == 0` trains exactly one epoch.
pub fn train_to_convergence<T: Real>(
    model: &mut Mlp<T>,
    optimizer: &mut Adam<T>,
    train: Labeled<'_, T>,
    holdout: Labeled<'_, T>,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    let n = train.labels.len();
    if n == 0 {
        return Err(Error::Config("training set is empty".into()));
    }
    if cfg.max_epochs == 0 {
        return Err(Error::Config("max_epochs must be >= 1".into()));
    }
    let batch = cfg.batch_size.unwrap_or(32).clamp(1, n);
    let monitor = if holdout.labels.is_empty() { train } else { holdout };
    let mut rng = rng_from(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut best = (f64::INFINITY, 0usize, model.clone());
    let mut since_best = 0;
    let mut epoch = 0;
    while epoch < cfg.max_epochs {
        epoch += 1;
        order.shuffle(&mut rng);
        for ids in order.chunks(batch) {
            let x = train.inputs.select_rows(ids);
            let y: Vec<usize> = ids.iter().map(|&i| train.labels[i]).collect();
            let (logits, cache) = model.forward(&x, ForwardMode::Train { seed: rng.next_u64() })?;
            let loss = softmax_xent(&logits, &y)?.mean_loss;
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    loss: loss.as_f64(),
                });
            }
            let grads = model.backward(&cache, &y, GradScope::AllLayers)?;
            optimizer.step(model, &grads)?;
        }
        let loss = mean_loss(model, monitor)?;
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch, loss });
        }
        if loss < best.0 {
            best = (loss, epoch, model.clone());
            since_best = 0;
        } else {
            since_best += 1;
        }
        if since_best >= cfg.patience {
            break;
        }
    }
    let (best_loss, best_epoch, params) = best;
    *model = params;
    Ok(TrainOutcome {
        epochs: epoch,
        best_epoch,
        best_loss,
    })
}

pub fn accuracy<T: Real>(model: &Mlp<T>, data: Labeled<'_, T>) -> Result<f64> {
    if data.labels.is_empty() {
        return Ok(0.0);
    }
    let pred = model.predict(data.inputs)?;
    let hits = pred.iter().zip(data.labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / data.labels.len() as f64)
}

pub(crate) fn holdout_mean_loss<T: Real>(model: &Mlp<T>, data: Labeled<'_, T>) -> Result<f64> {
    if data.labels.is_empty() {
        return Ok(0.0);
    }
    mean_loss(model, data)
}
