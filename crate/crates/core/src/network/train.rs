//! Mini-batch MSE training loop: seeded per-epoch shuffling, Adam updates,
//! and a per-epoch loss log. Single-threaded by construction so that a fixed
//! seed reproduces parameters bitwise.

use super::{adam_step, AdamState, Model, NetworkError};
use crate::tensor::{Tensor, TensorError};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 2000,
            batch_size: 32,
            lr: 1e-3,
            seed: 0,
            shuffle: true,
        }
    }
}

/// Per-epoch mean training loss, in epoch order.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    pub epoch_losses: Vec<f64>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss\n");
        for (i, loss) in self.epoch_losses.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i + 1, loss));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_csv())
    }
}

/// Mean squared error over all elements and its gradient 2(pred - target)/N.
pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor), NetworkError> {
    if pred.shape() != target.shape() {
        return Err(NetworkError::Tensor(TensorError::ShapeMismatch {
            context: "mse_loss",
            expected: format!("{:?}", target.shape()),
            actual: format!("{:?}", pred.shape()),
        }));
    }
    let n = pred.len() as f64;
    let mut grad = Tensor::zeros(
        pred.batch(),
        pred.height(),
        pred.width(),
        pred.channels(),
    );
    let mut loss = 0.0;
    for ((g, &p), &t) in grad
        .data_mut()
        .iter_mut()
        .zip(pred.data())
        .zip(target.data())
    {
        let d = p - t;
        loss += d * d;
        *g = 2.0 * d / n;
    }
    Ok((loss / n, grad))
}

/// Copies the selected sample rows into a contiguous batch tensor.
fn gather(t: &Tensor, idx: &[usize]) -> Tensor {
    let [_, h, w, c] = t.shape();
    let row = h * w * c;
    let mut out = Tensor::zeros(idx.len(), h, w, c);
    for (bi, &si) in idx.iter().enumerate() {
        out.data_mut()[bi * row..(bi + 1) * row].copy_from_slice(&t.data()[si * row..(si + 1) * row]);
    }
    out
}

/// Trains `model` in place on (inputs, targets) stacked along the batch axis.
///
/// The recorded loss for each epoch is the sample-weighted mean of the batch
/// losses measured before their update, so epoch 1 reports the initial model.
pub fn train(
    model: &mut Model,
    inputs: &Tensor,
    targets: &Tensor,
    cfg: &TrainConfig,
) -> Result<TrainLog, NetworkError> {
    let n = inputs.batch();
    if n == 0 {
        return Err(NetworkError::EmptyDataset);
    }
    if targets.batch() != n {
        return Err(NetworkError::BatchMismatch {
            inputs: n,
            targets: targets.batch(),
        });
    }
    if cfg.batch_size == 0 || cfg.batch_size > n {
        return Err(NetworkError::BadBatchSize {
            batch: cfg.batch_size,
            samples: n,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(model, cfg.lr);
    let mut indices: Vec<usize> = (0..n).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        if cfg.shuffle {
            indices.shuffle(&mut rng);
        }
        let mut weighted = 0.0;
        for chunk in indices.chunks(cfg.batch_size) {
            let bx = gather(inputs, chunk);
            let by = gather(targets, chunk);
            let (out, cache) = model.forward_cached(&bx)?;
            let (loss, grad) = mse_loss(&out, &by)?;
            if !loss.is_finite() {
                return Err(NetworkError::NonFiniteLoss {
                    epoch,
                    norms: model.weight_norms(),
                });
            }
            weighted += loss * chunk.len() as f64;
            let (grads, _) = model.backward(&cache, &grad)?;
            adam_step(&mut adam, model, &grads)?;
        }
        epoch_losses.push(weighted / n as f64);
    }
    Ok(TrainLog { epoch_losses })
}
