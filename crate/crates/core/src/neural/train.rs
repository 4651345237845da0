use super::checkpoint::{Checkpoint, CheckpointError, Timestamp};
use super::network::{DropoutMask, Gradients, Network, NetworkError, Scratch};
use super::optim::{Adam, OptimizerInfo};
use super::{HyperparamError, Hyperparams};
use crate::dataset::Dataset;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const MANIFEST_FILE: &str = "train_manifest.json";

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Hyperparams(#[from] HyperparamError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{0} set is empty")]
    EmptyData(&'static str),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Patience-based early stopping on validation loss.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: None,
            since_best: 0,
        }
    }

    /// Record an epoch's loss; returns true when training should stop.
    pub fn observe(&mut self, epoch: usize, loss: f64) -> bool {
        match self.best {
            Some((_, best)) if loss >= best => self.since_best += 1,
            _ => {
                self.best = Some((epoch, loss));
                self.since_best = 0;
            }
        }
        self.since_best >= self.patience
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    MaxEpochs,
    EarlyStopping,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub checkpoint: Checkpoint,
    pub train_loss: f64,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainRun {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stop_reason: StopReason,
}

impl TrainRun {
    pub fn checkpoints(&self) -> impl Iterator<Item = &Checkpoint> {
        self.epochs.iter().map(|e| &e.checkpoint)
    }

    pub fn best(&self) -> &EpochRecord {
        &self.epochs[self.best_epoch - 1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainManifest {
    pub hyperparams: Hyperparams,
    pub optimizer: OptimizerInfo,
    pub init: String,
    pub dropout: String,
    pub epochs: Vec<EpochEntry>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stop_reason: StopReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochEntry {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub checkpoint: String,
    pub best: bool,
}

const LOSS_CHUNK: usize = 4096;

/// Mean cross-entropy in inference mode. Chunks are summed in order, so the
/// result does not depend on the thread count.
pub fn mean_loss(net: &Network, data: &Dataset) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    let partial: Vec<f64> = data
        .examples
        .par_chunks(LOSS_CHUNK)
        .map(|chunk| {
            let mut scratch = Scratch::new(net);
            let mut sum = 0.0;
            for e in chunk {
                net.forward_into(&e.input(), None, &mut scratch);
                sum += super::network::loss(scratch.output(), e.label.index());
            }
            sum
        })
        .collect();
    partial.iter().sum::<f64>() / data.len() as f64
}

fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Initial network for `hp`: He-uniform weights from the run seed.
pub fn initial_network(hp: &Hyperparams) -> Result<Network, NetworkError> {
    Network::he_uniform(&hp.layer_dims(), &mut rng_stream(hp.seed, 0))
}

/// Mini-batch Adam with a checkpoint after every epoch and patience-based
/// early stopping on validation loss.
pub fn train(
    train_set: &Dataset,
    val_set: &Dataset,
    hp: &Hyperparams,
    dir: &Path,
    stamp: &Timestamp,
) -> Result<TrainRun, TrainError> {
    hp.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptyData("training"));
    }
    if val_set.is_empty() {
        return Err(TrainError::EmptyData("validation"));
    }
    std::fs::create_dir_all(dir).map_err(|source| TrainError::Io {
        path: dir.to_path_buf(),
        source,
    })?;

    let mut net = initial_network(hp)?;
    let mut adam = Adam::new(&net, hp.learning_rate);
    let mut rng = rng_stream(hp.seed, 1);
    let hidden = net.hidden_dims();
    let mut grads = Gradients::zeros_like(&net);
    let mut scratch = Scratch::new(&net);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut stopper = EarlyStopping::new(hp.patience);
    let mut epochs = Vec::new();
    let mut stop_reason = StopReason::MaxEpochs;

    for epoch in 1..=hp.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch_index, batch) in order.chunks(hp.batch_size).enumerate() {
            grads.clear();
            let mut batch_loss = 0.0;
            for &i in batch {
                let example = &train_set.examples[i];
                let mask = (hp.dropout_rate > 0.0)
                    .then(|| DropoutMask::sample(&hidden, hp.dropout_rate, &mut rng));
                batch_loss += net.accumulate(
                    &example.input(),
                    example.label.index(),
                    mask.as_ref(),
                    &mut grads,
                    &mut scratch,
                );
            }
            if !batch_loss.is_finite() {
                return Err(TrainError::NonFinite {
                    epoch,
                    batch: batch_index,
                });
            }
            epoch_loss += batch_loss;
            grads.scale(1.0 / batch.len() as f64);
            adam.step(&mut net, &grads);
        }
        if !net.is_finite() {
            return Err(TrainError::NonFinite {
                epoch,
                batch: order.len().div_ceil(hp.batch_size),
            });
        }
        let val_loss = mean_loss(&net, val_set);
        if !val_loss.is_finite() {
            return Err(TrainError::NonFinite {
                epoch,
                batch: order.len().div_ceil(hp.batch_size),
            });
        }
        let checkpoint = Checkpoint::new(net.clone(), hp.clone(), epoch, val_loss, stamp.clone())?;
        let path = checkpoint.save_in(dir)?;
        epochs.push(EpochRecord {
            checkpoint,
            train_loss: epoch_loss / train_set.len() as f64,
            path,
        });
        if stopper.observe(epoch, val_loss) {
            stop_reason = StopReason::EarlyStopping;
            break;
        }
    }

    let (best_epoch, best_val_loss) = stopper.best().expect("at least one epoch ran");
    let manifest = TrainManifest {
        hyperparams: hp.clone(),
        optimizer: adam.info(),
        init: "he-uniform".into(),
        dropout: "inverted".into(),
        epochs: epochs
            .iter()
            .map(|e| EpochEntry {
                epoch: e.checkpoint.epoch,
                train_loss: e.train_loss,
                val_loss: e.checkpoint.val_loss,
                checkpoint: e.checkpoint.file_name(),
                best: e.checkpoint.epoch == best_epoch,
            })
            .collect(),
        best_epoch,
        best_val_loss,
        stop_reason,
    };
    let path = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    std::fs::write(&path, text).map_err(|source| TrainError::Io { path, source })?;

    Ok(TrainRun {
        epochs,
        best_epoch,
        best_val_loss,
        stop_reason,
    })
}
