//! From-scratch MLP: forward/backward passes, Adam, training with early
//! stopping, per-epoch checkpoints, and a sweep driver.

pub mod checkpoint;
pub mod network;
pub mod optim;
pub mod sweep;
pub mod train;

pub use checkpoint::{Checkpoint, CheckpointError, Timestamp};
pub use network::{DropoutMask, ForwardPass, Gradients, Layer, Network, NetworkError, Scratch};
pub use optim::Adam;
pub use sweep::{sweep, SweepError, SweepManifest, SweepRow};
pub use train::{train, EarlyStopping, TrainError, TrainRun};

use crate::env::{Action, STATE_DIM};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid hyperparameters: {0}")]
pub struct HyperparamError(pub String);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub hidden_layers: usize,
    pub neurons_per_layer: usize,
    pub batch_size: usize,
    pub dropout_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            learning_rate: 5e-5,
            hidden_layers: 1,
            neurons_per_layer: 15,
            batch_size: 25,
            dropout_rate: 0.0,
            max_epochs: 50,
            patience: 10,
            seed: 0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), HyperparamError> {
        let err = |m: String| Err(HyperparamError(m));
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return err(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if !(1..=3).contains(&self.hidden_layers) {
            return err(format!(
                "hidden_layers must be in 1..=3, got {}",
                self.hidden_layers
            ));
        }
        if !(5..=50).contains(&self.neurons_per_layer) {
            return err(format!(
                "neurons_per_layer must be in 5..=50, got {}",
                self.neurons_per_layer
            ));
        }
        if !(20..=25).contains(&self.batch_size) {
            return err(format!(
                "batch_size must be in 20..=25, got {}",
                self.batch_size
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return err(format!(
                "dropout_rate must be in [0, 1), got {}",
                self.dropout_rate
            ));
        }
        if self.max_epochs == 0 {
            return err("max_epochs must be at least 1".into());
        }
        if self.patience == 0 {
            return err("patience must be at least 1".into());
        }
        Ok(())
    }

    /// Layer widths `[100, h, .., h, 4]`.
    pub fn layer_dims(&self) -> Vec<usize> {
        std::iter::once(STATE_DIM)
            .chain(std::iter::repeat_n(
                self.neurons_per_layer,
                self.hidden_layers,
            ))
            .chain(std::iter::once(Action::COUNT))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_enforced() {
        assert!(Hyperparams::default().validate().is_ok());
        let cases = [
            Hyperparams {
                learning_rate: 0.0,
                ..Default::default()
            },
            Hyperparams {
                hidden_layers: 4,
                ..Default::default()
            },
            Hyperparams {
                neurons_per_layer: 4,
                ..Default::default()
            },
            Hyperparams {
                neurons_per_layer: 51,
                ..Default::default()
            },
            Hyperparams {
                batch_size: 19,
                ..Default::default()
            },
            Hyperparams {
                dropout_rate: 1.0,
                ..Default::default()
            },
            Hyperparams {
                max_epochs: 0,
                ..Default::default()
            },
        ];
        for c in cases {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn dims() {
        let hp = Hyperparams {
            hidden_layers: 2,
            neurons_per_layer: 17,
            ..Default::default()
        };
        assert_eq!(hp.layer_dims(), vec![100, 17, 17, 4]);
    }
}
