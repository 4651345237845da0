//! Versioned JSON checkpoints named after their hyperparameters.
//!
//! A checkpoint stem looks like
//! `checkpoint-20241010-023625-actrelu_bs25_dr0.12_ep500_nl2_nn17_lr4e-06-epoch70-valLoss0.0440`
//! and the file on disk is `<stem>.json`.

use super::network::{Layer, Network};
use super::Hyperparams;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;
pub const EXTENSION: &str = "json";
const TIMESTAMP_FORMAT: &str = "%Y%m%d-%H%M%S";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: schema version {found}, expected {SCHEMA_VERSION}")]
    SchemaVersion { path: PathBuf, found: u64 },
    #[error("{path}: corrupt checkpoint: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid checkpoint: {0}")]
    Invalid(String),
}

/// `YYYYMMDD-HHMMSS` wall-clock stamp.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Timestamp(String);

impl Timestamp {
    pub fn parse(s: &str) -> Result<Self, CheckpointError> {
        chrono::NaiveDateTime::parse_from_str(s, TIMESTAMP_FORMAT)
            .map_err(|e| CheckpointError::Invalid(format!("timestamp {s:?}: {e}")))?;
        Ok(Timestamp(s.to_string()))
    }

    pub fn now() -> Self {
        Timestamp(chrono::Local::now().format(TIMESTAMP_FORMAT).to_string())
    }

    /// Midnight, 1 January 1970: the default stamp for reproducible runs.
    pub fn epoch() -> Self {
        Timestamp("19700101-000000".into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Timestamp {
    type Error = CheckpointError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        Timestamp::parse(&s)
    }
}

impl From<Timestamp> for String {
    fn from(t: Timestamp) -> String {
        t.0
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub network: Network,
    pub hyperparams: Hyperparams,
    pub epoch: usize,
    pub val_loss: f64,
    pub created_at: Timestamp,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    schema_version: u32,
    created_at: Timestamp,
    epoch: usize,
    val_loss: f64,
    hyperparams: Hyperparams,
    layer_dims: Vec<usize>,
    layers: Vec<LayerFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerFile {
    /// Row-major, one inner array per output unit.
    weights: Vec<Vec<f64>>,
    biases: Vec<f64>,
}

/// Format a float the way Python's `repr` does (`4e-06`, `0.12`, `0.0`),
/// which is what the checkpoint naming convention uses.
pub fn python_float(x: f64) -> String {
    if x == 0.0 {
        return "0.0".into();
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-4..16).contains(&exp) {
        let sci = format!("{x:e}");
        let (mantissa, e) = sci.split_once('e').expect("scientific format");
        let e: i32 = e.parse().expect("exponent");
        let sign = if e < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", e.abs())
    } else {
        let s = format!("{x}");
        if s.contains('.') {
            s
        } else {
            format!("{s}.0")
        }
    }
}

impl Checkpoint {
    pub fn new(
        network: Network,
        hyperparams: Hyperparams,
        epoch: usize,
        val_loss: f64,
        created_at: Timestamp,
    ) -> Result<Self, CheckpointError> {
        if epoch < 1 {
            return Err(CheckpointError::Invalid("epoch must be at least 1".into()));
        }
        if !(val_loss.is_finite() && val_loss >= 0.0) {
            return Err(CheckpointError::Invalid(format!(
                "val_loss must be finite and non-negative, got {val_loss}"
            )));
        }
        Ok(Checkpoint {
            network,
            hyperparams,
            epoch,
            val_loss,
            created_at,
        })
    }

    /// File stem following the `checkpoint-<stamp>-actrelu_...` convention.
    pub fn stem(&self) -> String {
        let hp = &self.hyperparams;
        format!(
            "checkpoint-{}-actrelu_bs{}_dr{}_ep{}_nl{}_nn{}_lr{}-epoch{}-valLoss{:.4}",
            self.created_at,
            hp.batch_size,
            python_float(hp.dropout_rate),
            hp.max_epochs,
            hp.hidden_layers,
            hp.neurons_per_layer,
            python_float(hp.learning_rate),
            self.epoch,
            self.val_loss
        )
    }

    pub fn file_name(&self) -> String {
        format!("{}.{EXTENSION}", self.stem())
    }

    pub fn to_json(&self) -> String {
        let file = CheckpointFile {
            schema_version: SCHEMA_VERSION,
            created_at: self.created_at.clone(),
            epoch: self.epoch,
            val_loss: self.val_loss,
            hyperparams: self.hyperparams.clone(),
            layer_dims: self.network.layer_dims(),
            layers: self
                .network
                .layers()
                .iter()
                .map(|l| LayerFile {
                    weights: l.weights.chunks(l.inputs).map(<[f64]>::to_vec).collect(),
                    biases: l.biases.clone(),
                })
                .collect(),
        };
        let mut s = serde_json::to_string(&file).expect("checkpoint serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self, CheckpointError> {
        let corrupt = |message: String| CheckpointError::Corrupt {
            path: path.to_path_buf(),
            message,
        };
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| corrupt(e.to_string()))?;
        let found = value
            .get("schema_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| corrupt("missing schema_version".into()))?;
        if found != u64::from(SCHEMA_VERSION) {
            return Err(CheckpointError::SchemaVersion {
                path: path.to_path_buf(),
                found,
            });
        }
        let file: CheckpointFile =
            serde_json::from_value(value).map_err(|e| corrupt(e.to_string()))?;
        let mut layers = Vec::with_capacity(file.layers.len());
        for (i, lf) in file.layers.into_iter().enumerate() {
            let outputs = lf.weights.len();
            let inputs = lf.weights.first().map_or(0, Vec::len);
            if lf.weights.iter().any(|r| r.len() != inputs) {
                return Err(corrupt(format!("layer {i} has ragged weight rows")));
            }
            layers.push(Layer {
                inputs,
                outputs,
                weights: lf.weights.concat(),
                biases: lf.biases,
            });
        }
        let network = Network::from_layers(layers).map_err(|e| corrupt(e.to_string()))?;
        if network.layer_dims() != file.layer_dims {
            return Err(corrupt(format!(
                "declared dims {:?} but weights give {:?}",
                file.layer_dims,
                network.layer_dims()
            )));
        }
        Checkpoint::new(
            network,
            file.hyperparams,
            file.epoch,
            file.val_loss,
            file.created_at,
        )
        .map_err(|e| corrupt(e.to_string()))
    }

    /// Write into `dir` under the conventional file name; returns the path.
    pub fn save_in(&self, dir: &Path) -> Result<PathBuf, CheckpointError> {
        let path = dir.join(self.file_name());
        self.save(&path)?;
        Ok(path)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        std::fs::write(path, self.to_json()).map_err(|source| CheckpointError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let text = std::fs::read_to_string(path).map_err(|source| CheckpointError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Checkpoint::from_json(&text, path)
    }
}

pub fn save_checkpoint(checkpoint: &Checkpoint, path: &Path) -> Result<(), CheckpointError> {
    checkpoint.save(path)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    Checkpoint::load(path)
}
