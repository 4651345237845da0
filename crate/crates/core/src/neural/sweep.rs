use super::checkpoint::Timestamp;
use super::train::{train, TrainError};
use super::Hyperparams;
use crate::dataset::Dataset;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const MANIFEST_FILE: &str = "sweep_manifest.csv";

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("sweep grid is empty")]
    EmptyGrid,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Ok,
    Failed,
}

/// One sweep configuration's outcome. Checkpoint paths are relative to the
/// sweep directory and joined with `;`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub config: String,
    pub status: RunStatus,
    pub learning_rate: f64,
    pub hidden_layers: usize,
    pub neurons_per_layer: usize,
    pub batch_size: usize,
    pub dropout_rate: f64,
    pub seed: u64,
    pub epochs_run: usize,
    pub best_epoch: Option<usize>,
    pub best_val_loss: Option<f64>,
    pub best_checkpoint: String,
    pub checkpoints: String,
    pub error: String,
}

impl SweepRow {
    pub fn checkpoint_paths(&self) -> Vec<&str> {
        self.checkpoints
            .split(';')
            .filter(|s| !s.is_empty())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepManifest {
    pub rows: Vec<SweepRow>,
}

impl SweepManifest {
    pub fn write_csv(&self, path: &Path) -> Result<(), SweepError> {
        let csv_err = |source| SweepError::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        for row in &self.rows {
            w.serialize(row).map_err(csv_err)?;
        }
        w.flush().map_err(|source| SweepError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn read_csv(path: &Path) -> Result<Self, SweepError> {
        let csv_err = |source| SweepError::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
        let rows = r
            .deserialize()
            .collect::<Result<Vec<SweepRow>, _>>()
            .map_err(csv_err)?;
        Ok(SweepManifest { rows })
    }

    pub fn successful(&self) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(|r| r.status == RunStatus::Ok)
    }
}

pub fn config_name(index: usize) -> String {
    format!("config-{index:02}")
}

/// Learning rates {4e-6, 1e-5, 2.5e-5, 5e-5} crossed with 1 to 3 hidden
/// layers of 5, 17, 30 or 50 neurons, batch 25, no dropout.
pub fn default_grid(seed: u64) -> Vec<Hyperparams> {
    let mut grid = Vec::new();
    for &learning_rate in &[4e-6, 1e-5, 2.5e-5, 5e-5] {
        for hidden_layers in 1..=3 {
            for &neurons_per_layer in &[5, 17, 30, 50] {
                grid.push(Hyperparams {
                    learning_rate,
                    hidden_layers,
                    neurons_per_layer,
                    seed: seed + grid.len() as u64,
                    ..Hyperparams::default()
                });
            }
        }
    }
    grid
}

/// Six small configurations for desk-scale runs.
pub fn mini_grid(seed: u64) -> Vec<Hyperparams> {
    let shapes = [(1, 15), (1, 30), (2, 17)];
    let mut grid = Vec::new();
    for &learning_rate in &[5e-5, 2.5e-5] {
        for &(hidden_layers, neurons_per_layer) in &shapes {
            grid.push(Hyperparams {
                learning_rate,
                hidden_layers,
                neurons_per_layer,
                seed: seed + grid.len() as u64,
                ..Hyperparams::default()
            });
        }
    }
    grid
}

/// Train every configuration into `dir/config-NN`. Configurations run in
/// parallel; a failed configuration is recorded and the rest continue.
pub fn sweep(
    grid: &[Hyperparams],
    train_set: &Dataset,
    val_set: &Dataset,
    dir: &Path,
    stamp: &Timestamp,
) -> Result<SweepManifest, SweepError> {
    if grid.is_empty() {
        return Err(SweepError::EmptyGrid);
    }
    std::fs::create_dir_all(dir).map_err(|source| SweepError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let rows: Vec<SweepRow> = grid
        .par_iter()
        .enumerate()
        .map(|(i, hp)| {
            let name = config_name(i);
            let result = train(train_set, val_set, hp, &dir.join(&name), stamp);
            row_for(name, hp, result)
        })
        .collect();
    let manifest = SweepManifest { rows };
    manifest.write_csv(&dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

fn row_for(
    name: String,
    hp: &Hyperparams,
    result: Result<super::TrainRun, TrainError>,
) -> SweepRow {
    let mut row = SweepRow {
        config: name.clone(),
        status: RunStatus::Failed,
        learning_rate: hp.learning_rate,
        hidden_layers: hp.hidden_layers,
        neurons_per_layer: hp.neurons_per_layer,
        batch_size: hp.batch_size,
        dropout_rate: hp.dropout_rate,
        seed: hp.seed,
        epochs_run: 0,
        best_epoch: None,
        best_val_loss: None,
        best_checkpoint: String::new(),
        checkpoints: String::new(),
        error: String::new(),
    };
    match result {
        Ok(run) => {
            let rel = |file: String| format!("{name}/{file}");
            row.status = RunStatus::Ok;
            row.epochs_run = run.epochs.len();
            row.best_epoch = Some(run.best_epoch);
            row.best_val_loss = Some(run.best_val_loss);
            row.best_checkpoint = rel(run.best().checkpoint.file_name());
            row.checkpoints = run
                .checkpoints()
                .map(|c| rel(c.file_name()))
                .collect::<Vec<_>>()
                .join(";");
        }
        Err(e) => row.error = e.to_string(),
    }
    row
}
