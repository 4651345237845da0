//! Checkpoint evaluation and consolidated sweep reports.

use crate::dataset::Dataset;
use crate::env::{Action, STATE_DIM};
use crate::neural::network::argmax;
use crate::neural::sweep::SweepManifest;
use crate::neural::{Network, NetworkError, Scratch};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

const K: usize = Action::COUNT;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("test set is empty")]
    EmptyTest,
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("unknown checkpoint id {0:?}")]
    UnknownCheckpoint(String),
    #[error("duplicate entry for checkpoint {0:?}")]
    DuplicateCheckpoint(String),
    #[error("invalid thresholds: {0}")]
    Thresholds(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub total: u64,
    pub correct: u64,
    pub accuracy: f64,
    /// `confusion[predicted][actual]`.
    pub confusion: [[u64; K]; K],
    /// `None` where nothing was predicted as that class.
    pub precision: [Option<f64>; K],
    /// `None` where the class never occurs.
    pub recall: [Option<f64>; K],
}

impl EvalResult {
    pub fn from_confusion(confusion: [[u64; K]; K]) -> Self {
        let total: u64 = confusion.iter().flatten().sum();
        let correct: u64 = (0..K).map(|i| confusion[i][i]).sum();
        let ratio = |num: u64, den: u64| (den > 0).then(|| num as f64 / den as f64);
        let predicted = |i: usize| confusion[i].iter().sum::<u64>();
        let actual = |j: usize| confusion.iter().map(|r| r[j]).sum::<u64>();
        EvalResult {
            total,
            correct,
            accuracy: if total == 0 {
                0.0
            } else {
                correct as f64 / total as f64
            },
            confusion,
            precision: std::array::from_fn(|i| ratio(confusion[i][i], predicted(i))),
            recall: std::array::from_fn(|j| ratio(confusion[j][j], actual(j))),
        }
    }
}

/// Inference-mode argmax predictions over the whole test set.
pub fn evaluate(net: &Network, test: &Dataset) -> Result<EvalResult, ReportError> {
    if test.is_empty() {
        return Err(ReportError::EmptyTest);
    }
    if net.input_dim() != STATE_DIM || net.output_dim() != K {
        return Err(NetworkError::Dimension(format!(
            "network is {}->{}, expected {STATE_DIM}->{K}",
            net.input_dim(),
            net.output_dim()
        ))
        .into());
    }
    let confusion = test
        .examples
        .par_chunks(4096)
        .map(|chunk| {
            let mut scratch = Scratch::new(net);
            let mut counts = [[0u64; K]; K];
            for e in chunk {
                net.forward_into(&e.input(), None, &mut scratch);
                counts[argmax(scratch.output())][e.label.index()] += 1;
            }
            counts
        })
        .reduce(
            || [[0u64; K]; K],
            |mut a, b| {
                for i in 0..K {
                    for j in 0..K {
                        a[i][j] += b[i][j];
                    }
                }
                a
            },
        );
    Ok(EvalResult::from_confusion(confusion))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlagThresholds {
    pub positive_val_loss: f64,
    pub positive_cmni: f64,
    pub negative_cmni: f64,
}

impl Default for FlagThresholds {
    fn default() -> Self {
        FlagThresholds {
            positive_val_loss: 0.06,
            positive_cmni: 0.005,
            negative_cmni: 0.0005,
        }
    }
}

impl FlagThresholds {
    pub fn validate(&self) -> Result<(), ReportError> {
        if !(self.positive_val_loss > 0.0 && self.negative_cmni < self.positive_cmni) {
            return Err(ReportError::Thresholds(format!(
                "need positive_val_loss > 0 and negative_cmni < positive_cmni, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn flag(&self, val_loss: f64, cmni: f64) -> MirrorFlag {
        if val_loss < self.positive_val_loss && cmni > self.positive_cmni {
            MirrorFlag::Positive
        } else if cmni < self.negative_cmni {
            MirrorFlag::Negative
        } else {
            MirrorFlag::Neutral
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MirrorFlag {
    #[serde(rename = "mirror-positive")]
    Positive,
    #[serde(rename = "mirror-negative")]
    Negative,
    #[serde(rename = "")]
    Neutral,
}

/// CMNI summary for one checkpoint, keyed by its path relative to the sweep
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmniEntry {
    pub checkpoint: String,
    pub epoch: usize,
    pub val_loss: f64,
    pub mne: f64,
    pub n_neurons: usize,
    pub cmni: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRow {
    pub config: String,
    pub checkpoint: String,
    pub hidden_layers: usize,
    pub neurons_per_layer: usize,
    pub learning_rate: f64,
    pub epoch: usize,
    pub val_loss: f64,
    pub mns_total: f64,
    pub n_neurons: usize,
    pub cmni: f64,
    pub flag: MirrorFlag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendRow {
    pub config: String,
    pub epoch: usize,
    pub val_loss: f64,
    pub cmni: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub checkpoint: String,
    pub total: u64,
    pub correct: u64,
    pub accuracy: f64,
    pub confusion: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportBundle {
    pub checkpoints: Vec<CheckpointRow>,
    pub trend: Vec<TrendRow>,
    pub evals: Vec<EvalRow>,
    pub files: Vec<PathBuf>,
}

impl ReportBundle {
    pub fn mirror_positive(&self) -> impl Iterator<Item = &CheckpointRow> {
        self.checkpoints
            .iter()
            .filter(|r| r.flag == MirrorFlag::Positive)
    }
}

pub const CHECKPOINTS_FILE: &str = "report_checkpoints.csv";
pub const TREND_FILE: &str = "report_trend.csv";
pub const EVAL_FILE: &str = "report_eval.csv";
pub const SUMMARY_FILE: &str = "report_summary.txt";

fn write_rows<T: Serialize>(rows: &[T], headers: &[&str], path: &Path) -> Result<(), ReportError> {
    let io = |message: String| ReportError::Io {
        path: path.to_path_buf(),
        message,
    };
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|e| io(e.to_string()))?;
    w.write_record(headers).map_err(|e| io(e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| io(e.to_string()))?;
    }
    w.flush().map_err(|e| io(e.to_string()))
}

/// Join sweep rows, per-checkpoint CMNI, and evaluations into CSV tables.
/// Every CMNI and evaluation entry must name a checkpoint listed in the
/// manifest.
pub fn report(
    manifest: &SweepManifest,
    cmni: &[CmniEntry],
    evals: &[(String, EvalResult)],
    flags: &FlagThresholds,
    out_dir: &Path,
) -> Result<ReportBundle, ReportError> {
    flags.validate()?;
    let mut owner = BTreeMap::new();
    for row in &manifest.rows {
        for c in row.checkpoint_paths() {
            owner.insert(c.to_string(), row);
        }
    }
    let mut seen = BTreeSet::new();
    let mut checkpoints = Vec::new();
    for entry in cmni {
        let row = owner
            .get(&entry.checkpoint)
            .ok_or_else(|| ReportError::UnknownCheckpoint(entry.checkpoint.clone()))?;
        if !seen.insert(entry.checkpoint.clone()) {
            return Err(ReportError::DuplicateCheckpoint(entry.checkpoint.clone()));
        }
        checkpoints.push(CheckpointRow {
            config: row.config.clone(),
            checkpoint: entry.checkpoint.clone(),
            hidden_layers: row.hidden_layers,
            neurons_per_layer: row.neurons_per_layer,
            learning_rate: row.learning_rate,
            epoch: entry.epoch,
            val_loss: entry.val_loss,
            mns_total: entry.mne,
            n_neurons: entry.n_neurons,
            cmni: entry.cmni,
            flag: flags.flag(entry.val_loss, entry.cmni),
        });
    }
    checkpoints.sort_by(|a, b| a.config.cmp(&b.config).then(a.epoch.cmp(&b.epoch)));
    let trend = checkpoints
        .iter()
        .map(|r| TrendRow {
            config: r.config.clone(),
            epoch: r.epoch,
            val_loss: r.val_loss,
            cmni: r.cmni,
        })
        .collect();

    let mut eval_ids = BTreeSet::new();
    let mut eval_rows = Vec::new();
    for (id, e) in evals {
        if !owner.contains_key(id) {
            return Err(ReportError::UnknownCheckpoint(id.clone()));
        }
        if !eval_ids.insert(id.clone()) {
            return Err(ReportError::DuplicateCheckpoint(id.clone()));
        }
        eval_rows.push(EvalRow {
            checkpoint: id.clone(),
            total: e.total,
            correct: e.correct,
            accuracy: e.accuracy,
            confusion: e
                .confusion
                .iter()
                .map(|r| r.iter().map(u64::to_string).collect::<Vec<_>>().join(" "))
                .collect::<Vec<_>>()
                .join("; "),
        });
    }

    std::fs::create_dir_all(out_dir).map_err(|e| ReportError::Io {
        path: out_dir.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut bundle = ReportBundle {
        checkpoints,
        trend,
        evals: eval_rows,
        files: Vec::new(),
    };
    let p = out_dir.join(CHECKPOINTS_FILE);
    write_rows(
        &bundle.checkpoints,
        &[
            "config",
            "checkpoint",
            "hidden_layers",
            "neurons_per_layer",
            "learning_rate",
            "epoch",
            "val_loss",
            "mns_total",
            "n_neurons",
            "cmni",
            "flag",
        ],
        &p,
    )?;
    bundle.files.push(p);
    let p = out_dir.join(TREND_FILE);
    write_rows(&bundle.trend, &["config", "epoch", "val_loss", "cmni"], &p)?;
    bundle.files.push(p);
    let p = out_dir.join(EVAL_FILE);
    write_rows(
        &bundle.evals,
        &["checkpoint", "total", "correct", "accuracy", "confusion"],
        &p,
    )?;
    bundle.files.push(p);
    let p = out_dir.join(SUMMARY_FILE);
    std::fs::write(&p, summary_text(manifest, &bundle)).map_err(|e| ReportError::Io {
        path: p.clone(),
        message: e.to_string(),
    })?;
    bundle.files.push(p);
    Ok(bundle)
}

pub fn summary_text(manifest: &SweepManifest, bundle: &ReportBundle) -> String {
    let mut s = String::new();
    let ok = manifest.successful().count();
    let _ = writeln!(
        s,
        "configs: {} ({} ok, {} failed)",
        manifest.rows.len(),
        ok,
        manifest.rows.len() - ok
    );
    for row in &manifest.rows {
        match (row.best_epoch, row.best_val_loss) {
            (Some(e), Some(v)) => {
                let _ = writeln!(s, "{}: best epoch {e}, val loss {v:.4}", row.config);
            }
            _ => {
                let _ = writeln!(s, "{}: failed: {}", row.config, row.error);
            }
        }
    }
    let positive = bundle.mirror_positive().count();
    let negative = bundle
        .checkpoints
        .iter()
        .filter(|r| r.flag == MirrorFlag::Negative)
        .count();
    let _ = writeln!(
        s,
        "checkpoints analysed: {}, mirror-positive: {positive}, mirror-negative: {negative}",
        bundle.checkpoints.len()
    );
    for r in &bundle.checkpoints {
        let _ = writeln!(
            s,
            "  {} epoch {} val_loss {:.4} cmni {:.5}",
            r.config, r.epoch, r.val_loss, r.cmni
        );
    }
    for e in &bundle.evals {
        let _ = writeln!(
            s,
            "eval {}: accuracy {:.4} ({}/{})",
            e.checkpoint, e.accuracy, e.correct, e.total
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_reconciles() {
        let mut c = [[0u64; K]; K];
        c[0][0] = 5;
        c[0][1] = 2;
        c[1][1] = 3;
        c[3][2] = 1;
        let r = EvalResult::from_confusion(c);
        assert_eq!(r.total, 11);
        assert_eq!(r.correct, 8);
        assert_eq!(r.accuracy, 8.0 / 11.0);
        assert_eq!(r.precision[0], Some(5.0 / 7.0));
        assert_eq!(r.precision[2], None);
        assert_eq!(r.recall[1], Some(0.6));
        assert_eq!(r.recall[2], Some(0.0));
        assert_eq!(r.recall[3], None);
    }

    #[test]
    fn flags() {
        let f = FlagThresholds::default();
        assert_eq!(f.flag(0.057, 0.012), MirrorFlag::Positive);
        assert_eq!(f.flag(0.07, 0.012), MirrorFlag::Neutral);
        assert_eq!(f.flag(0.05, 0.0003), MirrorFlag::Negative);
        assert_eq!(f.flag(0.05, 0.003), MirrorFlag::Neutral);
    }
}
