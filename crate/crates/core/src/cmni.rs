//! Mirror neuron scores and the checkpoint-level index.

use crate::env::Action;
use crate::probes::{NeuronStats, ScenarioId};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CmniError {
    #[error("layer {layer} neuron {neuron}: missing scenario {scenario}")]
    MissingScenario {
        layer: usize,
        neuron: usize,
        scenario: ScenarioId,
    },
    #[error("layer {layer} neuron {neuron}: duplicate entry{}", .scenario.map(|s| format!(" for scenario {s}")).unwrap_or_default())]
    Duplicate {
        layer: usize,
        neuron: usize,
        scenario: Option<ScenarioId>,
    },
    #[error("incomplete neuron coverage: {0}")]
    Coverage(String),
    #[error("invalid thresholds: {0}")]
    Thresholds(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

/// (layer, neuron), layers 1-based with the output layer last.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NeuronRef {
    pub layer: usize,
    pub neuron: usize,
}

impl std::fmt::Display for NeuronRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "L{}N{}", self.layer, self.neuron)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeuronDelta {
    pub layer: usize,
    pub neuron: usize,
    pub mean_none: f64,
    pub mean_frog: f64,
    pub mean_toad: f64,
    pub mean_both: f64,
    pub delta_frog: f64,
    pub delta_toad: f64,
    pub mns: f64,
}

impl NeuronDelta {
    pub fn from_means(layer: usize, neuron: usize, means: [f64; 4]) -> Self {
        let [none, frog, toad, both] = means;
        let delta_frog = frog - none;
        let delta_toad = toad - none;
        NeuronDelta {
            layer,
            neuron,
            mean_none: none,
            mean_frog: frog,
            mean_toad: toad,
            mean_both: both,
            delta_frog,
            delta_toad,
            mns: delta_frog.min(delta_toad),
        }
    }

    pub fn id(&self) -> NeuronRef {
        NeuronRef {
            layer: self.layer,
            neuron: self.neuron,
        }
    }

    pub fn max_delta(&self) -> f64 {
        self.delta_frog.max(self.delta_toad)
    }

    /// μ(1,1) / μ(0,0), or `None` when the baseline is zero.
    pub fn amplification(&self) -> Option<f64> {
        (self.mean_none != 0.0).then(|| self.mean_both / self.mean_none)
    }
}

/// Group per-scenario stats into per-neuron deltas, ordered by (layer, neuron).
pub fn deltas(stats: &[NeuronStats]) -> Result<Vec<NeuronDelta>, CmniError> {
    let mut grouped: BTreeMap<NeuronRef, [Option<f64>; 4]> = BTreeMap::new();
    for s in stats {
        let slot = &mut grouped
            .entry(NeuronRef {
                layer: s.layer,
                neuron: s.neuron,
            })
            .or_default()[s.scenario.index()];
        if slot.is_some() {
            return Err(CmniError::Duplicate {
                layer: s.layer,
                neuron: s.neuron,
                scenario: Some(s.scenario),
            });
        }
        *slot = Some(s.moments.mean);
    }
    grouped
        .into_iter()
        .map(|(id, means)| {
            let mut full = [0.0; 4];
            for scenario in ScenarioId::ALL {
                full[scenario.index()] =
                    means[scenario.index()].ok_or(CmniError::MissingScenario {
                        layer: id.layer,
                        neuron: id.neuron,
                        scenario,
                    })?;
            }
            Ok(NeuronDelta::from_means(id.layer, id.neuron, full))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Candidates have MNS strictly above this.
    pub candidate_mns: f64,
    /// Differentiators respond to one agent by more than this while their
    /// MNS stays at or below `candidate_mns`.
    pub differentiator_delta: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            candidate_mns: 0.01,
            differentiator_delta: 0.02,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<(), CmniError> {
        for (name, v) in [
            ("candidate_mns", self.candidate_mns),
            ("differentiator_delta", self.differentiator_delta),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(CmniError::Thresholds(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn is_candidate(&self, d: &NeuronDelta) -> bool {
        d.mns > self.candidate_mns
    }

    pub fn is_differentiator(&self, d: &NeuronDelta) -> bool {
        d.max_delta() > self.differentiator_delta && d.mns <= self.candidate_mns
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmniReport {
    pub deltas: Vec<NeuronDelta>,
    pub layer_sizes: Vec<usize>,
    pub mne: f64,
    pub n_neurons: usize,
    pub cmni: f64,
    pub thresholds: Thresholds,
    pub candidates: Vec<NeuronRef>,
    pub differentiators: Vec<NeuronRef>,
}

/// Sum MNS over every hidden and output neuron and normalize by their count.
/// Deltas must cover layers `1..=k+1` with contiguous neuron indices and a
/// four-neuron output layer.
pub fn cmni(deltas: &[NeuronDelta], thresholds: &Thresholds) -> Result<CmniReport, CmniError> {
    thresholds.validate()?;
    let mut sorted: Vec<NeuronDelta> = deltas.to_vec();
    sorted.sort_by_key(|d| d.id());
    for pair in sorted.windows(2) {
        if pair[0].id() == pair[1].id() {
            return Err(CmniError::Duplicate {
                layer: pair[0].layer,
                neuron: pair[0].neuron,
                scenario: None,
            });
        }
    }
    let mut layer_sizes: Vec<usize> = Vec::new();
    for d in &sorted {
        if d.layer == 0 || d.layer > layer_sizes.len() + 1 {
            return Err(CmniError::Coverage(format!("unexpected layer {}", d.layer)));
        }
        if d.layer == layer_sizes.len() + 1 {
            layer_sizes.push(0);
        }
        let size = &mut layer_sizes[d.layer - 1];
        if d.neuron != *size {
            return Err(CmniError::Coverage(format!(
                "layer {} is missing neuron {}",
                d.layer, *size
            )));
        }
        *size += 1;
    }
    if layer_sizes.len() < 2 {
        return Err(CmniError::Coverage(
            "need at least one hidden layer and the output layer".into(),
        ));
    }
    if layer_sizes.last() != Some(&Action::COUNT) {
        return Err(CmniError::Coverage(format!(
            "output layer has {} neurons, expected {}",
            layer_sizes.last().unwrap(),
            Action::COUNT
        )));
    }

    let mne: f64 = sorted.iter().map(|d| d.mns).sum();
    let n_neurons = sorted.len();
    let candidates = sorted
        .iter()
        .filter(|d| thresholds.is_candidate(d))
        .map(NeuronDelta::id)
        .collect();
    let differentiators = sorted
        .iter()
        .filter(|d| thresholds.is_differentiator(d))
        .map(NeuronDelta::id)
        .collect();
    Ok(CmniReport {
        deltas: sorted,
        layer_sizes,
        mne,
        n_neurons,
        cmni: mne / n_neurons as f64,
        thresholds: *thresholds,
        candidates,
        differentiators,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub neuron: NeuronRef,
    pub mns: f64,
    /// `None` marks a zero baseline.
    pub amplification: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSummary {
    pub candidates: Vec<CandidateSummary>,
    pub differentiators: Vec<NeuronRef>,
    /// Every neuron, highest MNS first.
    pub ranking: Vec<NeuronRef>,
}

pub fn classify_case(report: &CmniReport, thresholds: &Thresholds) -> CaseSummary {
    let mut ranked: Vec<&NeuronDelta> = report.deltas.iter().collect();
    ranked.sort_by(|a, b| b.mns.total_cmp(&a.mns).then(a.id().cmp(&b.id())));
    CaseSummary {
        candidates: ranked
            .iter()
            .filter(|d| thresholds.is_candidate(d))
            .map(|d| CandidateSummary {
                neuron: d.id(),
                mns: d.mns,
                amplification: d.amplification(),
            })
            .collect(),
        differentiators: report
            .deltas
            .iter()
            .filter(|d| thresholds.is_differentiator(d))
            .map(NeuronDelta::id)
            .collect(),
        ranking: ranked.iter().map(|d| d.id()).collect(),
    }
}

pub fn write_report_json(report: &CmniReport, path: &Path) -> Result<(), CmniError> {
    let mut text = serde_json::to_string_pretty(report).expect("report serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CmniError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn read_report_json(path: &Path) -> Result<CmniReport, CmniError> {
    let io = |message: String| CmniError::Io {
        path: path.to_path_buf(),
        message,
    };
    let text = std::fs::read_to_string(path).map_err(|e| io(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| io(e.to_string()))
}

pub fn write_deltas_csv(report: &CmniReport, path: &Path) -> Result<(), CmniError> {
    let io = |e: csv::Error| CmniError::Io {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    for d in &report.deltas {
        w.serialize(d).map_err(io)?;
    }
    w.flush().map_err(|e| io(e.into()))
}
