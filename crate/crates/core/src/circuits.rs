//! Weight-space pathway extraction: per-matrix z-scores, hub detection, and
//! graph export.

use crate::cmni::NeuronRef;
use crate::env::Action;
use crate::neural::Network;
use crate::probes::MomentAccumulator;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CircuitError {
    #[error("layers {from} and {to} are not adjacent in a network with {layers} weight matrices")]
    NotAdjacent {
        from: usize,
        to: usize,
        layers: usize,
    },
    #[error("weight matrix {from}->{to} has zero spread")]
    ZeroSpread { from: usize, to: usize },
    #[error("candidate set is empty")]
    NoCandidates,
    #[error("neuron {0} is not in the network")]
    UnknownNeuron(NeuronRef),
    #[error("invalid thresholds: {0}")]
    Thresholds(String),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightEdge {
    pub from_layer: usize,
    pub from_neuron: usize,
    pub to_layer: usize,
    pub to_neuron: usize,
    pub weight: f64,
    pub zscore: f64,
}

impl WeightEdge {
    pub fn from(&self) -> NeuronRef {
        NeuronRef {
            layer: self.from_layer,
            neuron: self.from_neuron,
        }
    }

    pub fn to(&self) -> NeuronRef {
        NeuronRef {
            layer: self.to_layer,
            neuron: self.to_neuron,
        }
    }
}

/// Z-scored edges of the matrix feeding `to_layer` from `from_layer`.
/// Layer 0 is the input; the output layer is `hidden layers + 1`.
/// Standardization uses the population standard deviation of the matrix.
pub fn edge_zscores(
    net: &Network,
    from_layer: usize,
    to_layer: usize,
) -> Result<Vec<WeightEdge>, CircuitError> {
    let layers = net.layers().len();
    if to_layer != from_layer + 1 || to_layer > layers {
        return Err(CircuitError::NotAdjacent {
            from: from_layer,
            to: to_layer,
            layers,
        });
    }
    let matrix = &net.layers()[from_layer];
    let mut acc = MomentAccumulator::default();
    matrix.weights.iter().for_each(|&w| acc.push(w));
    let sd = acc.population_variance().sqrt();
    if sd == 0.0 {
        return Err(CircuitError::ZeroSpread {
            from: from_layer,
            to: to_layer,
        });
    }
    let mean = acc.mean();
    let mut edges = Vec::with_capacity(matrix.weights.len());
    for to in 0..matrix.outputs {
        for from in 0..matrix.inputs {
            let weight = matrix.weight(to, from);
            edges.push(WeightEdge {
                from_layer,
                from_neuron: from,
                to_layer,
                to_neuron: to,
                weight,
                zscore: (weight - mean) / sd,
            });
        }
    }
    Ok(edges)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HubThresholds {
    /// Candidate share at or above which a hub is mirror-driven.
    pub mirror_share: f64,
    /// Candidate share at or below which a hub is differentiator-driven.
    pub differentiator_share: f64,
    /// Minimum summed positive z-score from candidates and differentiators.
    pub min_zsum: f64,
    /// Gap by which the top outgoing z-score must beat every other.
    pub dominance_gap: f64,
}

impl Default for HubThresholds {
    fn default() -> Self {
        HubThresholds {
            mirror_share: 0.8,
            differentiator_share: 0.2,
            min_zsum: 2.0,
            dominance_gap: 1.0,
        }
    }
}

impl HubThresholds {
    pub fn validate(&self) -> Result<(), CircuitError> {
        let bad = |m: String| Err(CircuitError::Thresholds(m));
        if !(self.differentiator_share > 0.0
            && self.differentiator_share < self.mirror_share
            && self.mirror_share < 1.0)
        {
            return bad(format!(
                "need 0 < differentiator_share < mirror_share < 1, got {} and {}",
                self.differentiator_share, self.mirror_share
            ));
        }
        if !(self.min_zsum.is_finite() && self.min_zsum > 0.0) {
            return bad(format!("min_zsum must be positive, got {}", self.min_zsum));
        }
        if !(self.dominance_gap.is_finite() && self.dominance_gap > 0.0) {
            return bad(format!(
                "dominance_gap must be positive, got {}",
                self.dominance_gap
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HubClass {
    MirrorDriven,
    DifferentiatorDriven,
    Mixed,
}

impl HubClass {
    pub fn name(self) -> &'static str {
        match self {
            HubClass::MirrorDriven => "mirror-driven",
            HubClass::DifferentiatorDriven => "differentiator-driven",
            HubClass::Mixed => "mixed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitGraph {
    pub name: String,
    pub class: HubClass,
    pub hub: NeuronRef,
    pub candidate_zsum: f64,
    pub differentiator_zsum: f64,
    pub candidate_share: f64,
    pub incoming: Vec<WeightEdge>,
    pub outgoing: Vec<WeightEdge>,
    pub action_target: Option<Action>,
}

fn sort_by_magnitude(edges: &mut [WeightEdge]) {
    edges.sort_by(|a, b| {
        b.zscore
            .abs()
            .total_cmp(&a.zscore.abs())
            .then(a.from().cmp(&b.from()))
            .then(a.to().cmp(&b.to()))
    });
}

/// The output action whose incoming edge from `outgoing` beats every other by
/// at least `gap` z-units.
fn dominant_action(outgoing: &[WeightEdge], gap: f64) -> Option<Action> {
    let mut by_z: Vec<&WeightEdge> = outgoing.iter().collect();
    by_z.sort_by(|a, b| b.zscore.total_cmp(&a.zscore));
    match by_z.as_slice() {
        [top] => Action::from_index(top.to_neuron),
        [top, second, ..] if top.zscore - second.zscore >= gap => Action::from_index(top.to_neuron),
        _ => None,
    }
}

/// Classify every neuron in the layer after each candidate layer by where
/// its strong positive inputs come from.
pub fn find_hubs(
    net: &Network,
    candidates: &[NeuronRef],
    differentiators: &[NeuronRef],
    thresholds: &HubThresholds,
) -> Result<Vec<CircuitGraph>, CircuitError> {
    thresholds.validate()?;
    if candidates.is_empty() {
        return Err(CircuitError::NoCandidates);
    }
    let dims = net.layer_dims();
    let output_layer = dims.len() - 1;
    for &n in candidates.iter().chain(differentiators) {
        if n.layer == 0 || n.layer >= dims.len() || n.neuron >= dims[n.layer] {
            return Err(CircuitError::UnknownNeuron(n));
        }
    }
    let cand: BTreeSet<NeuronRef> = candidates.iter().copied().collect();
    let diff: BTreeSet<NeuronRef> = differentiators.iter().copied().collect();
    let source_layers: BTreeSet<usize> = cand
        .iter()
        .map(|n| n.layer)
        .filter(|&l| l < output_layer)
        .collect();

    let mut graphs = Vec::new();
    for layer in source_layers {
        let hub_layer = layer + 1;
        let incoming_all = edge_zscores(net, layer, hub_layer)?;
        let outgoing_all = if hub_layer < output_layer {
            Some(edge_zscores(net, hub_layer, hub_layer + 1)?)
        } else {
            None
        };
        let mut by_hub: BTreeMap<usize, Vec<WeightEdge>> = BTreeMap::new();
        for e in incoming_all {
            by_hub.entry(e.to_neuron).or_default().push(e);
        }
        for (hub_neuron, mut incoming) in by_hub {
            let strong = |set: &BTreeSet<NeuronRef>| -> f64 {
                incoming
                    .iter()
                    .filter(|e| e.weight > 0.0 && e.zscore > 0.0 && set.contains(&e.from()))
                    .map(|e| e.zscore)
                    .sum()
            };
            let candidate_zsum = strong(&cand);
            let differentiator_zsum = strong(&diff);
            let total = candidate_zsum + differentiator_zsum;
            if total < thresholds.min_zsum {
                continue;
            }
            let candidate_share = candidate_zsum / total;
            let class = if candidate_share >= thresholds.mirror_share {
                HubClass::MirrorDriven
            } else if candidate_share <= thresholds.differentiator_share {
                HubClass::DifferentiatorDriven
            } else {
                HubClass::Mixed
            };
            let hub = NeuronRef {
                layer: hub_layer,
                neuron: hub_neuron,
            };
            let mut outgoing: Vec<WeightEdge> = outgoing_all
                .iter()
                .flatten()
                .filter(|e| e.from_neuron == hub_neuron)
                .copied()
                .collect();
            let action_target = if hub_layer == output_layer {
                Action::from_index(hub_neuron)
            } else if hub_layer + 1 == output_layer {
                dominant_action(&outgoing, thresholds.dominance_gap)
            } else {
                None
            };
            sort_by_magnitude(&mut incoming);
            sort_by_magnitude(&mut outgoing);
            graphs.push(CircuitGraph {
                name: format!("{hub} {}", class.name()),
                class,
                hub,
                candidate_zsum,
                differentiator_zsum,
                candidate_share,
                incoming,
                outgoing,
                action_target,
            });
        }
    }
    Ok(graphs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub id: String,
    pub layer: usize,
    pub neuron: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphFile {
    pub zscore_threshold: f64,
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<WeightEdge>,
    pub graphs: Vec<CircuitGraph>,
}

/// Keep only edges with |z| at or above `threshold`.
pub fn filter_edges(graphs: &[CircuitGraph], threshold: f64) -> Vec<CircuitGraph> {
    graphs
        .iter()
        .map(|g| {
            let keep = |edges: &[WeightEdge]| -> Vec<WeightEdge> {
                edges
                    .iter()
                    .filter(|e| e.zscore.abs() >= threshold)
                    .copied()
                    .collect()
            };
            CircuitGraph {
                incoming: keep(&g.incoming),
                outgoing: keep(&g.outgoing),
                ..g.clone()
            }
        })
        .collect()
}

pub fn graph_file(graphs: &[CircuitGraph], threshold: f64) -> GraphFile {
    let graphs = filter_edges(graphs, threshold);
    let mut nodes = BTreeSet::new();
    let mut edges: BTreeMap<(NeuronRef, NeuronRef), WeightEdge> = BTreeMap::new();
    for g in &graphs {
        nodes.insert(g.hub);
        for e in g.incoming.iter().chain(&g.outgoing) {
            nodes.insert(e.from());
            nodes.insert(e.to());
            edges.insert((e.from(), e.to()), *e);
        }
    }
    GraphFile {
        zscore_threshold: threshold,
        nodes: nodes
            .into_iter()
            .map(|n| GraphNode {
                id: n.to_string(),
                layer: n.layer,
                neuron: n.neuron,
            })
            .collect(),
        edges: edges.into_values().collect(),
        graphs,
    }
}

pub fn adjacency_text(graphs: &[CircuitGraph]) -> String {
    let mut out = String::new();
    for g in graphs {
        let _ = writeln!(
            out,
            "{} [{}] candidate z {:.4}, differentiator z {:.4}, share {:.4}",
            g.hub,
            g.class.name(),
            g.candidate_zsum,
            g.differentiator_zsum,
            g.candidate_share
        );
        for e in &g.incoming {
            let _ = writeln!(out, "  <- {} w={:.4} z={:.4}", e.from(), e.weight, e.zscore);
        }
        for e in &g.outgoing {
            let _ = writeln!(out, "  -> {} w={:.4} z={:.4}", e.to(), e.weight, e.zscore);
        }
        if let Some(a) = g.action_target {
            let _ = writeln!(out, "  => {a}");
        }
    }
    out
}

/// Write `<stem>.json` and `<stem>.txt` next to each other; returns both paths.
pub fn export_graph(
    graphs: &[CircuitGraph],
    path: &Path,
    threshold: f64,
) -> Result<(PathBuf, PathBuf), CircuitError> {
    let json_path = path.with_extension("json");
    let txt_path = path.with_extension("txt");
    let file = graph_file(graphs, threshold);
    let mut text = serde_json::to_string_pretty(&file).expect("graph serializes");
    text.push('\n');
    let io = |p: &Path, e: std::io::Error| CircuitError::Io {
        path: p.to_path_buf(),
        message: e.to_string(),
    };
    std::fs::write(&json_path, text).map_err(|e| io(&json_path, e))?;
    std::fs::write(&txt_path, adjacency_text(&file.graphs)).map_err(|e| io(&txt_path, e))?;
    Ok((json_path, txt_path))
}

pub fn read_graphs(path: &Path) -> Result<GraphFile, CircuitError> {
    let io = |message: String| CircuitError::Io {
        path: path.to_path_buf(),
        message,
    };
    let text = std::fs::read_to_string(path).map_err(|e| io(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n(layer: usize, neuron: usize) -> NeuronRef {
        NeuronRef { layer, neuron }
    }

    #[test]
    fn mean_weight_scores_zero() {
        let mut net = Network::zeros(&[2, 2, 4]).unwrap();
        let w = &mut net.layers_mut()[0].weights;
        w.copy_from_slice(&[1.0, 2.0, 3.0, 2.0]);
        let edges = edge_zscores(&net, 0, 1).unwrap();
        assert_eq!(edges.len(), 4);
        assert_eq!(edges[1].zscore, 0.0);
        assert_eq!(edges[3].zscore, 0.0);
        assert!((edges[0].zscore + std::f64::consts::SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn adjacency_and_spread_errors() {
        let net = Network::zeros(&[2, 2, 4]).unwrap();
        assert!(matches!(
            edge_zscores(&net, 0, 2),
            Err(CircuitError::NotAdjacent { .. })
        ));
        assert!(matches!(
            edge_zscores(&net, 1, 2),
            Err(CircuitError::ZeroSpread { .. })
        ));
    }

    #[test]
    fn empty_candidates_rejected() {
        let net = Network::zeros(&[2, 2, 4]).unwrap();
        assert!(matches!(
            find_hubs(&net, &[], &[], &HubThresholds::default()),
            Err(CircuitError::NoCandidates)
        ));
        assert!(matches!(
            find_hubs(&net, &[n(1, 5)], &[], &HubThresholds::default()),
            Err(CircuitError::UnknownNeuron(_))
        ));
    }

    #[test]
    fn dominance_gap() {
        let e = |to: usize, z: f64| WeightEdge {
            from_layer: 2,
            from_neuron: 0,
            to_layer: 3,
            to_neuron: to,
            weight: z,
            zscore: z,
        };
        assert_eq!(
            dominant_action(&[e(0, 0.1), e(2, 2.12), e(1, -0.6)], 1.0),
            Some(Action::Leap)
        );
        assert_eq!(dominant_action(&[e(0, 1.5), e(2, 2.12)], 1.0), None);
    }
}
