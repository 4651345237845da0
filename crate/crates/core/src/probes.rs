//! Distress-scenario probe sets and per-neuron activation statistics.

use crate::dataset::Dataset;
use crate::env::{
    CODE_DISTRESSED, CODE_FROG, CODE_HELPING, CODE_TOAD, PLAYER_OFFSET, STATE_DIM, STATS_OFFSET,
    WORLD_WIDTH,
};
use crate::neural::{Network, NetworkError};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use thiserror::Error;

pub const DEFAULT_PROBE_SIZE: usize = 10_000;

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("need {needed} eligible base states, found {available}")]
    InsufficientEligible { needed: usize, available: usize },
    #[error("no quadruples to capture")]
    Empty,
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("column needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

/// Distress scenario: which agents carry code 9.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScenarioId {
    #[serde(rename = "00")]
    None,
    #[serde(rename = "10")]
    Frog,
    #[serde(rename = "01")]
    Toad,
    #[serde(rename = "11")]
    Both,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 4] = [
        ScenarioId::None,
        ScenarioId::Frog,
        ScenarioId::Toad,
        ScenarioId::Both,
    ];

    pub fn from_bits(df: bool, dt: bool) -> Self {
        match (df, dt) {
            (false, false) => ScenarioId::None,
            (true, false) => ScenarioId::Frog,
            (false, true) => ScenarioId::Toad,
            (true, true) => ScenarioId::Both,
        }
    }

    pub fn df(self) -> bool {
        matches!(self, ScenarioId::Frog | ScenarioId::Both)
    }

    pub fn dt(self) -> bool {
        matches!(self, ScenarioId::Toad | ScenarioId::Both)
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn code(self) -> &'static str {
        match self {
            ScenarioId::None => "00",
            ScenarioId::Frog => "10",
            ScenarioId::Toad => "01",
            ScenarioId::Both => "11",
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for ScenarioId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        ScenarioId::ALL
            .into_iter()
            .find(|id| id.code() == s)
            .ok_or_else(|| format!("unknown scenario {s:?}"))
    }
}

pub type Features = [u8; STATE_DIM];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioQuadruple {
    pub base: Features,
    variants: [Features; 4],
}

impl ScenarioQuadruple {
    /// Build the four variants of an eligible base state; `None` if the base
    /// does not have Frog at code 4 and a healthy Toad.
    pub fn from_base(base: &Features) -> Option<Self> {
        let (frog, toad) = agent_cells(base)?;
        let mut variants = [*base; 4];
        for id in ScenarioId::ALL {
            let v = &mut variants[id.index()];
            if id.df() {
                v[PLAYER_OFFSET + frog] = CODE_DISTRESSED;
            }
            if id.dt() {
                v[PLAYER_OFFSET + toad] = CODE_DISTRESSED;
            }
        }
        Some(ScenarioQuadruple {
            base: *base,
            variants,
        })
    }

    pub fn variant(&self, id: ScenarioId) -> &Features {
        &self.variants[id.index()]
    }
}

/// Frog and Toad cell indices when Frog shows code 4, Toad shows 5..=8, and
/// stats are zeroed.
fn agent_cells(state: &Features) -> Option<(usize, usize)> {
    if state[STATS_OFFSET..].iter().any(|&c| c != 0) {
        return None;
    }
    let players = &state[PLAYER_OFFSET..PLAYER_OFFSET + WORLD_WIDTH];
    let occupied: Vec<usize> = (0..WORLD_WIDTH).filter(|&i| players[i] != 0).collect();
    if occupied.len() != 2 {
        return None;
    }
    let frog = *occupied.iter().find(|&&i| players[i] == CODE_FROG)?;
    let toad = *occupied.iter().find(|&&i| i != frog)?;
    (CODE_TOAD..=CODE_HELPING)
        .contains(&players[toad])
        .then_some((frog, toad))
}

pub fn is_eligible(state: &Features) -> bool {
    agent_cells(state).is_some()
}

/// Sample `k` eligible test states (in their original order) and expand each
/// into a matched quadruple.
pub fn build_scenarios(
    test: &Dataset,
    k: usize,
    seed: u64,
) -> Result<Vec<ScenarioQuadruple>, ProbeError> {
    let eligible: Vec<usize> = (0..test.len())
        .filter(|&i| is_eligible(&test.examples[i].features))
        .collect();
    if eligible.len() < k {
        return Err(ProbeError::InsufficientEligible {
            needed: k,
            available: eligible.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, eligible.len(), k).into_vec();
    picked.sort_unstable();
    Ok(picked
        .into_iter()
        .map(|i| {
            ScenarioQuadruple::from_base(&test.examples[eligible[i]].features)
                .expect("eligible state")
        })
        .collect())
}

/// Row-major sample × neuron matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> impl Iterator<Item = f64> + '_ {
        self.data[c..].iter().step_by(self.cols).copied()
    }
}

/// Activations per scenario and per layer. Layer numbering is 1-based:
/// layers `1..=k` are hidden, `k + 1` is the softmax output.
#[derive(Debug, Clone, PartialEq)]
pub struct Capture {
    pub layer_sizes: Vec<usize>,
    matrices: [Vec<Matrix>; 4],
}

impl Capture {
    pub fn matrix(&self, scenario: ScenarioId, layer: usize) -> &Matrix {
        &self.matrices[scenario.index()][layer - 1]
    }

    pub fn layers(&self) -> usize {
        self.layer_sizes.len()
    }

    pub fn samples(&self) -> usize {
        self.matrices[0].first().map_or(0, |m| m.rows)
    }
}

fn to_input(f: &Features) -> [f64; STATE_DIM] {
    let mut out = [0.0; STATE_DIM];
    for (o, &v) in out.iter_mut().zip(f) {
        *o = f64::from(v);
    }
    out
}

/// Inference-mode forward passes over every variant of every quadruple.
pub fn capture(net: &Network, quads: &[ScenarioQuadruple]) -> Result<Capture, ProbeError> {
    if quads.is_empty() {
        return Err(ProbeError::Empty);
    }
    if net.input_dim() != STATE_DIM {
        return Err(NetworkError::Dimension(format!(
            "network expects {} inputs, state vectors have {STATE_DIM}",
            net.input_dim()
        ))
        .into());
    }
    let mut layer_sizes = net.hidden_dims();
    layer_sizes.push(net.output_dim());

    // per quadruple, per scenario: all layers concatenated
    let rows: Vec<[Vec<f64>; 4]> = quads
        .par_iter()
        .map(|q| {
            ScenarioId::ALL.map(|id| {
                let pass = net
                    .forward(&to_input(q.variant(id)), None)
                    .expect("dimensions checked");
                let mut flat: Vec<f64> = pass.hidden.concat();
                flat.extend_from_slice(&pass.probabilities);
                flat
            })
        })
        .collect();

    let matrices = ScenarioId::ALL.map(|id| {
        let mut offset = 0;
        layer_sizes
            .iter()
            .map(|&width| {
                let mut m = Matrix::zeros(rows.len(), width);
                for (r, row) in rows.iter().enumerate() {
                    m.data[r * width..(r + 1) * width]
                        .copy_from_slice(&row[id.index()][offset..offset + width]);
                }
                offset += width;
                m
            })
            .collect()
    });
    Ok(Capture {
        layer_sizes,
        matrices,
    })
}

/// Sample moments. Skewness and kurtosis are `None` when the column has zero
/// spread.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
    pub skewness: Option<f64>,
    pub kurtosis: Option<f64>,
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
struct Sum {
    sum: f64,
    carry: f64,
}

impl Sum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Single-pass moment accumulator. Keeps compensated power sums of
/// `x - x0`, where `x0` is the first observation, and converts them to
/// central moments on demand.
#[derive(Debug, Clone, Copy, Default)]
pub struct MomentAccumulator {
    n: usize,
    shift: f64,
    sums: [Sum; 4],
}

impl MomentAccumulator {
    pub fn push(&mut self, x: f64) {
        if self.n == 0 {
            self.shift = x;
        }
        self.n += 1;
        let y = x - self.shift;
        let y2 = y * y;
        self.sums[0].add(y);
        self.sums[1].add(y2);
        self.sums[2].add(y2 * y);
        self.sums[3].add(y2 * y2);
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.shift + self.sums[0].value() / self.n as f64
        }
    }

    /// Population central moments `[m2, m3, m4]`.
    fn central(&self) -> [f64; 3] {
        if self.n == 0 {
            return [0.0; 3];
        }
        let n = self.n as f64;
        let [r1, r2, r3, r4] = self.sums.map(|s| s.value() / n);
        let a2 = r1 * r1;
        let m2 = (r2 - a2).max(0.0);
        let m3 = r3 - 3.0 * r1 * r2 + 2.0 * a2 * r1;
        let m4 = r4 - 4.0 * r1 * r3 + 6.0 * a2 * r2 - 3.0 * a2 * a2;
        [m2, m3, m4]
    }

    /// Second central moment divided by n.
    pub fn population_variance(&self) -> f64 {
        self.central()[0]
    }

    pub fn finish(&self) -> Result<Moments, ProbeError> {
        if self.n < 2 {
            return Err(ProbeError::TooFewSamples(self.n));
        }
        let n = self.n as f64;
        let [m2, m3, m4] = self.central();
        let (skewness, kurtosis) = if m2 == 0.0 {
            (None, None)
        } else {
            (Some(m3 / m2.powf(1.5)), Some(m4 / (m2 * m2) - 3.0))
        };
        Ok(Moments {
            count: self.n,
            mean: self.mean(),
            variance: m2 * n / (n - 1.0),
            skewness,
            kurtosis,
        })
    }
}

pub fn moments(values: impl IntoIterator<Item = f64>) -> Result<Moments, ProbeError> {
    let mut acc = MomentAccumulator::default();
    values.into_iter().for_each(|x| acc.push(x));
    acc.finish()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeuronStats {
    pub layer: usize,
    pub neuron: usize,
    pub scenario: ScenarioId,
    pub moments: Moments,
}

/// Per-neuron, per-scenario moments, ordered by layer, neuron, scenario.
pub fn stats(capture: &Capture) -> Result<Vec<NeuronStats>, ProbeError> {
    let cells: Vec<(usize, usize, ScenarioId)> = capture
        .layer_sizes
        .iter()
        .enumerate()
        .flat_map(|(l, &w)| {
            (0..w).flat_map(move |n| ScenarioId::ALL.into_iter().map(move |s| (l + 1, n, s)))
        })
        .collect();
    cells
        .into_par_iter()
        .map(|(layer, neuron, scenario)| {
            Ok(NeuronStats {
                layer,
                neuron,
                scenario,
                moments: moments(capture.matrix(scenario, layer).column(neuron))?,
            })
        })
        .collect()
}

const DEGENERATE: &str = "degenerate";

#[derive(Debug, Serialize, Deserialize)]
struct StatsRow {
    layer: usize,
    neuron: usize,
    scenario: ScenarioId,
    count: usize,
    mean: f64,
    variance: f64,
    skewness: String,
    kurtosis: String,
}

fn opt_field(v: Option<f64>) -> String {
    v.map_or_else(|| DEGENERATE.to_string(), |x| x.to_string())
}

fn parse_opt(s: &str) -> Result<Option<f64>, String> {
    if s == DEGENERATE {
        Ok(None)
    } else {
        s.parse().map(Some).map_err(|_| format!("bad number {s:?}"))
    }
}

pub fn write_stats_csv(stats: &[NeuronStats], path: &Path) -> Result<(), ProbeError> {
    let err = |source| ProbeError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    for s in stats {
        w.serialize(StatsRow {
            layer: s.layer,
            neuron: s.neuron,
            scenario: s.scenario,
            count: s.moments.count,
            mean: s.moments.mean,
            variance: s.moments.variance,
            skewness: opt_field(s.moments.skewness),
            kurtosis: opt_field(s.moments.kurtosis),
        })
        .map_err(err)?;
    }
    w.flush().map_err(|e| err(e.into()))
}

pub fn read_stats_csv(path: &Path) -> Result<Vec<NeuronStats>, ProbeError> {
    let err = |source| ProbeError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(err)?;
    let mut out = Vec::new();
    for row in r.deserialize::<StatsRow>() {
        let row = row.map_err(err)?;
        let format = |message| ProbeError::Format {
            path: path.to_path_buf(),
            message,
        };
        out.push(NeuronStats {
            layer: row.layer,
            neuron: row.neuron,
            scenario: row.scenario,
            moments: Moments {
                count: row.count,
                mean: row.mean,
                variance: row.variance,
                skewness: parse_opt(&row.skewness).map_err(format)?,
                kurtosis: parse_opt(&row.kurtosis).map_err(format)?,
            },
        });
    }
    Ok(out)
}
