//! Labeled state generation, balanced splitting, and CSV persistence.

use crate::env::{
    new_world, Action, AgentId, EnvError, WorldConfig, WorldState, STATE_DIM, STATS_OFFSET,
};
use crate::oracle::{self, OracleConfig, OracleError};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("only {got} unique states found after {steps} rollout steps (wanted {wanted})")]
    InsufficientUnique {
        wanted: usize,
        got: usize,
        steps: u64,
    },
    #[error("not enough rows for the test split: {}", format_deficits(.deficits))]
    InsufficientRows { deficits: Vec<(Action, usize)> },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

fn format_deficits(d: &[(Action, usize)]) -> String {
    d.iter()
        .map(|(a, n)| format!("{a} short by {n}"))
        .collect::<Vec<_>>()
        .join(", ")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LabeledExample {
    pub features: [u8; STATE_DIM],
    pub label: Action,
}

impl LabeledExample {
    pub fn input(&self) -> [f64; STATE_DIM] {
        let mut out = [0.0; STATE_DIM];
        for (o, &f) in out.iter_mut().zip(self.features.iter()) {
            *o = f64::from(f);
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub examples: Vec<LabeledExample>,
}

impl Dataset {
    pub fn new(examples: Vec<LabeledExample>) -> Self {
        Dataset { examples }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn histogram(&self) -> [usize; Action::COUNT] {
        let mut h = [0; Action::COUNT];
        for e in &self.examples {
            h[e.label.index()] += 1;
        }
        h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    /// Steps per episode before a fresh world is drawn.
    pub horizon: usize,
    /// Rows produced per independent RNG stream.
    pub shard_size: usize,
    /// Rollout steps allowed per requested row before giving up on uniqueness.
    pub max_steps_per_row: usize,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        GenerateConfig {
            horizon: 256,
            shard_size: 8192,
            max_steps_per_row: 64,
        }
    }
}

impl GenerateConfig {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.horizon == 0 || self.shard_size == 0 || self.max_steps_per_row == 0 {
            return Err(DatasetError::Invalid(
                "horizon, shard_size and max_steps_per_row must be positive".into(),
            ));
        }
        Ok(())
    }
}

fn shard_rng(seed: u64, shard: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(shard);
    rng
}

fn random_turn(
    world: &WorldState,
    agent: AgentId,
    rng: &mut ChaCha8Rng,
) -> Result<WorldState, EnvError> {
    let world = world.begin_turn(agent);
    let legal = world.legal_actions(agent);
    let action = legal[rng.gen_range(0..legal.len())];
    world.apply_action(agent, action)
}

/// Roll out one shard: random play for both agents, recording Frog's decision
/// states. Rows are unique within the shard.
fn rollout_shard(
    seed: u64,
    shard: u64,
    rows: usize,
    world_config: WorldConfig,
    oracle_config: &OracleConfig,
    gen: &GenerateConfig,
) -> Result<(Vec<LabeledExample>, u64), DatasetError> {
    let mut rng = shard_rng(seed, shard);
    let mut seen = HashSet::with_capacity(rows);
    let mut out = Vec::with_capacity(rows);
    let budget = (rows * gen.max_steps_per_row) as u64;
    let mut steps = 0u64;
    let mut world = new_world(world_config, rng.gen())?;
    let mut t = 0;
    while out.len() < rows && steps < budget {
        if t == gen.horizon {
            world = new_world(world_config, rng.gen())?;
            t = 0;
        }
        let before = world.begin_turn(AgentId::Frog);
        let full = before.encode(false);
        let label = oracle::label(&full, oracle_config)?;
        let features = full
            .with_zeroed_stats()
            .to_bytes()
            .expect("zeroed encoding fits in bytes");
        if seen.insert(features) {
            out.push(LabeledExample { features, label });
        }
        world = random_turn(&before, AgentId::Frog, &mut rng)?;
        world = random_turn(&world, AgentId::Toad, &mut rng)?;
        t += 1;
        steps += 1;
    }
    Ok((out, steps))
}

/// Generate `count` unique labeled Frog states. Work is split into shards of
/// `gen.shard_size` rows, each with its own RNG stream, and merged in shard
/// order, so the output does not depend on the thread count.
pub fn generate(
    count: usize,
    world_config: WorldConfig,
    oracle_config: &OracleConfig,
    gen: &GenerateConfig,
    seed: u64,
) -> Result<Dataset, DatasetError> {
    if count == 0 {
        return Err(DatasetError::Invalid("count must be at least 1".into()));
    }
    world_config.validate()?;
    oracle_config.validate()?;
    gen.validate()?;
    let mut seen: HashSet<[u8; STATE_DIM]> = HashSet::with_capacity(count);
    let mut examples = Vec::with_capacity(count);
    let budget = (count * gen.max_steps_per_row) as u64;
    let mut steps = 0u64;
    let mut next_shard = 0u64;
    while examples.len() < count {
        if steps >= budget {
            return Err(DatasetError::InsufficientUnique {
                wanted: count,
                got: examples.len(),
                steps,
            });
        }
        let missing = count - examples.len();
        let shards = missing.div_ceil(gen.shard_size) as u64;
        let results: Vec<_> = (next_shard..next_shard + shards)
            .into_par_iter()
            .map(|s| rollout_shard(seed, s, gen.shard_size, world_config, oracle_config, gen))
            .collect();
        next_shard += shards;
        for r in results {
            let (rows, used) = r?;
            steps += used;
            for row in rows {
                if examples.len() == count {
                    break;
                }
                if seen.insert(row.features) {
                    examples.push(row);
                }
            }
        }
    }
    Ok(Dataset { examples })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub test_size: usize,
    /// Fraction of the test set per label, indexed hop, jump, leap, help.
    pub proportions: LabelFractions,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelFractions {
    pub hop: f64,
    pub jump: f64,
    pub leap: f64,
    pub help: f64,
}

impl LabelFractions {
    pub fn as_array(&self) -> [f64; Action::COUNT] {
        [self.hop, self.jump, self.leap, self.help]
    }
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            test_size: 100_000,
            proportions: LabelFractions {
                hop: 0.40,
                jump: 0.40,
                leap: 0.10,
                help: 0.10,
            },
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let p = self.proportions.as_array();
        if p.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(DatasetError::Invalid(format!(
                "proportions must each lie in [0, 1]: {p:?}"
            )));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(DatasetError::Invalid(format!(
                "proportions must sum to 1, got {sum}"
            )));
        }
        Ok(())
    }

    /// Per-label test counts: floor of each share, remainder to hop.
    pub fn label_counts(&self) -> [usize; Action::COUNT] {
        let p = self.proportions.as_array();
        let mut counts = [0usize; Action::COUNT];
        for (c, &f) in counts.iter_mut().zip(p.iter()) {
            // guard against 0.1 * 100000 = 9999.999... style rounding
            let exact = self.test_size as f64 * f;
            *c = (exact + 1e-9).floor() as usize;
        }
        let assigned: usize = counts.iter().sum();
        counts[Action::Hop.index()] += self.test_size.saturating_sub(assigned);
        counts
    }
}

/// Split into `(train, test)` where the test set holds exactly the per-label
/// counts of `spec`. Both halves keep the source order.
pub fn split(
    data: &Dataset,
    spec: &SplitSpec,
    seed: u64,
) -> Result<(Dataset, Dataset), DatasetError> {
    spec.validate()?;
    let wanted = spec.label_counts();
    let mut pools: [Vec<usize>; Action::COUNT] = Default::default();
    for (i, e) in data.examples.iter().enumerate() {
        pools[e.label.index()].push(i);
    }
    let deficits: Vec<(Action, usize)> = Action::ALL
        .iter()
        .filter(|a| pools[a.index()].len() < wanted[a.index()])
        .map(|a| (*a, wanted[a.index()] - pools[a.index()].len()))
        .collect();
    if !deficits.is_empty() {
        return Err(DatasetError::InsufficientRows { deficits });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_test = vec![false; data.len()];
    for a in Action::ALL {
        let pool = &mut pools[a.index()];
        let (chosen, _) = pool.partial_shuffle(&mut rng, wanted[a.index()]);
        for &i in chosen.iter() {
            in_test[i] = true;
        }
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (e, t) in data.examples.iter().zip(in_test) {
        if t {
            test.push(*e);
        } else {
            train.push(*e);
        }
    }
    Ok((Dataset::new(train), Dataset::new(test)))
}

/// Carve a random validation fraction out of `data`: `(rest, holdout)`.
pub fn holdout(
    data: &Dataset,
    fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset), DatasetError> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(DatasetError::Invalid(format!(
            "holdout fraction must be in [0, 1), got {fraction}"
        )));
    }
    let n = (data.len() as f64 * fraction).round() as usize;
    let mut idx: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.partial_shuffle(&mut rng, n);
    let mut held = vec![false; data.len()];
    for &i in &idx[..n] {
        held[i] = true;
    }
    let (mut rest, mut val) = (Vec::new(), Vec::new());
    for (e, h) in data.examples.iter().zip(held) {
        if h {
            val.push(*e);
        } else {
            rest.push(*e);
        }
    }
    Ok((Dataset::new(rest), Dataset::new(val)))
}

pub fn csv_header() -> Vec<String> {
    (0..STATE_DIM)
        .map(|i| format!("f{i}"))
        .chain(std::iter::once("label".to_string()))
        .collect()
}

pub fn write_csv(data: &Dataset, path: &Path) -> Result<(), DatasetError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{}", csv_header().join(",")).map_err(io_err(path))?;
    let mut line = String::with_capacity(4 * STATE_DIM);
    for e in &data.examples {
        line.clear();
        for f in e.features {
            line.push_str(&f.to_string());
            line.push(',');
        }
        line.push_str(&e.label.index().to_string());
        line.push('\n');
        w.write_all(line.as_bytes()).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_csv(path: &Path) -> Result<Dataset, DatasetError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(BufReader::new(file));
    let fmt = |message: String| DatasetError::Format {
        path: path.to_path_buf(),
        message,
    };
    let header = reader.headers().map_err(|e| fmt(e.to_string()))?;
    if header.len() != STATE_DIM + 1 {
        return Err(fmt(format!(
            "expected {} columns, header has {}",
            STATE_DIM + 1,
            header.len()
        )));
    }
    let mut examples = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| fmt(e.to_string()))?;
        if record.len() != STATE_DIM + 1 {
            return Err(fmt(format!("row {}: {} columns", row + 1, record.len())));
        }
        let mut features = [0u8; STATE_DIM];
        for (i, f) in features.iter_mut().enumerate() {
            *f = record[i]
                .parse()
                .map_err(|_| fmt(format!("row {}: bad feature {:?}", row + 1, &record[i])))?;
        }
        if features[STATS_OFFSET..].iter().any(|&v| v != 0) {
            return Err(fmt(format!(
                "row {}: statistics cells must be zero",
                row + 1
            )));
        }
        let label = record[STATE_DIM]
            .parse::<usize>()
            .ok()
            .and_then(Action::from_index)
            .ok_or_else(|| {
                fmt(format!(
                    "row {}: bad label {:?}",
                    row + 1,
                    &record[STATE_DIM]
                ))
            })?;
        examples.push(LabeledExample { features, label });
    }
    Ok(Dataset { examples })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub rows: usize,
    pub seed: u64,
    pub world: WorldConfig,
    pub oracle: OracleConfig,
    pub generation: GenerateConfig,
    /// Label counts indexed hop, jump, leap, help.
    pub label_histogram: [usize; Action::COUNT],
    pub data_file: String,
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), DatasetError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| DatasetError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| DatasetError::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
