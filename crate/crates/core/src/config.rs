//! Run configuration: one TOML file with a section per pipeline stage.

use crate::circuits::HubThresholds;
use crate::cmni::Thresholds;
use crate::dataset::{GenerateConfig, LabelFractions, SplitSpec};
use crate::env::WorldConfig;
use crate::evalreport::FlagThresholds;
use crate::neural::sweep::{default_grid, mini_grid};
use crate::neural::{Hyperparams, Timestamp};
use crate::oracle::OracleConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const OUT_ROOT_ENV: &str = "MIRRORNET_OUT";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("[{section}] {message}")]
    Invalid {
        section: &'static str,
        message: String,
    },
}

fn invalid(section: &'static str, e: impl ToString) -> ConfigError {
    ConfigError::Invalid {
        section,
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationSection {
    pub rows: usize,
    pub horizon: usize,
    pub shard_size: usize,
    pub max_steps_per_row: usize,
}

impl Default for GenerationSection {
    fn default() -> Self {
        let g = GenerateConfig::default();
        GenerationSection {
            rows: 500_000,
            horizon: g.horizon,
            shard_size: g.shard_size,
            max_steps_per_row: g.max_steps_per_row,
        }
    }
}

impl GenerationSection {
    pub fn generate_config(&self) -> GenerateConfig {
        GenerateConfig {
            horizon: self.horizon,
            shard_size: self.shard_size,
            max_steps_per_row: self.max_steps_per_row,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub test_size: usize,
    pub hop: f64,
    pub jump: f64,
    pub leap: f64,
    pub help: f64,
    /// Share of the training pool held out for validation.
    pub validation_fraction: f64,
    /// Cap on training-pool rows before the validation holdout; 0 keeps all.
    pub train_rows: usize,
}

impl Default for SplitSection {
    fn default() -> Self {
        let spec = SplitSpec::default();
        SplitSection {
            test_size: spec.test_size,
            hop: spec.proportions.hop,
            jump: spec.proportions.jump,
            leap: spec.proportions.leap,
            help: spec.proportions.help,
            validation_fraction: 0.1,
            train_rows: 200_000,
        }
    }
}

impl SplitSection {
    pub fn spec(&self) -> SplitSpec {
        SplitSpec {
            test_size: self.test_size,
            proportions: LabelFractions {
                hop: self.hop,
                jump: self.jump,
                leap: self.leap,
                help: self.help,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridKind {
    Mini,
    Default,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub grid: GridKind,
    /// Applied to every generated grid entry.
    pub max_epochs: usize,
    pub patience: usize,
    pub dropout_rate: f64,
    /// Used when `grid = "custom"`.
    pub configs: Vec<Hyperparams>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            grid: GridKind::Mini,
            max_epochs: 50,
            patience: 10,
            dropout_rate: 0.0,
            configs: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSection {
    pub k: usize,
    /// Compute CMNI for every epoch's checkpoint, not only the best.
    pub all_checkpoints: bool,
}

impl Default for ProbeSection {
    fn default() -> Self {
        ProbeSection {
            k: crate::probes::DEFAULT_PROBE_SIZE,
            all_checkpoints: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CircuitSection {
    pub mirror_share: f64,
    pub differentiator_share: f64,
    pub min_zsum: f64,
    pub dominance_gap: f64,
    /// Edges below this |z| are left out of exported graphs.
    pub export_zscore: f64,
}

impl Default for CircuitSection {
    fn default() -> Self {
        let h = HubThresholds::default();
        CircuitSection {
            mirror_share: h.mirror_share,
            differentiator_share: h.differentiator_share,
            min_zsum: h.min_zsum,
            dominance_gap: h.dominance_gap,
            export_zscore: 1.0,
        }
    }
}

impl CircuitSection {
    pub fn hubs(&self) -> HubThresholds {
        HubThresholds {
            mirror_share: self.mirror_share,
            differentiator_share: self.differentiator_share,
            min_zsum: self.min_zsum,
            dominance_gap: self.dominance_gap,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_root: PathBuf,
    /// `YYYYMMDD-HHMMSS`, or `now`.
    pub timestamp: String,
    pub world: WorldConfig,
    pub oracle: OracleConfig,
    pub generation: GenerationSection,
    pub split: SplitSection,
    pub training: Hyperparams,
    pub sweep: SweepSection,
    pub probe: ProbeSection,
    pub cmni: Thresholds,
    pub circuits: CircuitSection,
    pub report: FlagThresholds,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out_root: PathBuf::from("runs"),
            timestamp: "19700101-000000".into(),
            world: WorldConfig::default(),
            oracle: OracleConfig::default(),
            generation: GenerationSection::default(),
            split: SplitSection::default(),
            training: Hyperparams::default(),
            sweep: SweepSection::default(),
            probe: ProbeSection::default(),
            cmni: Thresholds::default(),
            circuits: CircuitSection::default(),
            report: FlagThresholds::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.message().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn resolve_timestamp(&self) -> Result<Timestamp, ConfigError> {
        if self.timestamp == "now" {
            Ok(Timestamp::now())
        } else {
            Timestamp::parse(&self.timestamp).map_err(|e| invalid("timestamp", e))
        }
    }

    /// Output root, with the environment override taking precedence.
    pub fn out_root(&self) -> PathBuf {
        std::env::var_os(OUT_ROOT_ENV)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from)
            .unwrap_or_else(|| self.out_root.clone())
    }

    pub fn run_dir(&self, stamp: &Timestamp) -> PathBuf {
        self.out_root().join(format!("run-{stamp}-s{}", self.seed))
    }

    /// Hyperparameter grid for sweeps, seeded from the run seed.
    pub fn grid(&self) -> Vec<Hyperparams> {
        let mut grid = match self.sweep.grid {
            GridKind::Mini => mini_grid(self.seed),
            GridKind::Default => default_grid(self.seed),
            GridKind::Custom => return self.sweep.configs.clone(),
        };
        for hp in &mut grid {
            hp.max_epochs = self.sweep.max_epochs;
            hp.patience = self.sweep.patience;
            hp.dropout_rate = self.sweep.dropout_rate;
        }
        grid
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.resolve_timestamp()?;
        self.world.validate().map_err(|e| invalid("world", e))?;
        self.oracle.validate().map_err(|e| invalid("oracle", e))?;
        if self.generation.rows == 0 {
            return Err(invalid("generation", "rows must be at least 1"));
        }
        self.generation
            .generate_config()
            .validate()
            .map_err(|e| invalid("generation", e))?;
        self.split
            .spec()
            .validate()
            .map_err(|e| invalid("split", e))?;
        if self.split.test_size >= self.generation.rows {
            return Err(invalid(
                "split",
                "test_size must be smaller than generation.rows",
            ));
        }
        if !(self.split.validation_fraction > 0.0 && self.split.validation_fraction < 1.0) {
            return Err(invalid("split", "validation_fraction must lie in (0, 1)"));
        }
        self.training
            .validate()
            .map_err(|e| invalid("training", e))?;
        if self.sweep.grid == GridKind::Custom && self.sweep.configs.is_empty() {
            return Err(invalid(
                "sweep",
                "custom grid needs at least one [[sweep.configs]] entry",
            ));
        }
        for (i, hp) in self.grid().iter().enumerate() {
            hp.validate()
                .map_err(|e| invalid("sweep", format!("config {i}: {e}")))?;
        }
        if self.probe.k < 2 {
            return Err(invalid("probe", "k must be at least 2"));
        }
        self.cmni.validate().map_err(|e| invalid("cmni", e))?;
        self.circuits
            .hubs()
            .validate()
            .map_err(|e| invalid("circuits", e))?;
        if self.circuits.export_zscore.is_nan() || self.circuits.export_zscore < 0.0 {
            return Err(invalid("circuits", "export_zscore must be non-negative"));
        }
        self.report.validate().map_err(|e| invalid("report", e))?;
        Ok(())
    }
}
