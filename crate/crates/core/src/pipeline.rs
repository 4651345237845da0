//! End-to-end orchestration shared by the CLI subcommands.

use crate::circuits::{self, CircuitError, CircuitGraph};
use crate::cmni::{self, CmniError, CmniReport};
use crate::config::{ConfigError, RunConfig};
use crate::dataset::{self, Dataset, DatasetError, DatasetManifest};
use crate::evalreport::{self, CmniEntry, EvalResult, ReportBundle, ReportError};
use crate::neural::sweep::{self, SweepError, SweepManifest};
use crate::neural::{Checkpoint, CheckpointError, Network, Timestamp, TrainError};
use crate::probes::{self, NeuronStats, ProbeError, ScenarioQuadruple};
use serde::Serialize;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    MissingInput,
    Runtime,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("missing input: {}", .0.display())]
    MissingInput(PathBuf),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Sweep(#[from] SweepError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Probe(#[from] ProbeError),
    #[error(transparent)]
    Cmni(#[from] CmniError),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("{0}")]
    Other(String),
}

impl PipelineError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            PipelineError::Config(_) => ErrorKind::Config,
            PipelineError::MissingInput(_) => ErrorKind::MissingInput,
            _ => ErrorKind::Runtime,
        }
    }
}

pub type Result<T> = std::result::Result<T, PipelineError>;

pub fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(PipelineError::MissingInput(path.to_path_buf()))
    }
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path)
        .map_err(|e| PipelineError::Other(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| PipelineError::Other(format!("{}: {e}", path.display())))
}

/// Stage seeds derived from the run seed.
#[derive(Debug, Clone, Copy)]
pub struct Seeds {
    pub generate: u64,
    pub split: u64,
    pub holdout: u64,
    pub probe: u64,
}

impl Seeds {
    pub fn from_run(seed: u64) -> Self {
        Seeds {
            generate: seed,
            split: seed.wrapping_add(1),
            holdout: seed.wrapping_add(2),
            probe: seed.wrapping_add(3),
        }
    }
}

pub fn generate(cfg: &RunConfig, rows: usize, seed: u64) -> Result<Dataset> {
    Ok(dataset::generate(
        rows,
        cfg.world,
        &cfg.oracle,
        &cfg.generation.generate_config(),
        seed,
    )?)
}

pub fn dataset_manifest(
    cfg: &RunConfig,
    data: &Dataset,
    seed: u64,
    data_file: &str,
) -> DatasetManifest {
    DatasetManifest {
        rows: data.len(),
        seed,
        world: cfg.world,
        oracle: cfg.oracle,
        generation: cfg.generation.generate_config(),
        label_histogram: data.histogram(),
        data_file: data_file.to_string(),
    }
}

/// Cap the training pool and carve out the validation set: `(train, val)`.
pub fn training_sets(cfg: &RunConfig, pool: &Dataset, seed: u64) -> Result<(Dataset, Dataset)> {
    let capped = if cfg.split.train_rows > 0 && pool.len() > cfg.split.train_rows {
        Dataset::new(pool.examples[..cfg.split.train_rows].to_vec())
    } else {
        pool.clone()
    };
    Ok(dataset::holdout(
        &capped,
        cfg.split.validation_fraction,
        seed,
    )?)
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub stats: Vec<NeuronStats>,
    pub report: CmniReport,
}

pub fn analyse(net: &Network, quads: &[ScenarioQuadruple], cfg: &RunConfig) -> Result<Analysis> {
    let capture = probes::capture(net, quads)?;
    let stats = probes::stats(&capture)?;
    let deltas = cmni::deltas(&stats)?;
    let report = cmni::cmni(&deltas, &cfg.cmni)?;
    Ok(Analysis { stats, report })
}

pub fn write_analysis(a: &Analysis, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    probes::write_stats_csv(&a.stats, &dir.join("stats.csv"))?;
    cmni::write_report_json(&a.report, &dir.join("cmni.json"))?;
    cmni::write_deltas_csv(&a.report, &dir.join("deltas.csv"))?;
    Ok(())
}

/// Hubs for a report's candidates; no candidates yields no graphs.
pub fn hubs(net: &Network, report: &CmniReport, cfg: &RunConfig) -> Result<Vec<CircuitGraph>> {
    if report.candidates.is_empty() {
        return Ok(Vec::new());
    }
    Ok(circuits::find_hubs(
        net,
        &report.candidates,
        &report.differentiators,
        &cfg.circuits.hubs(),
    )?)
}

pub fn rel(path: &Path, base: &Path) -> String {
    path.strip_prefix(base)
        .unwrap_or(path)
        .components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

/// CMNI for the listed checkpoints of every successful sweep row, plus the
/// best checkpoint's full analysis written under `analysis/<config>`.
pub fn analyse_sweep(
    cfg: &RunConfig,
    sweep_dir: &Path,
    manifest: &SweepManifest,
    test: &Dataset,
    analysis_dir: &Path,
    seed: u64,
) -> Result<SweepAnalysis> {
    let quads = probes::build_scenarios(test, cfg.probe.k, seed)?;
    let mut entries = Vec::new();
    let mut evals = Vec::new();
    let mut best: Option<(f64, String, Checkpoint, CmniReport)> = None;
    for row in manifest.successful() {
        let ids: Vec<&str> = if cfg.probe.all_checkpoints {
            row.checkpoint_paths()
        } else {
            vec![row.best_checkpoint.as_str()]
        };
        for id in ids {
            let ckpt = Checkpoint::load(&sweep_dir.join(id))?;
            let is_best = id == row.best_checkpoint;
            let analysis = analyse(&ckpt.network, &quads, cfg)?;
            entries.push(CmniEntry {
                checkpoint: id.to_string(),
                epoch: ckpt.epoch,
                val_loss: ckpt.val_loss,
                mne: analysis.report.mne,
                n_neurons: analysis.report.n_neurons,
                cmni: analysis.report.cmni,
            });
            if is_best {
                write_analysis(&analysis, &analysis_dir.join(&row.config))?;
                evals.push((id.to_string(), evalreport::evaluate(&ckpt.network, test)?));
                if best.as_ref().is_none_or(|b| ckpt.val_loss < b.0) {
                    best = Some((ckpt.val_loss, id.to_string(), ckpt, analysis.report));
                }
            }
        }
    }
    Ok(SweepAnalysis {
        entries,
        evals,
        best: best.map(|(_, id, c, r)| (id, c, r)),
    })
}

pub struct SweepAnalysis {
    pub entries: Vec<CmniEntry>,
    pub evals: Vec<(String, EvalResult)>,
    /// Lowest-validation-loss best checkpoint across configs.
    pub best: Option<(String, Checkpoint, CmniReport)>,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub seed: u64,
    pub timestamp: String,
    pub train_rows: usize,
    pub val_rows: usize,
    pub test_rows: usize,
    pub configs: usize,
    pub failed_configs: usize,
    pub best_checkpoint: Option<String>,
    pub best_val_loss: Option<f64>,
    pub best_cmni: Option<f64>,
    pub hubs: usize,
    pub mirror_positive: usize,
    pub files: Vec<String>,
}

pub struct RunSummary {
    pub run_dir: PathBuf,
    pub manifest: RunManifest,
    pub sweep: SweepManifest,
    pub report: ReportBundle,
}

fn list_files(dir: &Path, base: &Path, out: &mut Vec<String>) -> Result<()> {
    let entries = std::fs::read_dir(dir)
        .map_err(|e| PipelineError::Other(format!("{}: {e}", dir.display())))?;
    for entry in entries {
        let path = entry
            .map_err(|e| PipelineError::Other(format!("{}: {e}", dir.display())))?
            .path();
        if path.is_dir() {
            list_files(&path, base, out)?;
        } else {
            out.push(rel(&path, base));
        }
    }
    Ok(())
}

/// Generate, split, sweep, analyse, and report into one run directory.
pub fn run_all(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let stamp: Timestamp = cfg.resolve_timestamp()?;
    let run_dir = cfg.run_dir(&stamp);
    let seeds = Seeds::from_run(cfg.seed);
    let data_dir = run_dir.join("data");
    create_dir(&data_dir)?;
    write_text(&run_dir.join("config.toml"), &cfg.to_toml())?;

    let data = generate(cfg, cfg.generation.rows, seeds.generate)?;
    dataset::write_json(
        &dataset_manifest(cfg, &data, seeds.generate, "train.csv;val.csv;test.csv"),
        &data_dir.join("dataset_manifest.json"),
    )?;
    let (pool, test) = dataset::split(&data, &cfg.split.spec(), seeds.split)?;
    drop(data);
    let (train, val) = training_sets(cfg, &pool, seeds.holdout)?;
    drop(pool);
    dataset::write_csv(&train, &data_dir.join("train.csv"))?;
    dataset::write_csv(&val, &data_dir.join("val.csv"))?;
    dataset::write_csv(&test, &data_dir.join("test.csv"))?;

    let sweep_dir = run_dir.join("sweep");
    let grid = cfg.grid();
    let sweep_manifest = sweep::sweep(&grid, &train, &val, &sweep_dir, &stamp)?;

    let analysis = analyse_sweep(
        cfg,
        &sweep_dir,
        &sweep_manifest,
        &test,
        &run_dir.join("analysis"),
        seeds.probe,
    )?;

    let circuits_dir = run_dir.join("circuits");
    create_dir(&circuits_dir)?;
    let graphs = match &analysis.best {
        Some((_, ckpt, report)) => hubs(&ckpt.network, report, cfg)?,
        None => Vec::new(),
    };
    circuits::export_graph(
        &graphs,
        &circuits_dir.join("graph"),
        cfg.circuits.export_zscore,
    )?;

    let eval_dir = run_dir.join("eval");
    create_dir(&eval_dir)?;
    for (id, e) in &analysis.evals {
        let name = id.split('/').next().unwrap_or(id);
        dataset::write_json(e, &eval_dir.join(format!("{name}.json")))?;
    }

    let report = evalreport::report(
        &sweep_manifest,
        &analysis.entries,
        &analysis.evals,
        &cfg.report,
        &run_dir.join("report"),
    )?;

    let best_cmni = analysis.best.as_ref().map(|(_, _, r)| r.cmni);
    let mut manifest = RunManifest {
        seed: cfg.seed,
        timestamp: stamp.to_string(),
        train_rows: train.len(),
        val_rows: val.len(),
        test_rows: test.len(),
        configs: sweep_manifest.rows.len(),
        failed_configs: sweep_manifest.rows.len() - sweep_manifest.successful().count(),
        best_checkpoint: analysis
            .best
            .as_ref()
            .map(|(id, _, _)| format!("sweep/{id}")),
        best_val_loss: analysis.best.as_ref().map(|(_, c, _)| c.val_loss),
        best_cmni,
        hubs: graphs.len(),
        mirror_positive: report.mirror_positive().count(),
        files: Vec::new(),
    };
    let manifest_path = run_dir.join("run_manifest.json");
    let mut files = Vec::new();
    list_files(&run_dir, &run_dir, &mut files)?;
    files.retain(|f| f != "run_manifest.json");
    files.sort();
    manifest.files = files;
    dataset::write_json(&manifest, &manifest_path)?;

    Ok(RunSummary {
        run_dir,
        manifest,
        sweep: sweep_manifest,
        report,
    })
}
