use clap::{Args, Parser, Subcommand};
use mirrornet::circuits;
use mirrornet::cmni;
use mirrornet::config::RunConfig;
use mirrornet::dataset::{self, Dataset};
use mirrornet::evalreport;
use mirrornet::neural::{self, sweep, Checkpoint, Hyperparams};
use mirrornet::pipeline::{self, require, ErrorKind, PipelineError, Result, Seeds};
use mirrornet::probes;
use serde::Deserialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "mirrornet",
    version,
    about = "Mirror-neuron analysis pipeline for the Frog and Toad game"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration; built-in defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output location (file or directory, per subcommand).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate labeled Frog states.
    Gen {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        count: Option<usize>,
    },
    /// Split a dataset into a balanced test set and a training pool.
    Split {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
    },
    /// Train one network with the [training] hyperparameters.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        train: PathBuf,
        /// Validation CSV; otherwise held out from the training file.
        #[arg(long)]
        val: Option<PathBuf>,
    },
    /// Train every configuration in a grid.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        val: Option<PathBuf>,
        /// `mini`, `default`, or a TOML file with [[configs]] entries.
        #[arg(long)]
        grid: Option<String>,
    },
    /// Per-neuron activation statistics over the four distress scenarios.
    Probe {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Mirror neuron scores and CMNI for one checkpoint.
    Cmni {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Test CSV to probe; alternatively pass precomputed --stats.
        #[arg(long, required_unless_present = "stats")]
        test: Option<PathBuf>,
        #[arg(long, conflicts_with = "test")]
        stats: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Hub pathways from checkpoint weights.
    Circuits {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long = "cmni-report")]
        cmni_report: PathBuf,
    },
    /// Accuracy and confusion matrix on a test set.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        test: PathBuf,
    },
    /// Consolidated tables for a finished sweep.
    Report {
        #[command(flatten)]
        common: Common,
        /// Sweep directory containing sweep_manifest.csv.
        #[arg(long)]
        sweep: PathBuf,
        #[arg(long)]
        test: PathBuf,
    },
    /// Whole pipeline into one run directory.
    RunAll {
        #[command(flatten)]
        common: Common,
    },
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            require(path)?;
            RunConfig::load(path)?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn stage_dir(cfg: &RunConfig, common: &Common, stage: &str) -> Result<PathBuf> {
    Ok(match &common.out {
        Some(p) => p.clone(),
        None => cfg.run_dir(&cfg.resolve_timestamp()?).join(stage),
    })
}

fn mkdir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| PipelineError::Other(format!("{}: {e}", dir.display())))
}

fn read_data(path: &Path) -> Result<Dataset> {
    require(path)?;
    Ok(dataset::read_csv(path)?)
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    require(path)?;
    Ok(Checkpoint::load(path)?)
}

fn train_val(cfg: &RunConfig, train: &Path, val: Option<&Path>) -> Result<(Dataset, Dataset)> {
    let pool = read_data(train)?;
    match val {
        Some(v) => Ok((pool, read_data(v)?)),
        None => Ok(dataset::holdout(
            &pool,
            cfg.split.validation_fraction,
            Seeds::from_run(cfg.seed).holdout,
        )?),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GridFile {
    configs: Vec<Hyperparams>,
}

fn resolve_grid(cfg: &RunConfig, grid: Option<&str>) -> Result<Vec<Hyperparams>> {
    let mut cfg = cfg.clone();
    match grid {
        None => return Ok(cfg.grid()),
        Some("mini") => cfg.sweep.grid = mirrornet::config::GridKind::Mini,
        Some("default") => cfg.sweep.grid = mirrornet::config::GridKind::Default,
        Some(path) => {
            let path = Path::new(path);
            require(path)?;
            let text = std::fs::read_to_string(path)
                .map_err(|e| PipelineError::Other(format!("{}: {e}", path.display())))?;
            let file: GridFile = toml::from_str(&text).map_err(|e| {
                PipelineError::Config(mirrornet::config::ConfigError::Parse {
                    path: path.to_path_buf(),
                    message: e.message().to_string(),
                })
            })?;
            for (i, hp) in file.configs.iter().enumerate() {
                hp.validate().map_err(|e| {
                    PipelineError::Config(mirrornet::config::ConfigError::Invalid {
                        section: "grid",
                        message: format!("config {i}: {e}"),
                    })
                })?;
            }
            return Ok(file.configs);
        }
    }
    Ok(cfg.grid())
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Gen { common, count } => {
            let cfg = load_config(&common)?;
            let rows = count.unwrap_or(cfg.generation.rows);
            let out = match &common.out {
                Some(p) => p.clone(),
                None => stage_dir(&cfg, &common, "data")?.join("dataset.csv"),
            };
            if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
                mkdir(parent)?;
            }
            let data = pipeline::generate(&cfg, rows, cfg.seed)?;
            dataset::write_csv(&data, &out)?;
            let name = out
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            dataset::write_json(
                &pipeline::dataset_manifest(&cfg, &data, cfg.seed, &name),
                &out.with_extension("manifest.json"),
            )?;
            println!(
                "wrote {} rows to {} (hop/jump/leap/help {:?})",
                data.len(),
                out.display(),
                data.histogram()
            );
        }
        Command::Split { common, data } => {
            let cfg = load_config(&common)?;
            let data = read_data(&data)?;
            let dir = stage_dir(&cfg, &common, "data")?;
            mkdir(&dir)?;
            let (train, test) =
                dataset::split(&data, &cfg.split.spec(), Seeds::from_run(cfg.seed).split)?;
            dataset::write_csv(&train, &dir.join("train.csv"))?;
            dataset::write_csv(&test, &dir.join("test.csv"))?;
            println!(
                "train {} rows, test {} rows {:?}",
                train.len(),
                test.len(),
                test.histogram()
            );
        }
        Command::Train { common, train, val } => {
            let cfg = load_config(&common)?;
            let (train, val) = train_val(&cfg, &train, val.as_deref())?;
            let dir = stage_dir(&cfg, &common, "train")?;
            let hp = Hyperparams {
                seed: cfg.seed,
                ..cfg.training.clone()
            };
            let run = neural::train(&train, &val, &hp, &dir, &cfg.resolve_timestamp()?)?;
            println!(
                "{} epochs, best epoch {} val loss {:.4}: {}",
                run.epochs.len(),
                run.best_epoch,
                run.best_val_loss,
                run.best().path.display()
            );
        }
        Command::Sweep {
            common,
            train,
            val,
            grid,
        } => {
            let cfg = load_config(&common)?;
            let grid = resolve_grid(&cfg, grid.as_deref())?;
            let (train, val) = train_val(&cfg, &train, val.as_deref())?;
            let dir = stage_dir(&cfg, &common, "sweep")?;
            let manifest = sweep::sweep(&grid, &train, &val, &dir, &cfg.resolve_timestamp()?)?;
            for row in &manifest.rows {
                match (row.best_epoch, row.best_val_loss) {
                    (Some(e), Some(v)) => println!("{} best epoch {e} val loss {v:.4}", row.config),
                    _ => println!("{} failed: {}", row.config, row.error),
                }
            }
        }
        Command::Probe {
            common,
            checkpoint,
            test,
            k,
        } => {
            let cfg = load_config(&common)?;
            let ckpt = load_checkpoint(&checkpoint)?;
            let test = read_data(&test)?;
            let quads = probes::build_scenarios(
                &test,
                k.unwrap_or(cfg.probe.k),
                Seeds::from_run(cfg.seed).probe,
            )?;
            let stats = probes::stats(&probes::capture(&ckpt.network, &quads)?)?;
            let dir = stage_dir(&cfg, &common, "probe")?;
            mkdir(&dir)?;
            probes::write_stats_csv(&stats, &dir.join("stats.csv"))?;
            println!("{} quadruples, {} stat rows", quads.len(), stats.len());
        }
        Command::Cmni {
            common,
            checkpoint,
            test,
            stats,
            k,
        } => {
            let cfg = load_config(&common)?;
            let ckpt = load_checkpoint(&checkpoint)?;
            let dir = stage_dir(&cfg, &common, "cmni")?;
            mkdir(&dir)?;
            let report = match (test, stats) {
                (Some(test), _) => {
                    let test = read_data(&test)?;
                    let mut cfg = cfg.clone();
                    if let Some(k) = k {
                        cfg.probe.k = k;
                    }
                    let quads = probes::build_scenarios(
                        &test,
                        cfg.probe.k,
                        Seeds::from_run(cfg.seed).probe,
                    )?;
                    let a = pipeline::analyse(&ckpt.network, &quads, &cfg)?;
                    pipeline::write_analysis(&a, &dir)?;
                    a.report
                }
                (None, Some(stats)) => {
                    require(&stats)?;
                    let s = probes::read_stats_csv(&stats)?;
                    let r = cmni::cmni(&cmni::deltas(&s)?, &cfg.cmni)?;
                    cmni::write_report_json(&r, &dir.join("cmni.json"))?;
                    cmni::write_deltas_csv(&r, &dir.join("deltas.csv"))?;
                    r
                }
                (None, None) => unreachable!("clap requires --test or --stats"),
            };
            let summary = cmni::classify_case(&report, &cfg.cmni);
            println!("val_loss {} cmni {}", ckpt.val_loss, report.cmni);
            for c in &summary.candidates {
                let ratio = c
                    .amplification
                    .map_or("degenerate".to_string(), |r| format!("{r:.1}"));
                println!(
                    "candidate {} mns {:.5} amplification {ratio}",
                    c.neuron, c.mns
                );
            }
            for d in &summary.differentiators {
                println!("differentiator {d}");
            }
        }
        Command::Circuits {
            common,
            checkpoint,
            cmni_report,
        } => {
            let cfg = load_config(&common)?;
            let ckpt = load_checkpoint(&checkpoint)?;
            require(&cmni_report)?;
            let report = cmni::read_report_json(&cmni_report)?;
            let graphs = pipeline::hubs(&ckpt.network, &report, &cfg)?;
            let dir = stage_dir(&cfg, &common, "circuits")?;
            mkdir(&dir)?;
            let (json, _) =
                circuits::export_graph(&graphs, &dir.join("graph"), cfg.circuits.export_zscore)?;
            for g in &graphs {
                let target = g.action_target.map_or("-".to_string(), |a| a.to_string());
                println!("{} share {:.3} target {target}", g.name, g.candidate_share);
            }
            println!("wrote {}", json.display());
        }
        Command::Eval {
            common,
            checkpoint,
            test,
        } => {
            let cfg = load_config(&common)?;
            let ckpt = load_checkpoint(&checkpoint)?;
            let test = read_data(&test)?;
            let result = evalreport::evaluate(&ckpt.network, &test)?;
            let dir = stage_dir(&cfg, &common, "eval")?;
            mkdir(&dir)?;
            dataset::write_json(&result, &dir.join("eval.json"))?;
            println!(
                "accuracy {:.4} ({}/{})",
                result.accuracy, result.correct, result.total
            );
        }
        Command::Report {
            common,
            sweep: sweep_dir,
            test,
        } => {
            let cfg = load_config(&common)?;
            let manifest_path = sweep_dir.join(sweep::MANIFEST_FILE);
            require(&manifest_path)?;
            let manifest = sweep::SweepManifest::read_csv(&manifest_path)?;
            let test = read_data(&test)?;
            let dir = stage_dir(&cfg, &common, "report")?;
            let analysis = pipeline::analyse_sweep(
                &cfg,
                &sweep_dir,
                &manifest,
                &test,
                &dir.join("analysis"),
                Seeds::from_run(cfg.seed).probe,
            )?;
            let bundle = evalreport::report(
                &manifest,
                &analysis.entries,
                &analysis.evals,
                &cfg.report,
                &dir,
            )?;
            print!("{}", evalreport::summary_text(&manifest, &bundle));
        }
        Command::RunAll { common } => {
            let mut cfg = load_config(&common)?;
            if let Some(out) = &common.out {
                cfg.out_root = out.clone();
            }
            let summary = pipeline::run_all(&cfg)?;
            print!(
                "{}",
                evalreport::summary_text(&summary.sweep, &summary.report)
            );
            println!("bundle: {}", summary.run_dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind as Clap;
            if matches!(e.kind(), Clap::DisplayHelp | Clap::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let rendered = e.to_string();
            let line = rendered
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("usage error");
            eprintln!(
                "mirrornet: kind=usage {}",
                line.trim_start_matches("error: ")
            );
            return ExitCode::from(2);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (kind, code) = match e.kind() {
                ErrorKind::Config => ("config", 3),
                ErrorKind::MissingInput => ("missing-input", 4),
                ErrorKind::Runtime => ("runtime", 5),
            };
            let message = e.to_string().replace(['\n', '\r'], " ");
            eprintln!("mirrornet: kind={kind} {message}");
            ExitCode::from(code)
        }
    }
}
