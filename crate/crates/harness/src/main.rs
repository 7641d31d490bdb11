use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use smdp_core::agents::Algorithm;
use smdp_core::{RunConfig, VariantKind};
use smdp_harness::experiments::{self, Policy, CONFIG_FILE};
use smdp_harness::metrics::read_metrics;
use smdp_harness::plot::{emit_plot_data, Figure};
use smdp_harness::{config_file, HarnessError, Result};

#[derive(Parser)]
#[command(name = "smdp", version, about = "Option-level Q-learning experiments on the variable-step grid")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Flat `key: value` config file; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Grid variant (online or offline); overrides the config file.
    #[arg(long)]
    variant: Option<String>,
    /// Run directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write into an existing non-empty run directory.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Value iteration; exports the optimal table.
    Oracle {
        #[command(flatten)]
        common: Common,
    },
    /// Online training curves for several algorithms and seeds.
    TrainOnline {
        #[command(flatten)]
        common: Common,
        /// Comma-separated algorithms; all six by default.
        #[arg(long)]
        algo: Option<String>,
    },
    /// Offline datasets for every size and behavior mix of the config.
    GenData {
        #[command(flatten)]
        common: Common,
    },
    /// Epoch-based offline training with validation-loss model selection.
    TrainOffline {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        algo: String,
        /// Training dataset file.
        #[arg(long)]
        dataset: PathBuf,
        /// Validation dataset file; generated from the oracle when absent.
        #[arg(long)]
        validation: Option<PathBuf>,
    },
    /// Greedy rollouts of a checkpoint from the fixed test starts.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Algorithm of a network checkpoint; ignored for oracle tables.
        #[arg(long)]
        algo: Option<String>,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Cloner checkpoint for batch-constrained algorithms; defaults to
        /// cloner.ckpt beside the main checkpoint.
        #[arg(long)]
        cloner: Option<PathBuf>,
        /// Dataset the checkpoint was trained on, used to label metrics.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Offline grid: datasets, training and test evaluation for every seed.
    SweepOffline {
        #[command(flatten)]
        common: Common,
        /// Comma-separated algorithms; sdqn,sddqn,sbcq by default.
        #[arg(long)]
        algo: Option<String>,
    },
    /// Analytic versus finite-difference gradients on random networks.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 20)]
        instances: usize,
    },
    /// Per-figure CSV tables from a metrics file.
    PlotData {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        metrics: PathBuf,
    },
}

fn usage(msg: impl Into<String>) -> HarnessError {
    HarnessError::Usage(msg.into())
}

fn resolve_config(common: &Common, default_variant: VariantKind, fallback_file: Option<&Path>) -> Result<RunConfig> {
    let variant = common
        .variant
        .as_deref()
        .map(|v| VariantKind::parse(v).ok_or_else(|| usage(format!("unknown variant {v:?}"))))
        .transpose()?;
    let file = common.config.as_deref().or(fallback_file.filter(|p| p.exists()));
    let mut config = match file {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
            config_file::parse(&text, variant)?
        }
        None => RunConfig::for_variant(variant.unwrap_or(default_variant)),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn parse_algos(list: Option<&str>, default: &[Algorithm]) -> Result<Vec<Algorithm>> {
    match list {
        None => Ok(default.to_vec()),
        Some(s) => s
            .split(',')
            .map(|a| Algorithm::parse(a.trim()).ok_or_else(|| usage(format!("unknown algorithm {a:?}"))))
            .collect(),
    }
}

/// Prepares the run directory and writes the resolved config into it.
fn open_run(common: &Common, config: &RunConfig) -> Result<PathBuf> {
    let out = common.out.clone().ok_or_else(|| usage("--out is required"))?;
    experiments::prepare_run_dir(&out, common.force)?;
    experiments::write_config(&out, config)?;
    Ok(out)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Oracle { common } => {
            let config = resolve_config(&common, VariantKind::Online, None)?;
            let out = open_run(&common, &config)?;
            let s = experiments::run_oracle(&config, &out)?;
            println!("bellman residual {:e}", s.residual);
            println!("start value {}", s.start_value);
        }
        Command::TrainOnline { common, algo } => {
            let algos = parse_algos(algo.as_deref(), &Algorithm::ALL)?;
            let config = resolve_config(&common, VariantKind::Online, None)?;
            let out = open_run(&common, &config)?;
            for (seed, r) in experiments::run_online(&config, &algos, &out)? {
                let last = r.evaluations.last().expect("final evaluation");
                println!(
                    "{} seed {seed}: return {} discounted {}",
                    r.algo, last.undiscounted_return, last.discounted_return
                );
            }
        }
        Command::GenData { common } => {
            let config = resolve_config(&common, VariantKind::Offline, None)?;
            let out = open_run(&common, &config)?;
            for p in experiments::run_gen_data(&config, &out)? {
                println!("{}", p.display());
            }
        }
        Command::TrainOffline {
            common,
            algo,
            dataset,
            validation,
        } => {
            let algo = Algorithm::parse(&algo).ok_or_else(|| usage(format!("unknown algorithm {algo:?}")))?;
            let config = resolve_config(&common, VariantKind::Offline, None)?;
            if !dataset.is_file() {
                return Err(HarnessError::io(&dataset, std::io::ErrorKind::NotFound.into()));
            }
            let out = open_run(&common, &config)?;
            let s = experiments::run_train_offline(&config, algo, &dataset, validation.as_deref(), &out)?;
            println!(
                "selected epoch {} validation loss {}",
                s.selected_epoch, s.validation_losses[s.selected_epoch]
            );
        }
        Command::Evaluate {
            common,
            algo,
            checkpoint,
            cloner,
            dataset,
        } => {
            let beside = checkpoint.with_file_name(CONFIG_FILE);
            let config = resolve_config(&common, VariantKind::Online, Some(&beside))?;
            let algo = algo
                .as_deref()
                .map(|a| Algorithm::parse(a).ok_or_else(|| usage(format!("unknown algorithm {a:?}"))))
                .transpose()?;
            // Tables need no algorithm; networks do.
            let policy = match algo {
                Some(a) => experiments::load_policy(&config, a, &checkpoint, cloner.as_deref())?,
                None => match experiments::load_policy(&config, Algorithm::Sdqn, &checkpoint, None)? {
                    p @ Policy::Table(_) => p,
                    Policy::Network { .. } => return Err(usage("--algo is required for network checkpoints")),
                },
            };
            let label = match &dataset {
                Some(p) => {
                    let d: smdp_core::Dataset64 = smdp_core::data::deserialize(p)?;
                    smdp_harness::plot::dataset_descriptor(&d.provenance)
                }
                None => config.variant.name().to_string(),
            };
            let name = algo.map_or("oracle", |a| a.name());
            let out = open_run(&common, &config)?;
            let eval = experiments::run_evaluate(&config, name, &policy, &label, &out)?;
            println!("mean test return {}", eval.mean_return());
            println!(
                "default start return {} discounted {}",
                eval.default_start.undiscounted_return, eval.default_start.discounted_return
            );
        }
        Command::SweepOffline { common, algo } => {
            let algos = parse_algos(algo.as_deref(), &Algorithm::SMDP)?;
            let config = resolve_config(&common, VariantKind::Offline, None)?;
            let out = open_run(&common, &config)?;
            experiments::run_offline_sweep(&config, &algos, &out)?;
            print!("{}", fs::read_to_string(out.join(Figure::OfflineGrid.file_name())).unwrap_or_default());
        }
        Command::Gradcheck { common, instances } => {
            let config = resolve_config(&common, VariantKind::Online, None)?;
            let mut errors = experiments::gradient_check_suite(config.seed, instances)?;
            errors.push(experiments::grid_gradient_check(&config, config.seed)?);
            let worst = errors.iter().copied().fold(0.0, f64::max);
            println!("{} checks, worst relative error {worst:e}", errors.len());
            if !(worst < 1e-4) {
                return Err(HarnessError::GradientCheck(worst));
            }
        }
        Command::PlotData { common, metrics } => {
            let rows = read_metrics(&metrics)?;
            let out = common.out.clone().ok_or_else(|| usage("--out is required"))?;
            fs::create_dir_all(&out).map_err(|e| HarnessError::io(&out, e))?;
            for fig in [Figure::LearningCurves, Figure::OfflineGrid] {
                let path = out.join(fig.file_name());
                if path.exists() && !common.force {
                    return Err(HarnessError::RunDirExists(path));
                }
                fs::write(&path, emit_plot_data(&rows, fig)).map_err(|e| HarnessError::io(&path, e))?;
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
