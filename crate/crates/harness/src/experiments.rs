//! Drivers behind the CLI subcommands. Each writes into a run directory and
//! returns what it computed so tests can inspect results without reparsing.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smdp_core::agents::{self, Algorithm, BehaviorCloner, OnlineRun};
use smdp_core::approx::{finite_difference_gradient, max_relative_error, Mlp, Sample};
use smdp_core::data::{self, BehaviorMix, OptionDataset, SplitTag, VALIDATION_SEED};
use smdp_core::gridworld::{encode, rollout, Episode};
use smdp_core::tabular::{self, OptionModel, TabularQ};
use smdp_core::{Discounting, EnvVariant, GridState, RunConfig, ValidationScheme};

use crate::checkpoint::{Checkpoint, CheckpointKind};
use crate::config_file::{self, config_hash};
use crate::error::{HarnessError, Result};
use crate::metrics::{MetricsRow, MetricsWriter, RunTag};
use crate::plot::{self, dataset_descriptor, emit_plot_data, Figure};
use crate::select::select_model;

pub const CONFIG_FILE: &str = "config.txt";
pub const METRICS_FILE: &str = "metrics.csv";
pub const VALIDATION_FILE: &str = "validation.txt";
pub const TEST_STARTS_FILE: &str = "test_starts.txt";

const VI_TOLERANCE: f64 = 1e-12;
const VI_MAX_SWEEPS: usize = 100_000;

/// Creates `dir`, refusing a non-empty existing one unless `force`.
pub fn prepare_run_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let mut entries = fs::read_dir(dir).map_err(|e| HarnessError::io(dir, e))?;
        if entries.next().is_some() && !force {
            return Err(HarnessError::RunDirExists(dir.to_path_buf()));
        }
    }
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    // Metrics are appended; a forced rerun starts them afresh.
    let metrics = dir.join(METRICS_FILE);
    if metrics.exists() {
        fs::remove_file(&metrics).map_err(|e| HarnessError::io(&metrics, e))?;
    }
    Ok(())
}

pub fn write_config(dir: &Path, config: &RunConfig) -> Result<()> {
    let path = dir.join(CONFIG_FILE);
    fs::write(&path, config_file::render(config)).map_err(|e| HarnessError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

fn write_metrics(dir: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut w = MetricsWriter::open(&dir.join(METRICS_FILE))?;
    w.append_all(rows)?;
    w.finish()
}

pub fn oracle_table(variant: &EnvVariant) -> Result<TabularQ<f64>> {
    Ok(tabular::smdp_value_iteration(variant, VI_TOLERANCE, VI_MAX_SWEEPS)?)
}

#[derive(Debug, Clone)]
pub struct OracleSummary {
    pub table: TabularQ<f64>,
    pub residual: f64,
    pub start_value: f64,
}

/// Value iteration on the config's variant; writes the table as a checkpoint
/// and as CSV.
pub fn run_oracle(config: &RunConfig, out: &Path) -> Result<OracleSummary> {
    let variant = config.env_variant();
    let table = oracle_table(&variant)?;
    let model = OptionModel::from_variant(&variant)?;
    let residual = tabular::bellman_residual(&model, &table, Discounting::Smdp);
    let start_value = table.state_value(GridState::default_start().index());

    Checkpoint::from_table(&table, config.seed, config_hash(config))?.save(&out.join("oracle.ckpt"))?;
    let mut csv = String::from("state,row,col,orientation,done,q_turn_left,q_turn_right,q_forward,greedy\n");
    for s in smdp_core::gridworld::enumerate_states() {
        let i = s.index();
        let q = table.row(i);
        csv.push_str(&format!(
            "{i},{},{},{:?},{},{},{},{},{}\n",
            s.row,
            s.col,
            s.orientation,
            s.done,
            data::format_real(q[0]),
            data::format_real(q[1]),
            data::format_real(q[2]),
            table.greedy(i)
        ));
    }
    write_text(&out.join("q_table.csv"), &csv)?;
    let tag = RunTag {
        run: format!("oracle-{}", variant.kind.name()),
        seed: config.seed,
        algo: "value-iteration".into(),
        dataset: variant.kind.name().into(),
    };
    write_metrics(
        out,
        &[tag.row(0, "bellman_residual", residual), tag.row(0, "start_value", start_value)],
    )?;
    Ok(OracleSummary {
        table,
        residual,
        start_value,
    })
}

fn online_rows(run: &OnlineRun<f64>, seed: u64) -> Vec<MetricsRow> {
    let tag = RunTag {
        run: format!("online-{}-s{seed}", run.algo),
        seed,
        algo: run.algo.name().into(),
        dataset: "online".into(),
    };
    let mut rows = Vec::with_capacity(4 * run.evaluations.len());
    for (i, e) in run.evaluations.iter().enumerate() {
        let i = i as u64;
        rows.push(tag.row(i, plot::EVAL_EPISODE, e.episode as f64));
        rows.push(tag.row(i, plot::EVAL_ENV_STEPS, e.env_steps as f64));
        rows.push(tag.row(i, plot::EVAL_RETURN, e.undiscounted_return));
        rows.push(tag.row(i, plot::EVAL_DISCOUNTED_RETURN, e.discounted_return));
    }
    rows
}

/// Online training of each algorithm on seeds `config.seed .. config.seed +
/// config.online_seeds`, with per-run checkpoints and the learning-curve CSV.
pub fn run_online(config: &RunConfig, algos: &[Algorithm], out: &Path) -> Result<Vec<(u64, OnlineRun<f64>)>> {
    let variant = config.env_variant();
    let hash = config_hash(config);
    let mut runs = Vec::new();
    let mut all_rows = Vec::new();
    for &algo in algos {
        for s in 0..config.online_seeds as u64 {
            let seed = config.seed + s;
            let cfg = RunConfig { seed, ..config.clone() };
            let run = agents::train_online::<f64>(algo, &variant, &cfg)?;
            let dir = out.join(format!("{algo}-s{seed}"));
            fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
            let steps = run.env_steps;
            Checkpoint::from_mlp(CheckpointKind::Main, &run.main, seed, steps, hash)?.save(&dir.join("main.ckpt"))?;
            Checkpoint::from_mlp(CheckpointKind::Target, &run.target, seed, steps, hash)?.save(&dir.join("target.ckpt"))?;
            if let Some(c) = &run.cloner {
                Checkpoint::from_mlp(CheckpointKind::Cloner, &c.net, seed, steps, hash)?.save(&dir.join("cloner.ckpt"))?;
            }
            let rows = online_rows(&run, seed);
            write_metrics(out, &rows)?;
            all_rows.extend(rows);
            runs.push((seed, run));
        }
    }
    write_text(
        &out.join(Figure::LearningCurves.file_name()),
        &emit_plot_data(&all_rows, Figure::LearningCurves),
    )?;
    Ok(runs)
}

pub fn dataset_file_name(size: usize, p_random: f64) -> String {
    format!("n{size}-r{p_random}.txt")
}

pub fn validation_file_name(scheme: ValidationScheme, p_random: f64) -> String {
    match scheme {
        ValidationScheme::Fixed => VALIDATION_FILE.to_string(),
        ValidationScheme::SameComposition => format!("validation-r{p_random}.txt"),
    }
}

/// Validation set for a training set under the config's scheme.
pub fn validation_for(
    config: &RunConfig,
    oracle: &TabularQ<f64>,
    train: &OptionDataset<f64>,
) -> Result<OptionDataset<f64>> {
    let variant = config.env_variant();
    let mut v = match config.validation_scheme {
        ValidationScheme::Fixed => data::validation_dataset(&variant, oracle, config.validation_size)?,
        ValidationScheme::SameComposition => data::generate_dataset(
            &variant,
            oracle,
            train.provenance.mix,
            config.validation_size,
            VALIDATION_SEED,
        )?,
    };
    v.split = SplitTag::Validation;
    Ok(v)
}

/// Every size x random-fraction dataset of the config from behavior seed
/// `config.seed`, the validation sets and the test starts.
pub fn run_gen_data(config: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let variant = config.env_variant();
    let oracle = oracle_table(&variant)?;
    let mut written = Vec::new();
    for &p in &config.random_fractions {
        let mix = BehaviorMix::new(p, config.second_best_fraction)?;
        let mut first = None;
        for &size in &config.dataset_sizes {
            let d = data::generate_dataset(&variant, &oracle, mix, size, config.seed)?;
            let path = out.join(dataset_file_name(size, p));
            data::serialize(&d, &path)?;
            written.push(path);
            first.get_or_insert(d);
        }
        if let Some(d) = first {
            let path = out.join(validation_file_name(config.validation_scheme, p));
            if !path.exists() || config.validation_scheme == ValidationScheme::SameComposition {
                data::serialize(&validation_for(config, &oracle, &d)?, &path)?;
                written.push(path);
            }
        }
    }
    let starts = out.join(TEST_STARTS_FILE);
    write_text(&starts, &data::format_starts(&data::test_starts()))?;
    written.push(starts);
    Ok(written)
}

#[derive(Debug, Clone)]
pub struct OfflineSummary {
    pub algo: Algorithm,
    pub selected_epoch: usize,
    pub selected: Mlp<f64>,
    pub cloner: Option<BehaviorCloner<f64>>,
    pub validation_losses: Vec<f64>,
    pub rows: Vec<MetricsRow>,
}

/// Offline training with per-epoch validation and model selection, in
/// memory. `run` names the metrics rows.
pub fn train_offline_run(
    config: &RunConfig,
    algo: Algorithm,
    train: &OptionDataset<f64>,
    validation: &OptionDataset<f64>,
    run: &str,
) -> Result<OfflineSummary> {
    if train.provenance.variant != config.variant {
        return Err(HarnessError::Config(format!(
            "dataset was logged on the {} variant but the config selects {}",
            train.provenance.variant.name(),
            config.variant.name()
        )));
    }
    let tag = RunTag {
        run: run.to_string(),
        seed: config.seed,
        algo: algo.name().into(),
        dataset: dataset_descriptor(&train.provenance),
    };
    let mut rows = Vec::new();
    let mut nets = Vec::with_capacity(config.epochs);
    let mut losses = Vec::with_capacity(config.epochs);
    let result = agents::train_offline_with(algo, train, Some(validation), config, |report, net| {
        let e = report.epoch as u64;
        let v = report.validation_loss.expect("validation set supplied");
        rows.push(tag.row(e, "train_loss", report.train_loss));
        rows.push(tag.row(e, "validation_loss", v));
        losses.push(v);
        nets.push(net.clone());
        Ok(())
    })?;
    let selected_epoch = crate::select::best_index(&losses)?;
    let selected = select_model(&losses, &nets)?.clone();
    rows.push(tag.row(0, "selected_epoch", selected_epoch as f64));
    Ok(OfflineSummary {
        algo,
        selected_epoch,
        selected,
        cloner: result.cloner,
        validation_losses: losses,
        rows,
    })
}

/// `train-offline`: trains on a dataset file and writes metrics and the
/// selected main network, final target network and cloner checkpoints.
pub fn run_train_offline(
    config: &RunConfig,
    algo: Algorithm,
    dataset: &Path,
    validation: Option<&Path>,
    out: &Path,
) -> Result<OfflineSummary> {
    let train: OptionDataset<f64> = data::deserialize(dataset)?;
    let oracle;
    let validation = match validation {
        Some(p) => data::deserialize(p)?,
        None => {
            oracle = oracle_table(&config.env_variant())?;
            validation_for(config, &oracle, &train)?
        }
    };
    let run = format!("offline-{algo}-{}-s{}", dataset_descriptor(&train.provenance), config.seed);
    let summary = train_offline_run(config, algo, &train, &validation, &run)?;
    let hash = config_hash(config);
    let epoch = summary.selected_epoch as u64;
    Checkpoint::from_mlp(CheckpointKind::Main, &summary.selected, config.seed, epoch, hash)?.save(&out.join("main.ckpt"))?;
    if let Some(c) = &summary.cloner {
        Checkpoint::from_mlp(CheckpointKind::Cloner, &c.net, config.seed, epoch, hash)?.save(&out.join("cloner.ckpt"))?;
    }
    write_metrics(out, &summary.rows)?;
    Ok(summary)
}

/// A policy that can be rolled out greedily.
pub enum Policy {
    Network {
        algo: Algorithm,
        net: Mlp<f64>,
        cloner: Option<BehaviorCloner<f64>>,
        tau: f64,
    },
    Table(TabularQ<f64>),
}

impl Policy {
    pub fn rollout(&self, variant: &EnvVariant, start: GridState, max_options: usize) -> Result<Episode> {
        Ok(match self {
            Policy::Network {
                algo,
                net,
                cloner,
                tau,
            } => agents::evaluate_policy(*algo, net, cloner.as_ref(), *tau, variant, start, max_options)?,
            Policy::Table(q) => rollout(variant, start, max_options, |s| Ok(q.greedy(s.index())))?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub starts: Vec<GridState>,
    pub episodes: Vec<Episode>,
    pub default_start: Episode,
}

impl Evaluation {
    pub fn mean_return(&self) -> f64 {
        plot::mean(&self.episodes.iter().map(|e| e.undiscounted_return).collect::<Vec<_>>())
    }
}

/// Greedy rollouts from the fixed test starts and the default start.
pub fn evaluate(config: &RunConfig, policy: &Policy) -> Result<Evaluation> {
    let variant = config.env_variant();
    let starts = data::test_starts();
    let episodes = starts
        .iter()
        .map(|s| policy.rollout(&variant, *s, config.max_episode_options))
        .collect::<Result<Vec<_>>>()?;
    let default_start = policy.rollout(&variant, GridState::default_start(), config.max_episode_options)?;
    Ok(Evaluation {
        starts,
        episodes,
        default_start,
    })
}

pub fn evaluation_rows(eval: &Evaluation, tag: &RunTag) -> Vec<MetricsRow> {
    let mut rows = Vec::new();
    for (i, e) in eval.episodes.iter().enumerate() {
        rows.push(tag.row(i as u64, plot::TEST_RETURN, e.undiscounted_return));
        rows.push(tag.row(i as u64, "test_discounted_return", e.discounted_return));
    }
    rows.push(tag.row(0, "default_start_return", eval.default_start.undiscounted_return));
    rows.push(tag.row(0, "default_start_discounted_return", eval.default_start.discounted_return));
    rows
}

/// Loads the policy stored in `checkpoint`; batch-constrained algorithms also
/// need the cloner checkpoint.
pub fn load_policy(config: &RunConfig, algo: Algorithm, checkpoint: &Path, cloner: Option<&Path>) -> Result<Policy> {
    let ck = Checkpoint::load(checkpoint)?;
    ck.verify_config(&config_hash(config))?;
    if ck.kind == CheckpointKind::TabularOracle {
        return Ok(Policy::Table(ck.to_table(config.variant)?));
    }
    let cloner = if algo.is_batch_constrained() {
        let default = checkpoint.with_file_name("cloner.ckpt");
        let path = cloner.unwrap_or(&default);
        let c = Checkpoint::load(path)?;
        c.verify_config(&config_hash(config))?;
        if c.kind != CheckpointKind::Cloner {
            return Err(HarnessError::Checkpoint(format!("{} is not a cloner checkpoint", path.display())));
        }
        Some(BehaviorCloner::new(c.to_mlp()?))
    } else {
        None
    };
    Ok(Policy::Network {
        algo,
        net: ck.to_mlp()?,
        cloner,
        tau: config.bcq_threshold,
    })
}

/// `evaluate`: test-start rollouts written as CSV and metrics.
pub fn run_evaluate(config: &RunConfig, algo: &str, policy: &Policy, dataset: &str, out: &Path) -> Result<Evaluation> {
    let eval = evaluate(config, policy)?;
    let mut csv = String::from("start,row,col,orientation,return,discounted_return,options,reached_goal\n");
    for (i, (s, e)) in eval.starts.iter().zip(&eval.episodes).enumerate() {
        csv.push_str(&format!(
            "{i},{},{},{:?},{},{},{},{}\n",
            s.row,
            s.col,
            s.orientation,
            data::format_real(e.undiscounted_return),
            data::format_real(e.discounted_return),
            e.options,
            e.reached_goal
        ));
    }
    csv.push_str(&format!("mean,,,,{},,,\n", data::format_real(eval.mean_return())));
    write_text(&out.join("evaluation.csv"), &csv)?;
    let tag = RunTag {
        run: format!("evaluate-{algo}-{dataset}-s{}", config.seed),
        seed: config.seed,
        algo: algo.to_string(),
        dataset: dataset.to_string(),
    };
    write_metrics(out, &evaluation_rows(&eval, &tag))?;
    Ok(eval)
}

/// Full offline grid: for every seed, dataset size and random fraction,
/// generate a dataset (behavior seed = run seed), train each algorithm, and
/// evaluate the selected network on the test starts.
pub fn run_offline_sweep(config: &RunConfig, algos: &[Algorithm], out: &Path) -> Result<Vec<MetricsRow>> {
    let variant = config.env_variant();
    let oracle = oracle_table(&variant)?;
    let mut all = Vec::new();
    for s in 0..config.offline_seeds as u64 {
        let seed = config.seed + s;
        let cfg = RunConfig { seed, ..config.clone() };
        for &p in &config.random_fractions {
            let mix = BehaviorMix::new(p, config.second_best_fraction)?;
            for &size in &config.dataset_sizes {
                let train = data::generate_dataset(&variant, &oracle, mix, size, seed)?;
                let validation = validation_for(&cfg, &oracle, &train)?;
                let desc = dataset_descriptor(&train.provenance);
                for &algo in algos {
                    let run = format!("offline-{algo}-{desc}-s{seed}");
                    let summary = train_offline_run(&cfg, algo, &train, &validation, &run)?;
                    let policy = Policy::Network {
                        algo,
                        net: summary.selected.clone(),
                        cloner: summary.cloner.clone(),
                        tau: cfg.bcq_threshold,
                    };
                    let eval = evaluate(&cfg, &policy)?;
                    let tag = RunTag {
                        run,
                        seed,
                        algo: algo.name().into(),
                        dataset: desc.clone(),
                    };
                    let mut rows = summary.rows;
                    rows.extend(evaluation_rows(&eval, &tag));
                    write_metrics(out, &rows)?;
                    all.extend(rows);
                }
            }
        }
    }
    write_text(
        &out.join(Figure::OfflineGrid.file_name()),
        &emit_plot_data(&all, Figure::OfflineGrid),
    )?;
    Ok(all)
}

/// Worst per-coordinate relative error of one random gradient check.
pub fn gradient_check_instance<R: Rng>(rng: &mut R) -> Result<f64> {
    let depth = rng.gen_range(1..=3);
    let mut sizes = vec![rng.gen_range(2..=10)];
    for _ in 0..depth {
        sizes.push(rng.gen_range(2..=12));
    }
    sizes.push(rng.gen_range(2..=4));
    let net = Mlp::<f64>::new(&sizes, rng)?;
    let n = rng.gen_range(1..=8);
    let xs: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..sizes[0]).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let batch: Vec<Sample<f64>> = xs
        .iter()
        .map(|x| Sample {
            x,
            option: rng.gen_range(0..net.output_dim()),
            target: rng.gen_range(-5.0..5.0),
        })
        .collect();
    let (_, analytic) = net.loss_and_gradient(&batch)?;
    let numeric = finite_difference_gradient(&net, &batch, 1e-5)?;
    Ok(max_relative_error(&analytic, &numeric, 1e-6))
}

/// `instances` random checks on seed `seed`; the worst error of each.
pub fn gradient_check_suite(seed: u64, instances: usize) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..instances).map(|_| gradient_check_instance(&mut rng)).collect()
}

/// Also checks the network shapes the agents use, on encoded grid states.
pub fn grid_gradient_check(config: &RunConfig, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sizes = vec![smdp_core::gridworld::ENCODING_LEN];
    sizes.extend(&config.hidden_sizes);
    sizes.push(smdp_core::NUM_OPTIONS);
    let net = Mlp::<f64>::new(&sizes, &mut rng)?;
    let states = smdp_core::gridworld::enumerate_states();
    let xs: Vec<Vec<f64>> = (0..4)
        .map(|_| encode::<f64>(&states[rng.gen_range(0..states.len())]).into_inner())
        .collect();
    let batch: Vec<Sample<f64>> = xs
        .iter()
        .map(|x| Sample {
            x,
            option: rng.gen_range(0..smdp_core::NUM_OPTIONS),
            target: rng.gen_range(-5.0..5.0),
        })
        .collect();
    let (_, analytic) = net.loss_and_gradient(&batch)?;
    let numeric = finite_difference_gradient(&net, &batch, 1e-5)?;
    Ok(max_relative_error(&analytic, &numeric, 1e-6))
}
