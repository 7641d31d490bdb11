//! End-to-end acceptance checks. Runs as its own binary (no libtest
//! harness) and prints one PASS/FAIL line per criterion; exits nonzero if
//! any criterion fails.
//!
//! `ACCEPTANCE_ONLY=2,5` restricts the run to the listed criteria.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use smdp_core::agents::{bcq_mask, compute_targets, Algorithm, BehaviorCloner, TargetParams};
use smdp_core::approx::Mlp;
use smdp_core::gridworld::EnvVariant;
use smdp_core::tabular::{bellman_residual, smdp_q_learning, OptionModel};
use smdp_core::{
    interpolated_option_return, ClipBounds, Discounting, EpsilonSchedule, GridState, OptionTransition, RunConfig,
    StateVector,
};
use smdp_harness::experiments::{self, oracle_table};
use smdp_harness::plot::{offline_cells, std_dev, GridCell};

type Outcome = (bool, String);

fn criterion_1() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for variant in [EnvVariant::online(), EnvVariant::offline()] {
        let q = oracle_table(&variant).expect("value iteration");
        let model = OptionModel::from_variant(&variant).expect("model");
        let residual = bellman_residual(&model, &q, Discounting::Smdp);
        let learned = smdp_q_learning::<f64>(&variant, 1.0, EpsilonSchedule::constant(1.0), 200_000, 11)
            .expect("q-learning");
        let gap = learned.max_abs_diff(&q);
        ok &= residual <= 1e-10 && gap <= 1e-6;
        notes.push(format!("{} residual {residual:.1e} q-learning gap {gap:.1e}", variant.kind.name()));
    }
    (ok, notes.join("; "))
}

fn criterion_2() -> Outcome {
    let config = RunConfig::online();
    let v_star = oracle_table(&config.env_variant())
        .expect("value iteration")
        .state_value(GridState::default_start().index());
    let dir = tempfile::tempdir().expect("tempdir");
    let runs = experiments::run_online(&config, &Algorithm::ALL, dir.path()).expect("online training");
    let mut ok = true;
    let mut notes = Vec::new();
    for algo in Algorithm::ALL {
        let finals: Vec<f64> = runs
            .iter()
            .filter(|(_, r)| r.algo == algo)
            .map(|(_, r)| r.evaluations.last().expect("final evaluation").discounted_return)
            .collect();
        let hits = if algo.uses_smdp_discounting() {
            finals.iter().filter(|g| (*g - v_star).abs() <= 1e-6).count()
        } else {
            finals.iter().filter(|g| **g < v_star - 1e-6).count()
        };
        let need = if algo.uses_smdp_discounting() { finals.len() } else { 2 };
        ok &= finals.len() == config.online_seeds && hits >= need;
        let shown: Vec<String> = finals.iter().map(|g| format!("{g:.6}")).collect();
        notes.push(format!("{algo} [{}]", shown.join(" ")));
    }
    (ok, format!("V*(start) {v_star:.6}; {}", notes.join(", ")))
}

fn cell<'a>(cells: &'a [GridCell], algo: Algorithm, dataset: &str) -> &'a GridCell {
    cells
        .iter()
        .find(|c| c.algo == algo.name() && c.dataset == dataset)
        .expect("grid cell present")
}

fn criterion_3() -> Outcome {
    let dir = tempfile::tempdir().expect("tempdir");
    let mut base = RunConfig::offline();
    base.offline_seeds = 5;
    base.random_fractions = vec![0.1];
    let mut rows = Vec::new();
    // Same number of gradient steps per epoch scale: the large set needs
    // far fewer passes.
    for (size, epochs) in [(100, 100), (10_000, 10)] {
        let config = RunConfig {
            dataset_sizes: vec![size],
            epochs,
            ..base.clone()
        };
        let out = dir.path().join(format!("n{size}"));
        fs::create_dir_all(&out).expect("mkdir");
        rows.extend(experiments::run_offline_sweep(&config, &Algorithm::SMDP, &out).expect("offline sweep"));
    }
    let cells = offline_cells(&rows);
    let m = |algo, d| {
        let c = cell(&cells, algo, d);
        let v = c.seed_means();
        (v.iter().sum::<f64>() / v.len() as f64, std_dev(&v))
    };
    let small = "n100-r0.1";
    let large = "n10000-r0.1";
    let (sbcq_s, _) = m(Algorithm::Sbcq, small);
    let (sdqn_s, _) = m(Algorithm::Sdqn, small);
    let (sddqn_s, _) = m(Algorithm::Sddqn, small);
    let small_ok = sbcq_s >= sdqn_s && sbcq_s >= sddqn_s;
    let large_stats: Vec<(Algorithm, f64, f64)> = Algorithm::SMDP
        .iter()
        .map(|&a| {
            let (mean, sd) = m(a, large);
            (a, mean, sd)
        })
        .collect();
    let (best_algo, best_mean, best_sd) = large_stats
        .iter()
        .copied()
        .fold(large_stats[0], |b, x| if x.1 > b.1 { x } else { b });
    let (_, sbcq_l, _) = large_stats[2];
    let large_ok = sbcq_l >= best_mean - best_sd;
    (
        small_ok && large_ok,
        format!(
            "n100: sbcq {sbcq_s:.3} sdqn {sdqn_s:.3} sddqn {sddqn_s:.3}; n10000: sbcq {sbcq_l:.3}, best {best_algo} {best_mean:.3} (sd {best_sd:.3})"
        ),
    )
}

fn criterion_4() -> Outcome {
    let errors = experiments::gradient_check_suite(4, 20).expect("gradient checks");
    let worst = errors.iter().copied().fold(0.0, f64::max);
    (errors.len() == 20 && worst < 1e-4, format!("20 instances, worst relative error {worst:.2e}"))
}

fn random_transition<R: Rng>(rng: &mut R, dim: usize, k: u32) -> OptionTransition<f64> {
    let v = |rng: &mut R| StateVector::new((0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).expect("finite");
    OptionTransition {
        x: v(rng),
        option: rng.gen_range(0..3),
        rho: rng.gen_range(-5.0..5.0),
        x_next: v(rng),
        k,
        terminal: rng.gen_bool(0.2),
    }
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..1_000 {
        let dim = rng.gen_range(2..8);
        let sizes = [dim, rng.gen_range(2..10), 3];
        let main = Mlp::<f64>::new(&sizes, &mut rng).expect("net");
        let target = Mlp::<f64>::new(&sizes, &mut rng).expect("net");
        let cloner = BehaviorCloner::new(Mlp::<f64>::new(&sizes, &mut rng).expect("net"));
        let clip = rng
            .gen_bool(0.5)
            .then(|| ClipBounds::new(-rng.gen_range(0.0..3.0), rng.gen_range(0.0..3.0)).expect("bounds"));
        let mut params = TargetParams {
            gamma: rng.gen_range(0.5..1.0),
            tau: 0.0,
            clip,
        };
        let n = rng.gen_range(1..33);
        let batch: Vec<_> = (0..n).map(|_| {
                let k = rng.gen_range(1..8);
                random_transition(&mut rng, dim, k)
            }).collect();
        let refs: Vec<&OptionTransition<f64>> = batch.iter().collect();
        let t = |algo, tgt: &Mlp<f64>, p: &TargetParams<f64>, r: &[&OptionTransition<f64>]| {
            compute_targets(algo, r, &main, tgt, p, Some(&cloner)).expect("targets")
        };

        worst = worst.max(max_diff(
            &t(Algorithm::Sbcq, &target, &params, &refs),
            &t(Algorithm::Sddqn, &target, &params, &refs),
        ));
        worst = worst.max(max_diff(
            &t(Algorithm::Sddqn, &main, &params, &refs),
            &t(Algorithm::Sdqn, &main, &params, &refs),
        ));
        params.tau = rng.gen_range(0.0..1.0);
        let unit: Vec<_> = batch.iter().map(|b| OptionTransition { k: 1, ..b.clone() }).collect();
        let unit_refs: Vec<&OptionTransition<f64>> = unit.iter().collect();
        for algo in Algorithm::SMDP {
            worst = worst.max(max_diff(
                &t(algo, &target, &params, &unit_refs),
                &t(algo.counterpart(), &target, &params, &unit_refs),
            ));
        }
    }
    (worst == 0.0, format!("1000 minibatches, max absolute difference {worst:e}"))
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut violations = 0;
    for _ in 0..10_000 {
        let n = rng.gen_range(1..8);
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(1e-6..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let p: Vec<f64> = raw.iter().map(|r| r / total).collect();
        let max = p.iter().copied().fold(0.0, f64::max);
        let tau = rng.gen_range(0.0..1.0);
        let mask = bcq_mask(&p, tau).expect("valid probabilities");
        for (i, pi) in p.iter().enumerate() {
            if mask.contains(&i) != (pi / max > tau) {
                violations += 1;
            }
        }
        if bcq_mask(&p, 0.0).expect("valid probabilities").len() != n {
            violations += 1;
        }
    }
    (violations == 0, format!("10000 vectors, {violations} violations"))
}

/// Enumerates the interpolated points directly.
fn brute_force_return(start: f64, end: f64, k: u32, low: f64, high: f64, gamma: f64) -> f64 {
    let mut total = 0.0;
    for j in 1..=k {
        let w = j as f64 / k as f64;
        let s = (1.0 - w) * start + w * end;
        if low <= s && s <= high {
            total += gamma.powi(j as i32 - 1);
        }
    }
    total
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let start = rng.gen_range(0.5..5.0);
        let end = rng.gen_range(0.5..5.0);
        let k = rng.gen_range(1..=50);
        let low = rng.gen_range(0.5..4.0);
        let high = low + rng.gen_range(0.1..2.0);
        let gamma = rng.gen_range(0.5..1.0);
        let got = interpolated_option_return(start, end, k, (low, high), gamma).expect("valid instance");
        worst = worst.max((got - brute_force_return(start, end, k, low, high, gamma)).abs());
    }
    (worst <= 1e-12, format!("10000 instances, max error {worst:e}"))
}

fn smdp(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_smdp"))
        .args(args)
        .output()
        .expect("run smdp binary")
}

fn run_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .expect("read run dir")
        .map(|e| {
            let p = e.expect("entry").path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).expect("read"))
        })
        .collect();
    files.sort();
    files
}

fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().expect("tempdir");
    let config = dir.path().join("config.txt");
    fs::write(
        &config,
        "variant: offline\nseed: 3\nepochs: 8\ncloner_epochs: 10\ndataset_sizes: 200\nrandom_fractions: 0.1\n",
    )
    .expect("write config");
    let cfg = config.to_str().unwrap();
    let data = dir.path().join("data");
    let gen = smdp(&["gen-data", "--config", cfg, "--out", data.to_str().unwrap()]);
    if !gen.status.success() {
        return (false, format!("gen-data failed: {}", String::from_utf8_lossy(&gen.stderr)));
    }
    let dataset = data.join("n200-r0.1.txt");
    let mut outcomes = Vec::new();
    for algo in ["sbcq", "sdqn"] {
        let runs: Vec<_> = (0..2)
            .map(|i| {
                let out = dir.path().join(format!("{algo}-{i}"));
                let o = smdp(&[
                    "train-offline",
                    "--config",
                    cfg,
                    "--algo",
                    algo,
                    "--dataset",
                    dataset.to_str().unwrap(),
                    "--out",
                    out.to_str().unwrap(),
                ]);
                (o.status.success(), out)
            })
            .collect();
        let same = runs.iter().all(|(ok, _)| *ok) && run_files(&runs[0].1) == run_files(&runs[1].1);
        let count = run_files(&runs[0].1).len();
        outcomes.push((same, format!("{algo}: {count} files identical={same}")));
    }
    (
        outcomes.iter().all(|(ok, _)| *ok),
        outcomes.into_iter().map(|(_, s)| s).collect::<Vec<_>>().join(", "),
    )
}

fn main() {
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let criteria: [(usize, fn() -> Outcome); 8] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
    ];
    let mut failed = 0;
    for (n, check) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        let t = Instant::now();
        let (ok, detail) = check();
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {n}: {} ({detail}) [{:.1}s]",
            if ok { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
