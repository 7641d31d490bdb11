//! Per-figure CSV tables derived from metrics rows. Rendering is left to
//! external tools; the output is a pure function of the input rows, so
//! re-emitting identical metrics gives identical bytes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use smdp_core::data::{format_real, DatasetProvenance};

use crate::metrics::MetricsRow;

/// Online learning-curve metrics.
pub const EVAL_EPISODE: &str = "eval_episode";
pub const EVAL_ENV_STEPS: &str = "eval_env_steps";
pub const EVAL_RETURN: &str = "eval_return";
pub const EVAL_DISCOUNTED_RETURN: &str = "eval_discounted_return";
/// Greedy return from one fixed test start; `index` is the start number.
pub const TEST_RETURN: &str = "test_return";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    /// Greedy evaluation returns during online training.
    LearningCurves,
    /// Offline test returns per algorithm and dataset.
    OfflineGrid,
}

impl Figure {
    pub fn file_name(self) -> &'static str {
        match self {
            Figure::LearningCurves => "fig2_learning_curves.csv",
            Figure::OfflineGrid => "fig3_offline_grid.csv",
        }
    }
}

/// `n<size>-r<random fraction>`, e.g. `n100-r0.1`.
pub fn dataset_descriptor(p: &DatasetProvenance) -> String {
    format!("n{}-r{}", p.size, p.mix.p_random())
}

/// Inverse of [`dataset_descriptor`].
pub fn parse_descriptor(d: &str) -> Option<(usize, f64)> {
    let (n, r) = d.strip_prefix('n')?.split_once("-r")?;
    Some((n.parse().ok()?, r.parse().ok()?))
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation; 0 for fewer than two values.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

pub fn emit_plot_data(rows: &[MetricsRow], figure: Figure) -> String {
    match figure {
        Figure::LearningCurves => learning_curves(rows),
        Figure::OfflineGrid => offline_grid(rows),
    }
}

fn learning_curves(rows: &[MetricsRow]) -> String {
    // (algo, seed, eval) -> metric -> value
    let mut points: BTreeMap<(String, u64, u64), BTreeMap<&str, f64>> = BTreeMap::new();
    for r in rows {
        if [EVAL_EPISODE, EVAL_ENV_STEPS, EVAL_RETURN, EVAL_DISCOUNTED_RETURN].contains(&r.metric.as_str()) {
            points
                .entry((r.algo.clone(), r.seed, r.index))
                .or_default()
                .insert(r.metric.as_str(), r.value);
        }
    }
    let mut by_eval: BTreeMap<(&str, u64), Vec<f64>> = BTreeMap::new();
    for ((algo, _, eval), m) in &points {
        if let Some(v) = m.get(EVAL_RETURN) {
            by_eval.entry((algo.as_str(), *eval)).or_default().push(*v);
        }
    }
    let mut out = String::from("algo,seed,eval,episode,env_steps,return,discounted_return,mean_return\n");
    let cell = |m: &BTreeMap<&str, f64>, k: &str| m.get(k).map_or(String::new(), |v| format_real(*v));
    for ((algo, seed, eval), m) in &points {
        let avg = by_eval.get(&(algo.as_str(), *eval)).map_or(String::new(), |v| format_real(mean(v)));
        let _ = writeln!(
            out,
            "{algo},{seed},{eval},{},{},{},{},{avg}",
            cell(m, EVAL_EPISODE),
            cell(m, EVAL_ENV_STEPS),
            cell(m, EVAL_RETURN),
            cell(m, EVAL_DISCOUNTED_RETURN),
        );
    }
    out
}

/// One group of the offline grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub algo: String,
    pub dataset: String,
    /// Mean test return over the starts of each seed.
    pub per_seed: BTreeMap<u64, f64>,
}

impl GridCell {
    pub fn seed_means(&self) -> Vec<f64> {
        self.per_seed.values().copied().collect()
    }
}

/// Groups `test_return` rows by algorithm and dataset.
pub fn offline_cells(rows: &[MetricsRow]) -> Vec<GridCell> {
    let mut groups: BTreeMap<(String, String), BTreeMap<u64, Vec<f64>>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.metric == TEST_RETURN) {
        groups
            .entry((r.algo.clone(), r.dataset.clone()))
            .or_default()
            .entry(r.seed)
            .or_default()
            .push(r.value);
    }
    let mut cells: Vec<GridCell> = groups
        .into_iter()
        .map(|((algo, dataset), seeds)| GridCell {
            algo,
            dataset,
            per_seed: seeds.into_iter().map(|(s, v)| (s, mean(&v))).collect(),
        })
        .collect();
    let key = |c: &GridCell| parse_descriptor(&c.dataset).map(|(n, r)| (n, r.to_bits()));
    cells.sort_by(|a, b| (&a.algo, key(a), &a.dataset).cmp(&(&b.algo, key(b), &b.dataset)));
    cells
}

fn offline_grid(rows: &[MetricsRow]) -> String {
    let cells = offline_cells(rows);
    let seeds: BTreeSet<u64> = cells.iter().flat_map(|c| c.per_seed.keys().copied()).collect();
    let mut out = String::from("algo,dataset,size,random_fraction,seeds,mean,std");
    for s in &seeds {
        let _ = write!(out, ",seed_{s}");
    }
    out.push('\n');
    for c in &cells {
        let (size, frac) = parse_descriptor(&c.dataset).map_or((String::new(), String::new()), |(n, r)| (n.to_string(), r.to_string()));
        let v = c.seed_means();
        let _ = write!(
            out,
            "{},{},{size},{frac},{},{},{}",
            c.algo,
            c.dataset,
            v.len(),
            format_real(mean(&v)),
            format_real(std_dev(&v))
        );
        for s in &seeds {
            out.push(',');
            if let Some(x) = c.per_seed.get(s) {
                out.push_str(&format_real(*x));
            }
        }
        out.push('\n');
    }
    out
}
