//! Flat `key: value` run configuration files.
//!
//! Blank lines and `#` comments are ignored. Every key is optional; missing
//! keys take the defaults of the selected variant. Unknown keys, duplicate
//! keys and malformed values are errors.

use std::collections::BTreeMap;

use sha2::{Digest, Sha256};
use smdp_core::{ClipBounds, EpsilonSchedule, RunConfig, TargetSync, ValidationScheme, VariantKind};

use crate::error::HarnessError;

/// Every accepted key, in the order [`render`] writes them.
pub const KEYS: &[&str] = &[
    "variant",
    "seed",
    "gamma",
    "learning_rate",
    "minibatch_size",
    "hidden_sizes",
    "target_update",
    "target_update_period",
    "target_update_kappa",
    "bcq_threshold",
    "clip",
    "clip_min",
    "clip_max",
    "epsilon_initial",
    "epsilon_final",
    "epsilon_warmup_steps",
    "epsilon_anneal_steps",
    "online_steps",
    "eval_every_episodes",
    "replay_capacity",
    "max_episode_options",
    "online_seeds",
    "epochs",
    "cloner_epochs",
    "cloner_learning_rate",
    "dataset_sizes",
    "random_fractions",
    "second_best_fraction",
    "validation_size",
    "validation_scheme",
    "offline_seeds",
];

fn bad(line: usize, msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(format!("line {line}: {}", msg.into()))
}

fn parse_value<V: std::str::FromStr>(line: usize, key: &str, raw: &str) -> Result<V, HarnessError> {
    raw.parse()
        .map_err(|_| bad(line, format!("invalid value {raw:?} for {key}")))
}

fn parse_list<V: std::str::FromStr>(line: usize, key: &str, raw: &str) -> Result<Vec<V>, HarnessError> {
    raw.split(',')
        .map(|s| parse_value(line, key, s.trim()))
        .collect()
}

fn parse_bool(line: usize, key: &str, raw: &str) -> Result<bool, HarnessError> {
    match raw {
        "true" | "on" => Ok(true),
        "false" | "off" => Ok(false),
        _ => Err(bad(line, format!("invalid value {raw:?} for {key}"))),
    }
}

/// Splits a config text into `key -> (line, raw value)`.
fn entries(text: &str) -> Result<BTreeMap<String, (usize, String)>, HarnessError> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once(':')
            .ok_or_else(|| bad(n, format!("expected `key: value`, got {content:?}")))?;
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(bad(n, format!("unknown key {key:?}")));
        }
        let value = value.trim();
        if value.is_empty() {
            return Err(bad(n, format!("missing value for {key}")));
        }
        if out.insert(key.to_string(), (n, value.to_string())).is_some() {
            return Err(bad(n, format!("duplicate key {key:?}")));
        }
    }
    Ok(out)
}

/// Parses a config file. `variant` overrides the file's `variant` key and
/// selects the defaults for every key the file leaves out.
pub fn parse(text: &str, variant: Option<VariantKind>) -> Result<RunConfig, HarnessError> {
    let map = entries(text)?;
    let kind = match (variant, map.get("variant")) {
        (Some(k), _) => k,
        (None, Some((n, raw))) => {
            VariantKind::parse(raw).ok_or_else(|| bad(*n, format!("unknown variant {raw:?}")))?
        }
        (None, None) => VariantKind::Online,
    };
    let mut c = RunConfig::for_variant(kind);
    let mut sync_kind = match c.target_sync {
        TargetSync::Lump { .. } => "lump".to_string(),
        TargetSync::Polyak { .. } => "polyak".to_string(),
    };
    let mut period = 100u64;
    let mut kappa = 0.005f64;
    let mut clip_on = c.clip.is_some();
    let (mut clip_min, mut clip_max) = c.clip.map_or((0.0, 0.0), |b| (b.min, b.max));

    for (key, (n, raw)) in &map {
        let (n, raw, key) = (*n, raw.as_str(), key.as_str());
        match key {
            "variant" => {}
            "seed" => c.seed = parse_value(n, key, raw)?,
            "gamma" => c.gamma = parse_value(n, key, raw)?,
            "learning_rate" => c.learning_rate = parse_value(n, key, raw)?,
            "minibatch_size" => c.minibatch_size = parse_value(n, key, raw)?,
            "hidden_sizes" => c.hidden_sizes = parse_list(n, key, raw)?,
            "target_update" => {
                if raw != "lump" && raw != "polyak" {
                    return Err(bad(n, format!("target_update must be lump or polyak, got {raw:?}")));
                }
                sync_kind = raw.to_string();
            }
            "target_update_period" => period = parse_value(n, key, raw)?,
            "target_update_kappa" => kappa = parse_value(n, key, raw)?,
            "bcq_threshold" => c.bcq_threshold = parse_value(n, key, raw)?,
            "clip" => clip_on = parse_bool(n, key, raw)?,
            "clip_min" => clip_min = parse_value(n, key, raw)?,
            "clip_max" => clip_max = parse_value(n, key, raw)?,
            "epsilon_initial" => c.epsilon.initial = parse_value(n, key, raw)?,
            "epsilon_final" => c.epsilon.final_value = parse_value(n, key, raw)?,
            "epsilon_warmup_steps" => c.epsilon.warmup = parse_value(n, key, raw)?,
            "epsilon_anneal_steps" => c.epsilon.anneal = parse_value(n, key, raw)?,
            "online_steps" => c.online_steps = parse_value(n, key, raw)?,
            "eval_every_episodes" => c.eval_every_episodes = parse_value(n, key, raw)?,
            "replay_capacity" => c.replay_capacity = parse_value(n, key, raw)?,
            "max_episode_options" => c.max_episode_options = parse_value(n, key, raw)?,
            "online_seeds" => c.online_seeds = parse_value(n, key, raw)?,
            "epochs" => c.epochs = parse_value(n, key, raw)?,
            "cloner_epochs" => c.cloner_epochs = parse_value(n, key, raw)?,
            "cloner_learning_rate" => c.cloner_learning_rate = parse_value(n, key, raw)?,
            "dataset_sizes" => c.dataset_sizes = parse_list(n, key, raw)?,
            "random_fractions" => c.random_fractions = parse_list(n, key, raw)?,
            "second_best_fraction" => c.second_best_fraction = parse_value(n, key, raw)?,
            "validation_size" => c.validation_size = parse_value(n, key, raw)?,
            "validation_scheme" => {
                c.validation_scheme = match raw {
                    "fixed" => ValidationScheme::Fixed,
                    "same-composition" => ValidationScheme::SameComposition,
                    _ => return Err(bad(n, format!("unknown validation scheme {raw:?}"))),
                }
            }
            "offline_seeds" => c.offline_seeds = parse_value(n, key, raw)?,
            _ => unreachable!("key list checked in entries"),
        }
    }
    c.target_sync = if sync_kind == "lump" {
        TargetSync::Lump { period }
    } else {
        TargetSync::Polyak { kappa }
    };
    c.clip = clip_on.then_some(ClipBounds {
        min: clip_min,
        max: clip_max,
    });
    c.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
    Ok(c)
}

fn join<V: std::fmt::Display>(v: &[V]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// Writes every key of `c`; `parse(&render(c), None)` gives back `c`.
pub fn render(c: &RunConfig) -> String {
    let EpsilonSchedule {
        initial,
        final_value,
        warmup,
        anneal,
    } = c.epsilon;
    let (sync, period, kappa) = match c.target_sync {
        TargetSync::Lump { period } => ("lump", period, 0.005),
        TargetSync::Polyak { kappa } => ("polyak", 100, kappa),
    };
    let (clip_min, clip_max) = c.clip.map_or((0.0, 0.0), |b| (b.min, b.max));
    let values: Vec<String> = vec![
        c.variant.name().to_string(),
        c.seed.to_string(),
        c.gamma.to_string(),
        c.learning_rate.to_string(),
        c.minibatch_size.to_string(),
        join(&c.hidden_sizes),
        sync.to_string(),
        period.to_string(),
        kappa.to_string(),
        c.bcq_threshold.to_string(),
        c.clip.is_some().to_string(),
        clip_min.to_string(),
        clip_max.to_string(),
        initial.to_string(),
        final_value.to_string(),
        warmup.to_string(),
        anneal.to_string(),
        c.online_steps.to_string(),
        c.eval_every_episodes.to_string(),
        c.replay_capacity.to_string(),
        c.max_episode_options.to_string(),
        c.online_seeds.to_string(),
        c.epochs.to_string(),
        c.cloner_epochs.to_string(),
        c.cloner_learning_rate.to_string(),
        join(&c.dataset_sizes),
        join(&c.random_fractions),
        c.second_best_fraction.to_string(),
        c.validation_size.to_string(),
        c.validation_scheme.name().to_string(),
        c.offline_seeds.to_string(),
    ];
    debug_assert_eq!(values.len(), KEYS.len());
    let mut out = String::new();
    for (k, v) in KEYS.iter().zip(values) {
        out.push_str(k);
        out.push_str(": ");
        out.push_str(&v);
        out.push('\n');
    }
    out
}

/// SHA-256 of the rendered config.
pub fn config_hash(c: &RunConfig) -> [u8; 32] {
    Sha256::digest(render(c).as_bytes()).into()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_variant_defaults() {
        assert_eq!(parse("", None).unwrap(), RunConfig::online());
        assert_eq!(parse("# nothing\n\n", Some(VariantKind::Offline)).unwrap(), RunConfig::offline());
        assert_eq!(parse("variant: offline\n", None).unwrap(), RunConfig::offline());
    }

    #[test]
    fn render_round_trips() {
        let mut c = RunConfig::offline();
        c.seed = 42;
        c.target_sync = TargetSync::Polyak { kappa: 0.01 };
        c.clip = None;
        c.random_fractions = vec![0.1];
        c.validation_scheme = ValidationScheme::SameComposition;
        assert_eq!(parse(&render(&c), None).unwrap(), c);
        let on = RunConfig::online();
        assert_eq!(parse(&render(&on), None).unwrap(), on);
    }

    #[test]
    fn values_and_comments() {
        let c = parse(
            "variant: offline  # grid\nlearning_rate: 0.001\nhidden_sizes: 32, 16\ntarget_update_period: 7\n",
            None,
        )
        .unwrap();
        assert_eq!(c.learning_rate, 0.001);
        assert_eq!(c.hidden_sizes, vec![32, 16]);
        assert_eq!(c.target_sync, TargetSync::Lump { period: 7 });
        assert_eq!(c.gamma, 0.95);
    }

    #[test]
    fn rejects_bad_files() {
        for text in [
            "learning_rte: 0.1\n",
            "gamma 0.9\n",
            "gamma: 0.9\ngamma: 0.8\n",
            "gamma: abc\n",
            "gamma: 1.5\n",
            "variant: desert\n",
            "target_update: sometimes\n",
            "minibatch_size:\n",
        ] {
            assert!(matches!(parse(text, None), Err(HarnessError::Config(_))), "{text:?}");
        }
        match parse("\n\nfoo: 1\n", None) {
            Err(HarnessError::Config(m)) => assert!(m.starts_with("line 3"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::online();
        let mut b = a.clone();
        assert_eq!(config_hash(&a), config_hash(&b));
        b.seed = 1;
        assert_ne!(config_hash(&a), config_hash(&b));
    }
}
