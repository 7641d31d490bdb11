//! Run configuration shared by every experiment driver.

use crate::error::{Error, Result};
use crate::gridworld::{EnvVariant, VariantKind};
use crate::returns::ClipBounds;

/// Linear epsilon schedule: `initial` for `warmup` steps, then linear decay
/// to `final_value` over `anneal` steps, constant afterwards.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub initial: f64,
    pub final_value: f64,
    pub warmup: u64,
    pub anneal: u64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self {
            initial: 1.0,
            final_value: 0.1,
            warmup: 5_000,
            anneal: 10_000,
        }
    }
}

impl EpsilonSchedule {
    pub fn constant(epsilon: f64) -> Self {
        Self {
            initial: epsilon,
            final_value: epsilon,
            warmup: 0,
            anneal: 0,
        }
    }

    pub fn value(&self, step: u64) -> f64 {
        if step < self.warmup {
            return self.initial;
        }
        let into = step - self.warmup;
        if into >= self.anneal {
            return self.final_value;
        }
        let frac = into as f64 / self.anneal as f64;
        self.initial + frac * (self.final_value - self.initial)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("epsilon_initial", self.initial), ("epsilon_final", self.final_value)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} = {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// How the target network follows the main network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TargetSync {
    /// Copy every `period` gradient steps.
    Lump { period: u64 },
    /// `target <- kappa * main + (1 - kappa) * target` after every step.
    Polyak { kappa: f64 },
}

/// Which validation set offline model selection uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValidationScheme {
    /// One shared set (25% random, 25% second-best) for every experiment.
    Fixed,
    /// Same behavior mix as the training set it validates.
    SameComposition,
}

impl ValidationScheme {
    pub fn name(self) -> &'static str {
        match self {
            ValidationScheme::Fixed => "fixed",
            ValidationScheme::SameComposition => "same-composition",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub variant: VariantKind,
    pub gamma: f64,
    pub learning_rate: f64,
    pub minibatch_size: usize,
    pub target_sync: TargetSync,
    pub bcq_threshold: f64,
    pub epsilon: EpsilonSchedule,
    pub hidden_sizes: Vec<usize>,
    pub seed: u64,
    /// Offline epochs (M).
    pub epochs: usize,
    pub clip: Option<ClipBounds<f64>>,
    pub dataset_sizes: Vec<usize>,
    pub random_fractions: Vec<f64>,
    pub second_best_fraction: f64,
    pub validation_size: usize,
    pub validation_scheme: ValidationScheme,
    pub cloner_epochs: usize,
    pub cloner_learning_rate: f64,
    pub online_steps: u64,
    pub eval_every_episodes: usize,
    pub replay_capacity: usize,
    pub max_episode_options: usize,
    pub online_seeds: usize,
    pub offline_seeds: usize,
}

impl RunConfig {
    pub fn for_variant(kind: VariantKind) -> Self {
        let variant = kind.variant();
        let (lo, hi) = variant.return_bounds();
        Self {
            variant: kind,
            gamma: variant.gamma,
            learning_rate: 0.0005,
            minibatch_size: 32,
            target_sync: TargetSync::Lump { period: 100 },
            bcq_threshold: 0.3,
            epsilon: EpsilonSchedule::default(),
            hidden_sizes: vec![128, 64],
            seed: 0,
            epochs: 100,
            clip: Some(ClipBounds { min: lo, max: hi }),
            dataset_sizes: vec![100, 1_000, 10_000],
            random_fractions: vec![0.1, 0.25, 0.5],
            second_best_fraction: 0.25,
            validation_size: 250,
            validation_scheme: ValidationScheme::Fixed,
            cloner_epochs: 50,
            cloner_learning_rate: 0.001,
            online_steps: 20_000,
            eval_every_episodes: 20,
            replay_capacity: 50_000,
            max_episode_options: 100,
            online_seeds: 3,
            offline_seeds: 9,
        }
    }

    pub fn online() -> Self {
        Self::for_variant(VariantKind::Online)
    }

    pub fn offline() -> Self {
        Self::for_variant(VariantKind::Offline)
    }

    /// The environment of this run, discounted with the configured gamma.
    pub fn env_variant(&self) -> EnvVariant {
        EnvVariant {
            gamma: self.gamma,
            ..self.variant.variant()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma = {} outside (0, 1]", self.gamma));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate = {} must be positive", self.learning_rate));
        }
        if !(self.cloner_learning_rate > 0.0 && self.cloner_learning_rate.is_finite()) {
            return bad("cloner_learning_rate must be positive".into());
        }
        if self.minibatch_size == 0 {
            return bad("minibatch_size must be positive".into());
        }
        match self.target_sync {
            TargetSync::Lump { period: 0 } => return bad("target_update_period must be positive".into()),
            TargetSync::Polyak { kappa } if !(kappa > 0.0 && kappa <= 1.0) => {
                return bad(format!("target_update_kappa = {kappa} outside (0, 1]"))
            }
            _ => {}
        }
        if !(0.0..=1.0).contains(&self.bcq_threshold) {
            return bad(format!("bcq_threshold = {} outside [0, 1]", self.bcq_threshold));
        }
        self.epsilon.validate()?;
        if self.hidden_sizes.iter().any(|&h| h == 0) {
            return bad("hidden sizes must be positive".into());
        }
        if let Some(c) = self.clip {
            if !(c.min <= c.max) {
                return bad(format!("clip_min {} exceeds clip_max {}", c.min, c.max));
            }
        }
        if self.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        if self.dataset_sizes.iter().any(|&s| s == 0) {
            return bad("dataset sizes must be positive".into());
        }
        for &p in &self.random_fractions {
            if !(0.0..=1.0).contains(&p) || p + self.second_best_fraction > 1.0 {
                return bad(format!(
                    "random fraction {p} with second-best {} is not a valid mix",
                    self.second_best_fraction
                ));
            }
        }
        if self.eval_every_episodes == 0 || self.max_episode_options == 0 {
            return bad("evaluation period and episode cap must be positive".into());
        }
        if self.replay_capacity < self.minibatch_size {
            return bad("replay_capacity smaller than minibatch_size".into());
        }
        Ok(())
    }
}
