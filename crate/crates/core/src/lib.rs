//! Option-level (semi-Markov) value-based reinforcement learning, online and
//! offline.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the bottom of this file fix the precision the harness uses.

pub mod agents;
pub mod approx;
pub mod config;
pub mod data;
pub mod error;
pub mod gridworld;
pub mod returns;
pub mod scalar;
pub mod seeding;
pub mod tabular;
pub mod types;

pub use config::{EpsilonSchedule, RunConfig, TargetSync, ValidationScheme};
pub use error::{Error, Result};
pub use gridworld::{EnvVariant, GridState, GridWorld, Orientation, VariantKind};
pub use returns::{
    discounted_return, interpolated_option_return, mdp_baseline_target, smdp_target, ClipBounds,
    Discounting,
};
pub use scalar::Scalar;
pub use types::{OptionDef, OptionTransition, PrimitiveAction, StateVector, GRID_OPTIONS, NUM_OPTIONS};

pub type Mlp64 = approx::Mlp<f64>;
pub type Mlp32 = approx::Mlp<f32>;
pub type Adam64 = approx::Adam<f64>;
pub type TabularQ64 = tabular::TabularQ<f64>;
pub type TabularQ32 = tabular::TabularQ<f32>;
pub type Transition64 = OptionTransition<f64>;
pub type Dataset64 = data::OptionDataset<f64>;
pub type Cloner64 = agents::BehaviorCloner<f64>;
