use std::ops::Deref;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Primitive action of the underlying MDP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PrimitiveAction {
    TurnLeft,
    TurnRight,
    Forward,
    /// Available in the environment but never used as an option head.
    Noop,
}

/// A fixed temporally extended action.
///
/// The option runs its head primitive, then a number of forward steps the
/// environment decides from where the option was initiated. Policy and
/// termination are both deterministic; every option is initiable everywhere
/// in the grid domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct OptionDef {
    pub id: usize,
    pub head: PrimitiveAction,
}

impl OptionDef {
    /// Initiation-set membership. Constant-true for the grid options.
    pub fn initiable<S>(&self, _state: &S) -> bool {
        true
    }
}

/// The grid option set: turn left, turn right, forward, each followed by
/// forward repetition. Ids are contiguous from 0.
pub const GRID_OPTIONS: [OptionDef; 3] = [
    OptionDef {
        id: 0,
        head: PrimitiveAction::TurnLeft,
    },
    OptionDef {
        id: 1,
        head: PrimitiveAction::TurnRight,
    },
    OptionDef {
        id: 2,
        head: PrimitiveAction::Forward,
    },
];

pub const NUM_OPTIONS: usize = GRID_OPTIONS.len();

/// Flattened observation fed to value networks.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector<T>(Vec<T>);

impl<T: Scalar> StateVector<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("state vector entry"));
        }
        Ok(Self(values))
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }
}

impl<T> Deref for StateVector<T> {
    type Target = [T];

    fn deref(&self) -> &[T] {
        &self.0
    }
}

/// Option-level sample `(x, o, rho, x', k, terminal)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OptionTransition<T> {
    pub x: StateVector<T>,
    pub option: usize,
    pub rho: T,
    pub x_next: StateVector<T>,
    /// Duration in primitive steps, at least 1.
    pub k: u32,
    pub terminal: bool,
}

impl<T: Scalar> OptionTransition<T> {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::ZeroDuration);
        }
        if !self.rho.is_finite() {
            return Err(Error::NonFinite("rho"));
        }
        if self.x.len() != self.x_next.len() {
            return Err(Error::DimensionMismatch {
                expected: self.x.len(),
                actual: self.x_next.len(),
            });
        }
        Ok(())
    }

    /// Whether `rho` is consistent with per-step rewards in `[r_min, r_max]`.
    pub fn rho_within(&self, gamma: T, r_min: T, r_max: T) -> bool {
        let horizon = if gamma < T::one() {
            (T::one() - gamma.powu(self.k)) / (T::one() - gamma)
        } else {
            T::lit(f64::from(self.k))
        };
        let eps = T::lit(1e-9);
        self.rho >= r_min * horizon - eps && self.rho <= r_max * horizon + eps
    }
}
