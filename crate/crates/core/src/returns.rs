//! Option-level return and bootstrap-target arithmetic.
//!
//! This is where SMDP and MDP learners differ: an option that ran for `k`
//! primitive steps bootstraps with `gamma^k` in the SMDP form and with
//! `gamma^1` in the MDP baseline form. Both consume the same discounted
//! intra-option return `rho`.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Closed interval the bootstrap term is clamped to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipBounds<T> {
    pub min: T,
    pub max: T,
}

impl<T: Scalar> ClipBounds<T> {
    pub fn new(min: T, max: T) -> Result<Self> {
        if !min.is_finite() || !max.is_finite() {
            return Err(Error::NonFinite("clip bounds"));
        }
        if min > max {
            return Err(Error::InvalidBounds {
                low: min.as_f64(),
                high: max.as_f64(),
            });
        }
        Ok(Self { min, max })
    }

    #[inline]
    pub fn apply(&self, v: T) -> T {
        v.max(self.min).min(self.max)
    }

    /// Largest magnitude a clipped bootstrap term can take.
    pub fn magnitude(&self) -> T {
        self.min.abs().max(self.max.abs())
    }
}

/// How the bootstrap term of a transition is discounted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Discounting {
    /// `gamma^k`: the option lasted `k` primitive steps.
    Smdp,
    /// `gamma^1`: option transitions treated as primitive ones.
    Mdp,
}

impl Discounting {
    #[inline]
    pub fn factor<T: Scalar>(self, gamma: T, k: u32) -> T {
        match self {
            Discounting::Smdp => gamma.powu(k),
            Discounting::Mdp => gamma,
        }
    }
}

pub(crate) fn check_gamma<T: Scalar>(gamma: T) -> Result<()> {
    if !(gamma > T::zero() && gamma <= T::one()) {
        return Err(Error::InvalidGamma(gamma.as_f64()));
    }
    Ok(())
}

/// `sum_j gamma^j * rewards[j]`, where `rewards[0]` is the reward observed one
/// primitive step after the option was initiated.
pub fn discounted_return<T: Scalar>(rewards: &[T], gamma: T) -> Result<T> {
    if rewards.is_empty() {
        return Err(Error::EmptyRewards);
    }
    check_gamma(gamma)?;
    let mut acc = T::zero();
    let mut weight = T::one();
    for &r in rewards {
        acc = acc + weight * r;
        weight = weight * gamma;
    }
    Ok(acc)
}

/// `rho + discount * clip(next_value)`, or `rho` alone for terminal transitions.
///
/// Shared tail of every target rule; `next_value` is whatever the algorithm
/// bootstraps from (a max, or a double-estimator evaluation).
pub fn bootstrap_target<T: Scalar>(
    rho: T,
    discount: T,
    terminal: bool,
    next_value: T,
    clip: Option<ClipBounds<T>>,
) -> Result<T> {
    if !rho.is_finite() {
        return Err(Error::NonFinite("rho"));
    }
    if terminal {
        return Ok(rho);
    }
    if !next_value.is_finite() {
        return Err(Error::NonFinite("next-state value"));
    }
    let bootstrap = match clip {
        Some(c) => c.apply(next_value),
        None => next_value,
    };
    Ok(rho + discount * bootstrap)
}

fn max_finite<T: Scalar>(values: &[T]) -> Result<T> {
    let mut it = values.iter();
    let first = *it.next().ok_or(Error::EmptyNextValues)?;
    let mut best = first;
    for &v in values {
        if !v.is_finite() {
            return Err(Error::NonFinite("next-state value"));
        }
        if v > best {
            best = v;
        }
    }
    Ok(best)
}

fn target_with<T: Scalar>(
    discounting: Discounting,
    rho: T,
    k: u32,
    terminal: bool,
    next_values: &[T],
    gamma: T,
    clip: Option<ClipBounds<T>>,
) -> Result<T> {
    check_gamma(gamma)?;
    if k == 0 {
        return Err(Error::ZeroDuration);
    }
    if terminal {
        return bootstrap_target(rho, T::zero(), true, T::zero(), clip);
    }
    let next = max_finite(next_values)?;
    bootstrap_target(rho, discounting.factor(gamma, k), false, next, clip)
}

/// SMDP bootstrap target `rho + gamma^k * clip(max next_values)`.
pub fn smdp_target<T: Scalar>(
    rho: T,
    k: u32,
    terminal: bool,
    next_values: &[T],
    gamma: T,
    clip: Option<ClipBounds<T>>,
) -> Result<T> {
    target_with(Discounting::Smdp, rho, k, terminal, next_values, gamma, clip)
}

/// MDP baseline target: same as [`smdp_target`] with the exponent pinned to 1.
pub fn mdp_baseline_target<T: Scalar>(
    rho: T,
    terminal: bool,
    next_values: &[T],
    gamma: T,
    clip: Option<ClipBounds<T>>,
) -> Result<T> {
    target_with(Discounting::Mdp, rho, 1, terminal, next_values, gamma, clip)
}

/// Discounted return of an option whose reward is only observable through a
/// sparsely sampled signal.
///
/// The signal is linearly interpolated at `k` points between the two
/// observations (the start observation excluded, the end observation
/// included); each point earns 1 if it lies in `[low, high]` and 0 otherwise.
pub fn interpolated_option_return<T: Scalar>(
    signal_start: T,
    signal_end: T,
    k: u32,
    bounds: (T, T),
    gamma: T,
) -> Result<T> {
    if k == 0 {
        return Err(Error::ZeroDuration);
    }
    let (low, high) = bounds;
    if !(low < high) {
        return Err(Error::InvalidBounds {
            low: low.as_f64(),
            high: high.as_f64(),
        });
    }
    if !signal_start.is_finite() || !signal_end.is_finite() {
        return Err(Error::NonFinite("signal"));
    }
    let span = signal_end - signal_start;
    let kf = T::lit(f64::from(k));
    let rewards: Vec<T> = (1..=k)
        .map(|j| {
            let s = signal_start + (T::lit(f64::from(j)) / kf) * span;
            if s >= low && s <= high {
                T::one()
            } else {
                T::zero()
            }
        })
        .collect();
    discounted_return(&rewards, gamma)
}
