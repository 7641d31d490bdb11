//! Exact planning and tabular learning over the enumerable option model.
//!
//! The value-iteration table is the ground truth every function-approximation
//! agent is checked against.

use rand::Rng as _;

use crate::config::EpsilonSchedule;
use crate::error::{Error, Result};
use crate::gridworld::{enumerate_states, execute_option, EnvVariant, GridState, VariantKind};
use crate::returns::{check_gamma, discounted_return, Discounting};
use crate::scalar::Scalar;
use crate::seeding::{SeedStreams, Stream};
use crate::types::{GRID_OPTIONS, NUM_OPTIONS};

/// Dense `(state, option)` action-value table.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularQ<T> {
    values: Vec<T>,
    num_states: usize,
    num_options: usize,
    /// Environment variant the table was computed for, when known.
    pub source: Option<VariantKind>,
}

impl<T: Scalar> TabularQ<T> {
    pub fn zeros(num_states: usize, num_options: usize) -> Self {
        Self {
            values: vec![T::zero(); num_states * num_options],
            num_states,
            num_options,
            source: None,
        }
    }

    pub fn from_values(num_states: usize, num_options: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != num_states * num_options {
            return Err(Error::DimensionMismatch {
                expected: num_states * num_options,
                actual: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("table entry"));
        }
        Ok(Self {
            values,
            num_states,
            num_options,
            source: None,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_options(&self) -> usize {
        self.num_options
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn get(&self, state: usize, option: usize) -> T {
        self.values[state * self.num_options + option]
    }

    #[inline]
    pub fn set(&mut self, state: usize, option: usize, v: T) {
        self.values[state * self.num_options + option] = v;
    }

    pub fn row(&self, state: usize) -> &[T] {
        &self.values[state * self.num_options..(state + 1) * self.num_options]
    }

    /// `max_o Q(state, o)`.
    pub fn state_value(&self, state: usize) -> T {
        self.row(state).iter().cloned().fold(T::neg_infinity(), T::max)
    }

    pub fn greedy(&self, state: usize) -> usize {
        argmax(self.row(state))
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (*a - *b).abs())
            .fold(T::zero(), T::max)
    }
}

/// Index of the largest value, lowest index on ties.
pub fn argmax<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Ids of the best and runner-up options in `state`; ties go to the lower id.
pub fn greedy_and_second_best<T: Scalar>(q: &TabularQ<T>, state: usize) -> (usize, usize) {
    assert!(q.num_options() >= 2, "need at least two options");
    let row = q.row(state);
    let mut ids: Vec<usize> = (0..row.len()).collect();
    ids.sort_by(|&a, &b| {
        row[b]
            .partial_cmp(&row[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    (ids[0], ids[1])
}

/// One deterministic option-level transition of the model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelTransition<T> {
    pub rho: T,
    pub k: u32,
    pub next: usize,
    pub terminal: bool,
}

/// Enumerated deterministic option model: every `(state, option)` outcome,
/// with `rho` already discounted by `gamma`.
#[derive(Debug, Clone)]
pub struct OptionModel<T> {
    pub gamma: T,
    pub num_states: usize,
    pub num_options: usize,
    /// `None` for terminal states.
    transitions: Vec<Option<ModelTransition<T>>>,
    pub source: Option<VariantKind>,
}

impl<T: Scalar> OptionModel<T> {
    pub fn from_variant(variant: &EnvVariant) -> Result<Self> {
        let gamma = T::lit(variant.gamma);
        let states = enumerate_states();
        let mut transitions = Vec::with_capacity(states.len() * NUM_OPTIONS);
        for s in &states {
            for o in &GRID_OPTIONS {
                if s.done {
                    transitions.push(None);
                    continue;
                }
                let out = execute_option(s, o, variant)?;
                let rewards: Vec<T> = out.rewards.iter().map(|r| T::lit(*r)).collect();
                transitions.push(Some(ModelTransition {
                    rho: discounted_return(&rewards, gamma)?,
                    k: out.k,
                    next: out.next_state.index(),
                    terminal: out.terminal,
                }));
            }
        }
        Ok(Self {
            gamma,
            num_states: states.len(),
            num_options: NUM_OPTIONS,
            transitions,
            source: Some(variant.kind),
        })
    }

    /// Same model with every reward multiplied by `c`.
    pub fn scaled(&self, c: T) -> Self {
        let mut m = self.clone();
        for t in m.transitions.iter_mut().flatten() {
            t.rho = t.rho * c;
        }
        m
    }

    pub fn transition(&self, state: usize, option: usize) -> Option<&ModelTransition<T>> {
        self.transitions[state * self.num_options + option].as_ref()
    }

    pub fn is_terminal(&self, state: usize) -> bool {
        self.transition(state, 0).is_none()
    }

    /// `rho + discount * max_o' Q(x', o')` for one pair.
    pub fn backup(&self, q: &TabularQ<T>, state: usize, option: usize, discounting: Discounting) -> T {
        match self.transition(state, option) {
            None => T::zero(),
            Some(t) if t.terminal => t.rho,
            Some(t) => t.rho + discounting.factor(self.gamma, t.k) * q.state_value(t.next),
        }
    }
}

/// Largest violation of the Bellman optimality equation over all pairs.
pub fn bellman_residual<T: Scalar>(
    model: &OptionModel<T>,
    q: &TabularQ<T>,
    discounting: Discounting,
) -> T {
    let mut worst = T::zero();
    for s in 0..model.num_states {
        for o in 0..model.num_options {
            worst = worst.max((model.backup(q, s, o, discounting) - q.get(s, o)).abs());
        }
    }
    worst
}

/// Synchronous value iteration on an enumerated model.
pub fn value_iteration<T: Scalar>(
    model: &OptionModel<T>,
    discounting: Discounting,
    tolerance: T,
    max_sweeps: usize,
) -> Result<TabularQ<T>> {
    check_gamma(model.gamma)?;
    let mut q = TabularQ::zeros(model.num_states, model.num_options);
    q.source = model.source;
    let mut next = q.clone();
    let mut residual = T::infinity();
    for _ in 0..max_sweeps {
        residual = T::zero();
        for s in 0..model.num_states {
            for o in 0..model.num_options {
                let v = model.backup(&q, s, o, discounting);
                residual = residual.max((v - q.get(s, o)).abs());
                next.set(s, o, v);
            }
        }
        std::mem::swap(&mut q, &mut next);
        if residual < tolerance {
            return Ok(q);
        }
    }
    Err(Error::NotConverged {
        sweeps: max_sweeps,
        residual: residual.as_f64(),
    })
}

/// Optimal option-value table of a grid variant.
pub fn smdp_value_iteration<T: Scalar>(
    variant: &EnvVariant,
    tolerance: T,
    max_sweeps: usize,
) -> Result<TabularQ<T>> {
    let model = OptionModel::from_variant(variant)?;
    value_iteration(&model, Discounting::Smdp, tolerance, max_sweeps)
}

/// Episodes are capped at this many options in tabular Q-learning.
pub const Q_LEARNING_EPISODE_CAP: usize = 100;

/// Tabular SMDP Q-learning with epsilon-greedy exploration.
///
/// Episodes start from a uniformly drawn non-terminal state so every pair is
/// visited; the update is `Q <- (1 - alpha) Q + alpha (rho + gamma^k max Q')`.
pub fn smdp_q_learning<T: Scalar>(
    variant: &EnvVariant,
    alpha: T,
    schedule: EpsilonSchedule,
    steps: u64,
    seed: u64,
) -> Result<TabularQ<T>> {
    if !(alpha > T::zero() && alpha <= T::one()) {
        return Err(Error::Config(format!("alpha = {alpha} outside (0, 1]")));
    }
    schedule.validate()?;
    let model = OptionModel::<T>::from_variant(variant)?;
    let starts: Vec<usize> = (0..model.num_states)
        .filter(|&s| !model.is_terminal(s))
        .collect();
    let streams = SeedStreams::new(seed);
    let mut env_rng = streams.rng(Stream::Env);
    let mut explore_rng = streams.rng(Stream::Exploration);

    let mut q = TabularQ::zeros(model.num_states, model.num_options);
    q.source = model.source;
    let mut state = starts[env_rng.gen_range(0..starts.len())];
    let mut episode_len = 0;
    for step in 0..steps {
        let eps = schedule.value(step);
        let option = if explore_rng.gen::<f64>() < eps {
            explore_rng.gen_range(0..model.num_options)
        } else {
            q.greedy(state)
        };
        let t = *model.transition(state, option).expect("non-terminal state");
        let target = model.backup(&q, state, option, Discounting::Smdp);
        let old = q.get(state, option);
        q.set(state, option, (T::one() - alpha) * old + alpha * target);
        episode_len += 1;
        if t.terminal || episode_len >= Q_LEARNING_EPISODE_CAP {
            state = starts[env_rng.gen_range(0..starts.len())];
            episode_len = 0;
        } else {
            state = t.next;
        }
    }
    Ok(q)
}

/// Greedy option for a grid state under a table.
pub fn greedy_option<T: Scalar>(q: &TabularQ<T>, state: &GridState) -> usize {
    q.greedy(state.index())
}
