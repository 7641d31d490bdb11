//! Deterministic 8x8 grid (6x6 interior) where the agent can only act
//! through options of location-dependent duration.
//!
//! Coordinates are interior coordinates: `row`, `col` in `0..6`, row 0 at the
//! top. The default start is the top-left interior cell facing right, the
//! goal is the bottom-right interior cell. Entering any cell of interior row
//! 2 outside the rightmost column costs the variant's crossing penalty.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::types::{OptionDef, PrimitiveAction, StateVector};

pub const GRID_SIZE: usize = 6;
pub const GOAL: (usize, usize) = (GRID_SIZE - 1, GRID_SIZE - 1);
pub const GOAL_REWARD: f64 = 10.0;
/// Interior row whose entry is penalized.
pub const PENALTY_ROW: usize = 2;
pub const NUM_ORIENTATIONS: usize = 4;
pub const NUM_STATES: usize = GRID_SIZE * GRID_SIZE * NUM_ORIENTATIONS;
pub const ENCODING_LEN: usize = 3 * GRID_SIZE * GRID_SIZE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Orientation {
    Right,
    Down,
    Left,
    Up,
}

impl Orientation {
    pub const ALL: [Orientation; 4] = [
        Orientation::Right,
        Orientation::Down,
        Orientation::Left,
        Orientation::Up,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    fn turn_left(self) -> Self {
        Self::ALL[(self.index() + 3) % 4]
    }

    fn turn_right(self) -> Self {
        Self::ALL[(self.index() + 1) % 4]
    }

    fn delta(self) -> (isize, isize) {
        match self {
            Orientation::Right => (0, 1),
            Orientation::Down => (1, 0),
            Orientation::Left => (0, -1),
            Orientation::Up => (-1, 0),
        }
    }

    fn glyph(self) -> char {
        match self {
            Orientation::Right => '>',
            Orientation::Down => 'v',
            Orientation::Left => '<',
            Orientation::Up => '^',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridState {
    pub row: usize,
    pub col: usize,
    pub orientation: Orientation,
    pub done: bool,
}

impl GridState {
    pub fn new(row: usize, col: usize, orientation: Orientation) -> Self {
        Self {
            row,
            col,
            orientation,
            done: (row, col) == GOAL,
        }
    }

    pub fn default_start() -> Self {
        Self::new(0, 0, Orientation::Right)
    }

    pub fn is_goal_cell(&self) -> bool {
        (self.row, self.col) == GOAL
    }

    /// Dense index in `0..NUM_STATES`.
    pub fn index(&self) -> usize {
        (self.row * GRID_SIZE + self.col) * NUM_ORIENTATIONS + self.orientation.index()
    }

    pub fn from_index(i: usize) -> Option<Self> {
        if i >= NUM_STATES {
            return None;
        }
        let orientation = Orientation::from_index(i % NUM_ORIENTATIONS)?;
        let cell = i / NUM_ORIENTATIONS;
        Some(Self::new(cell / GRID_SIZE, cell % GRID_SIZE, orientation))
    }

    fn validate(&self) -> Result<()> {
        if self.row >= GRID_SIZE || self.col >= GRID_SIZE {
            return Err(Error::IllegalState(format!(
                "({}, {}) is outside the interior",
                self.row, self.col
            )));
        }
        if self.done != self.is_goal_cell() {
            return Err(Error::IllegalState(format!(
                "done flag {} inconsistent with cell ({}, {})",
                self.done, self.row, self.col
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VariantKind {
    Online,
    Offline,
}

impl VariantKind {
    pub fn name(self) -> &'static str {
        match self {
            VariantKind::Online => "online",
            VariantKind::Offline => "offline",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "online" => Some(VariantKind::Online),
            "offline" => Some(VariantKind::Offline),
            _ => None,
        }
    }

    pub fn variant(self) -> EnvVariant {
        match self {
            VariantKind::Online => EnvVariant::online(),
            VariantKind::Offline => EnvVariant::offline(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StepSizeRule {
    /// 4 in the leftmost column facing down, 1 in the top row, 2 elsewhere.
    ThreeTier,
    /// 4 in the leftmost column facing down, 2 elsewhere.
    TwoTier,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvVariant {
    pub kind: VariantKind,
    pub crossing_penalty: f64,
    pub gamma: f64,
    pub step_rule: StepSizeRule,
}

impl EnvVariant {
    pub fn online() -> Self {
        Self {
            kind: VariantKind::Online,
            crossing_penalty: -1.0,
            gamma: 0.9,
            step_rule: StepSizeRule::ThreeTier,
        }
    }

    pub fn offline() -> Self {
        Self {
            kind: VariantKind::Offline,
            crossing_penalty: -3.0,
            gamma: 0.95,
            step_rule: StepSizeRule::TwoTier,
        }
    }

    /// Smallest and largest discounted return any policy can realize.
    pub fn return_bounds(&self) -> (f64, f64) {
        (self.crossing_penalty.min(0.0) / (1.0 - self.gamma), GOAL_REWARD)
    }

    pub fn reward_bounds(&self) -> (f64, f64) {
        (self.crossing_penalty.min(0.0), GOAL_REWARD)
    }
}

/// Result of running one option to termination.
#[derive(Debug, Clone, PartialEq)]
pub struct OptionOutcome {
    /// One reward per executed primitive step.
    pub rewards: Vec<f64>,
    pub next_state: GridState,
    pub k: u32,
    pub terminal: bool,
}

/// Number of forward repetitions an option initiated in `state` performs.
pub fn step_size(state: &GridState, variant: &EnvVariant) -> u32 {
    if state.col == 0 && state.orientation == Orientation::Down {
        return 4;
    }
    match variant.step_rule {
        StepSizeRule::ThreeTier if state.row == 0 => 1,
        _ => 2,
    }
}

/// Applies one primitive. Returns the reward and whether the goal was entered.
fn primitive(state: &mut GridState, action: PrimitiveAction, variant: &EnvVariant) -> (f64, bool) {
    match action {
        PrimitiveAction::TurnLeft => state.orientation = state.orientation.turn_left(),
        PrimitiveAction::TurnRight => state.orientation = state.orientation.turn_right(),
        PrimitiveAction::Noop => {}
        PrimitiveAction::Forward => {
            let (dr, dc) = state.orientation.delta();
            let r = state.row as isize + dr;
            let c = state.col as isize + dc;
            let n = GRID_SIZE as isize;
            if (0..n).contains(&r) && (0..n).contains(&c) {
                state.row = r as usize;
                state.col = c as usize;
                if state.is_goal_cell() {
                    state.done = true;
                    return (GOAL_REWARD, true);
                }
                if state.row == PENALTY_ROW && state.col != GRID_SIZE - 1 {
                    return (variant.crossing_penalty, false);
                }
            }
        }
    }
    (0.0, false)
}

/// Runs `option` from `state`: its head primitive, then `step_size(state)`
/// forwards. Stops early when the goal is entered.
pub fn execute_option(
    state: &GridState,
    option: &OptionDef,
    variant: &EnvVariant,
) -> Result<OptionOutcome> {
    state.validate()?;
    if state.done {
        return Err(Error::EpisodeDone);
    }
    let repeats = step_size(state, variant);
    let mut s = *state;
    let mut rewards = Vec::with_capacity(1 + repeats as usize);
    let plan = std::iter::once(option.head)
        .chain(std::iter::repeat(PrimitiveAction::Forward).take(repeats as usize));
    for action in plan {
        let (r, entered_goal) = primitive(&mut s, action, variant);
        rewards.push(r);
        if entered_goal {
            break;
        }
    }
    Ok(OptionOutcome {
        k: rewards.len() as u32,
        rewards,
        next_state: s,
        terminal: s.done,
    })
}

/// Every (cell, orientation) pair of the interior, goal-cell states included
/// (those are the terminal states), in index order.
pub fn enumerate_states() -> Vec<GridState> {
    (0..NUM_STATES)
        .map(|i| GridState::from_index(i).expect("index in range"))
        .collect()
}

/// One-hot encoding: agent cell, goal cell, orientation, each in a 36-slot
/// block.
pub fn encode<T: Scalar>(state: &GridState) -> StateVector<T> {
    let cells = GRID_SIZE * GRID_SIZE;
    let mut v = vec![T::zero(); ENCODING_LEN];
    v[state.row * GRID_SIZE + state.col] = T::one();
    v[cells + GOAL.0 * GRID_SIZE + GOAL.1] = T::one();
    v[2 * cells + state.orientation.index()] = T::one();
    StateVector::new(v).expect("one-hot entries are finite")
}

pub fn decode<T: Scalar>(v: &[T]) -> Result<GridState> {
    if v.len() != ENCODING_LEN {
        return Err(Error::DimensionMismatch {
            expected: ENCODING_LEN,
            actual: v.len(),
        });
    }
    let cells = GRID_SIZE * GRID_SIZE;
    let hot = |block: &[T]| -> Result<usize> {
        let mut ones = block.iter().enumerate().filter(|(_, x)| **x != T::zero());
        match (ones.next(), ones.next()) {
            (Some((i, x)), None) if *x == T::one() => Ok(i),
            _ => Err(Error::IllegalState("not a one-hot block".into())),
        }
    };
    let cell = hot(&v[..cells])?;
    let orientation = Orientation::from_index(hot(&v[2 * cells..])?)
        .ok_or_else(|| Error::IllegalState("orientation slot out of range".into()))?;
    Ok(GridState::new(cell / GRID_SIZE, cell % GRID_SIZE, orientation))
}

/// ASCII picture of the grid, walls included.
pub fn render(state: &GridState) -> String {
    let mut out = String::new();
    let n = GRID_SIZE + 2;
    for r in 0..n {
        for c in 0..n {
            let ch = if r == 0 || c == 0 || r == n - 1 || c == n - 1 {
                '#'
            } else if (r - 1, c - 1) == (state.row, state.col) {
                state.orientation.glyph()
            } else if (r - 1, c - 1) == GOAL {
                'G'
            } else if r - 1 == PENALTY_ROW && c - 1 != GRID_SIZE - 1 {
                '~'
            } else {
                '.'
            };
            out.push(ch);
        }
        let _ = writeln!(out);
    }
    out
}

/// One episode of the grid world. Holds mutable episode state; one instance
/// per worker.
#[derive(Debug, Clone)]
pub struct GridWorld {
    variant: EnvVariant,
    state: GridState,
    seed: u64,
}

impl GridWorld {
    pub fn new(variant: EnvVariant) -> Self {
        Self {
            variant,
            state: GridState::default_start(),
            seed: 0,
        }
    }

    pub fn variant(&self) -> &EnvVariant {
        &self.variant
    }

    pub fn state(&self) -> GridState {
        self.state
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Starts a new episode at `start`, or at the default start. The
    /// dynamics are deterministic, so the seed is only recorded.
    pub fn reset(&mut self, start: Option<GridState>, seed: u64) -> Result<GridState> {
        let s = start.unwrap_or_else(GridState::default_start);
        s.validate()?;
        if s.is_goal_cell() {
            return Err(Error::IllegalState("cannot start on the goal".into()));
        }
        self.state = s;
        self.seed = seed;
        Ok(s)
    }

    pub fn step(&mut self, option: &OptionDef) -> Result<OptionOutcome> {
        let outcome = execute_option(&self.state, option, &self.variant)?;
        self.state = outcome.next_state;
        Ok(outcome)
    }
}

/// Summary of one option-level episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub undiscounted_return: f64,
    /// `sum_t gamma^t r_t` over primitive steps.
    pub discounted_return: f64,
    pub options: usize,
    pub primitive_steps: usize,
    pub penalties: usize,
    pub reached_goal: bool,
    pub path: Vec<(usize, GridState)>,
}

/// Runs `policy` from `start` until the goal or `max_options` options.
pub fn rollout<F>(variant: &EnvVariant, start: GridState, max_options: usize, mut policy: F) -> Result<Episode>
where
    F: FnMut(&GridState) -> Result<usize>,
{
    let mut env = GridWorld::new(*variant);
    let mut state = env.reset(Some(start), 0)?;
    let mut ep = Episode {
        undiscounted_return: 0.0,
        discounted_return: 0.0,
        options: 0,
        primitive_steps: 0,
        penalties: 0,
        reached_goal: false,
        path: Vec::new(),
    };
    let mut weight = 1.0;
    while ep.options < max_options {
        let id = policy(&state)?;
        let option = crate::types::GRID_OPTIONS
            .get(id)
            .ok_or(Error::UnknownOption(id))?;
        let out = env.step(option)?;
        for r in &out.rewards {
            ep.undiscounted_return += r;
            ep.discounted_return += weight * r;
            weight *= variant.gamma;
            if *r < 0.0 {
                ep.penalties += 1;
            }
        }
        ep.primitive_steps += out.rewards.len();
        ep.options += 1;
        state = out.next_state;
        ep.path.push((id, state));
        if out.terminal {
            ep.reached_goal = true;
            break;
        }
    }
    Ok(ep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::GRID_OPTIONS;

    const LEFT: OptionDef = GRID_OPTIONS[0];
    const RIGHT: OptionDef = GRID_OPTIONS[1];
    const FORWARD: OptionDef = GRID_OPTIONS[2];

    #[test]
    fn reset_examples() {
        let mut env = GridWorld::new(EnvVariant::online());
        let s = env.reset(None, 7).unwrap();
        assert_eq!(s, GridState::new(0, 0, Orientation::Right));
        assert!(!s.done);
        let explicit = GridState::new(3, 2, Orientation::Up);
        assert_eq!(env.reset(Some(explicit), 0).unwrap(), explicit);
        assert!(env.reset(Some(GridState::new(5, 5, Orientation::Up)), 0).is_err());
        let wall = GridState {
            row: 6,
            col: 0,
            orientation: Orientation::Up,
            done: false,
        };
        assert!(env.reset(Some(wall), 0).is_err());
    }

    #[test]
    fn step_size_examples() {
        let on = EnvVariant::online();
        let off = EnvVariant::offline();
        assert_eq!(step_size(&GridState::new(0, 3, Orientation::Right), &on), 1);
        assert_eq!(step_size(&GridState::new(3, 0, Orientation::Down), &on), 4);
        assert_eq!(step_size(&GridState::new(3, 3, Orientation::Left), &on), 2);
        // facing-down rule wins over the top-row rule
        assert_eq!(step_size(&GridState::new(0, 0, Orientation::Down), &on), 4);
        assert_eq!(step_size(&GridState::new(0, 3, Orientation::Right), &off), 2);
        assert_eq!(step_size(&GridState::new(1, 0, Orientation::Down), &off), 4);
    }

    #[test]
    fn goal_entry_truncates() {
        let s = GridState::new(5, 4, Orientation::Right);
        let out = execute_option(&s, &FORWARD, &EnvVariant::online()).unwrap();
        assert_eq!(out.rewards, vec![10.0]);
        assert_eq!(out.k, 1);
        assert!(out.terminal);
        assert!(out.next_state.done);
    }

    #[test]
    fn crossing_third_row_is_penalized() {
        let s = GridState::new(1, 2, Orientation::Down);
        for variant in [EnvVariant::online(), EnvVariant::offline()] {
            let out = execute_option(&s, &FORWARD, &variant).unwrap();
            assert_eq!(out.rewards[0], variant.crossing_penalty);
            assert_eq!(out.k, 3);
            assert_eq!(out.next_state.row, 4);
        }
        // no penalty in the rightmost column
        let s = GridState::new(1, 5, Orientation::Down);
        let out = execute_option(&s, &FORWARD, &EnvVariant::online()).unwrap();
        assert!(out.rewards.iter().all(|r| *r == 0.0));
    }

    #[test]
    fn walls_block_movement_but_count_steps() {
        let s = GridState::new(0, 4, Orientation::Right);
        let out = execute_option(&s, &FORWARD, &EnvVariant::online()).unwrap();
        assert_eq!(out.k, 2);
        assert_eq!((out.next_state.row, out.next_state.col), (0, 5));
        let s = GridState::new(0, 0, Orientation::Right);
        let out = execute_option(&s, &LEFT, &EnvVariant::online()).unwrap();
        assert_eq!(out.next_state, GridState::new(0, 0, Orientation::Up));
        assert_eq!(out.k, 2);
    }

    #[test]
    fn step_size_frozen_at_initiation() {
        // top row facing right: one repeat even though the head turns down
        let s = GridState::new(0, 0, Orientation::Right);
        let out = execute_option(&s, &RIGHT, &EnvVariant::online()).unwrap();
        assert_eq!(out.next_state, GridState::new(1, 0, Orientation::Down));
        assert_eq!(out.k, 2);
    }

    #[test]
    fn executing_from_done_state_fails() {
        let s = GridState::new(5, 5, Orientation::Down);
        assert_eq!(
            execute_option(&s, &FORWARD, &EnvVariant::online()),
            Err(Error::EpisodeDone)
        );
    }

    #[test]
    fn outcome_invariants_hold_everywhere() {
        for variant in [EnvVariant::online(), EnvVariant::offline()] {
            for s in enumerate_states().into_iter().filter(|s| !s.done) {
                for o in &GRID_OPTIONS {
                    let a = execute_option(&s, o, &variant).unwrap();
                    let b = execute_option(&s, o, &variant).unwrap();
                    assert_eq!(a, b);
                    assert!((1..=5).contains(&a.k));
                    assert_eq!(a.rewards.len(), a.k as usize);
                    assert!(a.next_state.row < GRID_SIZE && a.next_state.col < GRID_SIZE);
                    if a.terminal {
                        assert_eq!(*a.rewards.last().unwrap(), GOAL_REWARD);
                    }
                    assert_eq!(a.terminal, a.next_state.done);
                }
            }
        }
    }

    #[test]
    fn enumeration() {
        let states = enumerate_states();
        assert_eq!(states.len(), 144);
        assert_eq!(states.iter().filter(|s| s.done).count(), 4);
        assert!(states.contains(&GridState::default_start()));
        for (i, s) in states.iter().enumerate() {
            assert_eq!(s.index(), i);
            assert!(s.row < GRID_SIZE && s.col < GRID_SIZE);
        }
    }

    #[test]
    fn encoding_is_injective_binary_and_decodable() {
        let states = enumerate_states();
        let codes: Vec<StateVector<f64>> = states.iter().map(encode).collect();
        for (s, v) in states.iter().zip(&codes) {
            assert_eq!(v.len(), 108);
            assert!(v.iter().all(|x| *x == 0.0 || *x == 1.0));
            assert_eq!(decode(v).unwrap(), *s);
        }
        for i in 0..codes.len() {
            for j in i + 1..codes.len() {
                assert_ne!(codes[i], codes[j]);
            }
        }
        let a: StateVector<f64> = encode(&GridState::default_start());
        let b: StateVector<f64> = encode(&GridState::default_start());
        assert_eq!(a, b);
    }

    #[test]
    fn render_marks_agent_and_goal() {
        let pic = render(&GridState::default_start());
        let lines: Vec<&str> = pic.lines().collect();
        assert_eq!(lines.len(), 8);
        assert_eq!(lines[1], "#>.....#");
        assert_eq!(lines[3], "#~~~~~.#");
        assert_eq!(lines[6], "#.....G#");
    }
}
