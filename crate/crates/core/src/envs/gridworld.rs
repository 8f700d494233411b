//! Windy-cliff gridworld.
//!
//! Two rows by five columns. Row 0 is the ledge next to the cliff, row 1 the
//! safe row. The agent starts at (0, 0) and the goal is (0, 4). Every move
//! costs -1 and entering the goal adds +10. After any move that lands on a
//! ledge interior tile (row 0, columns 1-3) the wind knocks the agent off the
//! cliff with probability `wind_probability`, ending the episode with no
//! extra penalty.
//!
//! ```text
//!   col:  0   1   2   3   4
//! row 0:  S   w   w   w   G     (cliff above row 0)
//! row 1:  .   .   .   .   .
//! ```

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{EnvStep, Environment};
use crate::{Error, Result, Rng};

pub const ROWS: usize = 2;
pub const COLS: usize = 5;
pub const N_CELLS: usize = ROWS * COLS;
pub const N_ACTIONS: usize = 4;
pub const START: GridState = GridState { row: 0, col: 0 };
pub const GOAL: GridState = GridState { row: 0, col: 4 };
pub const STEP_REWARD: f64 = -1.0;
pub const GOAL_REWARD: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridState {
    pub row: usize,
    pub col: usize,
}

impl GridState {
    pub fn index(self) -> usize {
        self.row * COLS + self.col
    }

    /// One-hot encoding over the ten cells.
    pub fn one_hot(self) -> Vec<f64> {
        let mut v = vec![0.0; N_CELLS];
        v[self.index()] = 1.0;
        v
    }

    pub fn is_windy(self) -> bool {
        self.row == 0 && (1..=3).contains(&self.col)
    }

    pub fn is_goal(self) -> bool {
        self == GOAL
    }

    fn in_bounds(self) -> bool {
        self.row < ROWS && self.col < COLS
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
}

impl Action {
    pub const ALL: [Action; N_ACTIONS] = [Action::Up, Action::Down, Action::Left, Action::Right];

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL
            .get(i)
            .copied()
            .ok_or_else(|| Error::Contract(format!("action index {i} out of range")))
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalCause {
    #[default]
    None,
    Goal,
    Fell,
}

impl TerminalCause {
    pub fn as_str(self) -> &'static str {
        match self {
            TerminalCause::None => "none",
            TerminalCause::Goal => "goal",
            TerminalCause::Fell => "fell",
        }
    }
}

/// Outcome of one gridworld transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    /// `None` once the episode has ended.
    pub next_state: Option<GridState>,
    pub reward: f64,
    pub terminal: bool,
    pub cause: TerminalCause,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub wind_probability: f64,
    /// Maximum steps per episode before truncation.
    pub step_cap: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            wind_probability: 0.05,
            step_cap: 100,
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.wind_probability) {
            return Err(Error::Config(format!(
                "wind_probability {} outside [0, 1]",
                self.wind_probability
            )));
        }
        if self.step_cap == 0 {
            return Err(Error::Config("step_cap must be positive".into()));
        }
        Ok(())
    }
}

/// Start cell; the start is fixed, so no randomness is consumed.
pub fn grid_reset() -> GridState {
    START
}

fn moved(state: GridState, action: Action) -> GridState {
    let (mut row, mut col) = (state.row, state.col);
    match action {
        Action::Up => row = row.saturating_sub(1),
        Action::Down => row = (row + 1).min(ROWS - 1),
        Action::Left => col = col.saturating_sub(1),
        Action::Right => col = (col + 1).min(COLS - 1),
    }
    GridState { row, col }
}

fn check_live(state: GridState) -> Result<()> {
    if !state.in_bounds() {
        return Err(Error::Contract(format!("cell {state:?} outside the grid")));
    }
    if state.is_goal() {
        return Err(Error::Contract("cannot step from the terminal goal cell".into()));
    }
    Ok(())
}

/// Samples one transition.
pub fn grid_step(
    state: GridState,
    action: Action,
    wind_probability: f64,
    rng: &mut Rng,
) -> Result<StepResult> {
    check_live(state)?;
    let next = moved(state, action);
    if next.is_goal() {
        return Ok(StepResult {
            next_state: None,
            reward: STEP_REWARD + GOAL_REWARD,
            terminal: true,
            cause: TerminalCause::Goal,
        });
    }
    if next.is_windy() && rng.random::<f64>() < wind_probability {
        return Ok(StepResult {
            next_state: None,
            reward: STEP_REWARD,
            terminal: true,
            cause: TerminalCause::Fell,
        });
    }
    Ok(StepResult {
        next_state: Some(next),
        reward: STEP_REWARD,
        terminal: false,
        cause: TerminalCause::None,
    })
}

/// Every possible outcome of a transition with its probability.
pub fn transition_outcomes(
    state: GridState,
    action: Action,
    wind_probability: f64,
) -> Result<Vec<(f64, StepResult)>> {
    check_live(state)?;
    let next = moved(state, action);
    let survive = StepResult {
        next_state: Some(next),
        reward: STEP_REWARD,
        terminal: false,
        cause: TerminalCause::None,
    };
    Ok(if next.is_goal() {
        vec![(
            1.0,
            StepResult {
                next_state: None,
                reward: STEP_REWARD + GOAL_REWARD,
                terminal: true,
                cause: TerminalCause::Goal,
            },
        )]
    } else if next.is_windy() {
        vec![
            (
                wind_probability,
                StepResult {
                    next_state: None,
                    reward: STEP_REWARD,
                    terminal: true,
                    cause: TerminalCause::Fell,
                },
            ),
            (1.0 - wind_probability, survive),
        ]
    } else {
        vec![(1.0, survive)]
    })
}

/// Detour through the safe row: down, right x4, up.
pub fn safe_policy(s: GridState) -> Action {
    match (s.row, s.col) {
        (0, _) => Action::Down,
        (1, 4) => Action::Up,
        _ => Action::Right,
    }
}

/// Straight along the ledge.
pub fn risky_policy(s: GridState) -> Action {
    match s.row {
        0 => Action::Right,
        _ => Action::Up,
    }
}

/// Exact undiscounted expected return of a deterministic policy from the
/// start cell, by recursion over [`transition_outcomes`]. Paths longer than
/// `horizon` contribute their accumulated reward only.
pub fn exact_policy_return(
    policy: impl Fn(GridState) -> Action + Copy,
    wind_probability: f64,
    horizon: usize,
) -> Result<f64> {
    fn value(
        s: GridState,
        depth: usize,
        policy: &dyn Fn(GridState) -> Action,
        p: f64,
    ) -> Result<f64> {
        if depth == 0 {
            return Ok(0.0);
        }
        let mut v = 0.0;
        for (prob, out) in transition_outcomes(s, policy(s), p)? {
            let cont = match out.next_state {
                Some(n) if !out.terminal => value(n, depth - 1, policy, p)?,
                _ => 0.0,
            };
            v += prob * (out.reward + cont);
        }
        Ok(v)
    }
    value(grid_reset(), horizon, &policy, wind_probability)
}

/// `(safe return, risky expected return)` with the default wind.
pub fn grid_exact_returns() -> (f64, f64) {
    let p = GridConfig::default().wind_probability;
    let safe = exact_policy_return(safe_policy, p, 64).expect("static layout");
    let risky = exact_policy_return(risky_policy, p, 64).expect("static layout");
    (safe, risky)
}

/// Stateful wrapper implementing [`Environment`].
#[derive(Debug, Clone)]
pub struct WindyCliff {
    config: GridConfig,
    state: Option<GridState>,
    steps: usize,
}

impl WindyCliff {
    pub fn new(config: GridConfig) -> Result<Self> {
        config.validate()?;
        Ok(WindyCliff {
            config,
            state: None,
            steps: 0,
        })
    }

    pub fn state(&self) -> Option<GridState> {
        self.state
    }

    pub fn config(&self) -> &GridConfig {
        &self.config
    }
}

impl Environment for WindyCliff {
    fn n_actions(&self) -> usize {
        N_ACTIONS
    }

    fn observation_dim(&self) -> usize {
        N_CELLS
    }

    fn reset(&mut self) -> Vec<f64> {
        let s = grid_reset();
        self.state = Some(s);
        self.steps = 0;
        s.one_hot()
    }

    fn step(&mut self, action: usize, rng: &mut Rng) -> Result<EnvStep> {
        let state = self
            .state
            .ok_or_else(|| Error::Contract("step called on a finished episode".into()))?;
        let res = grid_step(state, Action::from_index(action)?, self.config.wind_probability, rng)?;
        self.steps += 1;
        self.state = res.next_state;
        let truncated = !res.terminal && self.steps >= self.config.step_cap;
        if truncated {
            self.state = None;
        }
        Ok(EnvStep {
            observation: res
                .next_state
                .map_or_else(|| vec![0.0; N_CELLS], GridState::one_hot),
            reward: res.reward,
            terminal: res.terminal,
            truncated,
            cause: res.cause,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;

    #[test]
    fn reset_is_fixed_start() {
        assert_eq!(grid_reset(), GridState { row: 0, col: 0 });
        assert_eq!(grid_reset().one_hot().iter().position(|&v| v == 1.0), Some(0));
        let mut a = WindyCliff::new(GridConfig::default()).unwrap();
        assert_eq!(a.reset(), a.reset());
    }

    #[test]
    fn one_hot_has_single_entry() {
        for row in 0..ROWS {
            for col in 0..COLS {
                let v = GridState { row, col }.one_hot();
                assert_eq!(v.iter().sum::<f64>(), 1.0);
                assert_eq!(v[row * COLS + col], 1.0);
            }
        }
    }

    #[test]
    fn entering_goal_pays_nine() {
        let mut rng = seeded_rng(0);
        let r = grid_step(GridState { row: 0, col: 3 }, Action::Right, 0.05, &mut rng).unwrap();
        assert_eq!(r.reward, 9.0);
        assert!(r.terminal);
        assert_eq!(r.cause, TerminalCause::Goal);
        assert_eq!(r.next_state, None);
    }

    #[test]
    fn walls_clip_movement() {
        let mut rng = seeded_rng(0);
        let r = grid_step(GridState { row: 1, col: 0 }, Action::Left, 0.05, &mut rng).unwrap();
        assert_eq!(r.next_state, Some(GridState { row: 1, col: 0 }));
        assert_eq!(r.reward, -1.0);
        assert!(!r.terminal);
        assert_eq!(r.cause, TerminalCause::None);
        let r = grid_step(GridState { row: 1, col: 2 }, Action::Down, 0.05, &mut rng).unwrap();
        assert_eq!(r.next_state, Some(GridState { row: 1, col: 2 }));
    }

    #[test]
    fn stepping_goal_or_finished_episode_is_rejected() {
        let mut rng = seeded_rng(0);
        assert!(matches!(
            grid_step(GOAL, Action::Left, 0.05, &mut rng),
            Err(Error::Contract(_))
        ));
        let mut env = WindyCliff::new(GridConfig::default()).unwrap();
        assert!(env.step(0, &mut rng).is_err());
        env.reset();
        assert!(env.step(7, &mut rng).is_err());
    }

    #[test]
    fn exact_returns_match_layout() {
        let (safe, risky) = grid_exact_returns();
        assert_eq!(safe, 4.0);
        // -0.05 - 2*0.95*0.05 - 3*0.95^2*0.05 + 6*0.95^3
        let by_hand = -0.05 - 2.0 * 0.95 * 0.05 - 3.0 * 0.95f64.powi(2) * 0.05 + 6.0 * 0.95f64.powi(3);
        assert!((risky - by_hand).abs() < 1e-12);
        assert!((4.7..=4.9).contains(&risky));
        assert!(risky > safe);
    }

    #[test]
    fn no_falls_on_safe_row() {
        let mut rng = seeded_rng(1);
        let mut falls = 0;
        for i in 0..1_000_000usize {
            let s = GridState { row: 1, col: i % COLS };
            let a = Action::ALL[i % 3]; // up is excluded: it would leave the row
            let a = if a == Action::Up { Action::Left } else { a };
            if grid_step(s, a, 0.05, &mut rng).unwrap().cause == TerminalCause::Fell {
                falls += 1;
            }
        }
        assert_eq!(falls, 0);
    }

    #[test]
    fn fall_rate_on_windy_tiles() {
        let mut rng = seeded_rng(2);
        let visits = 1_000_000;
        let mut falls = 0;
        for i in 0..visits {
            // (0,1) -> right lands on (0,2); (0,2) -> left lands on (0,1)
            let (s, a) = if i % 2 == 0 {
                (GridState { row: 0, col: 1 }, Action::Right)
            } else {
                (GridState { row: 0, col: 2 }, Action::Left)
            };
            if grid_step(s, a, 0.05, &mut rng).unwrap().cause == TerminalCause::Fell {
                falls += 1;
            }
        }
        let rate = falls as f64 / visits as f64;
        assert!((rate - 0.05).abs() < 0.002, "{rate}");
    }

    #[test]
    fn step_cap_truncates() {
        let cfg = GridConfig {
            wind_probability: 0.0,
            step_cap: 3,
        };
        let mut env = WindyCliff::new(cfg).unwrap();
        let mut rng = seeded_rng(0);
        env.reset();
        for k in 0..3 {
            let s = env.step(Action::Left.index(), &mut rng).unwrap();
            assert!(!s.terminal);
            assert_eq!(s.truncated, k == 2);
        }
        assert!(env.state().is_none());
        assert!(WindyCliff::new(GridConfig { wind_probability: 2.0, step_cap: 1 }).is_err());
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use crate::seeded_rng;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn episode_return_accounting(actions in prop::collection::vec(0usize..4, 1..60), seed in 0u64..10_000) {
            let mut rng = seeded_rng(seed);
            let mut s = grid_reset();
            let mut ret = 0.0;
            for (k, &a) in actions.iter().enumerate() {
                let r = grid_step(s, Action::ALL[a], 0.3, &mut rng).unwrap();
                ret += r.reward;
                prop_assert_eq!(r.terminal, r.cause != TerminalCause::None);
                match r.cause {
                    TerminalCause::Goal => { prop_assert_eq!(ret, 10.0 - (k + 1) as f64); break; }
                    TerminalCause::Fell => { prop_assert_eq!(ret, -((k + 1) as f64)); break; }
                    TerminalCause::None => s = r.next_state.unwrap(),
                }
            }
        }
    }
}
