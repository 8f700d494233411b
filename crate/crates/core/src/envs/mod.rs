//! Environments driven by the agents and the regression demo.

pub mod gridworld;
pub mod regression;

pub use gridworld::{
    Action, GridConfig, GridState, StepResult, TerminalCause, WindyCliff, N_ACTIONS, N_CELLS,
};
pub use regression::{regression_dataset, RegressionConfig, RegressionSample, LEFT_CLUSTER, RIGHT_CLUSTER};

use crate::{Result, Rng};

/// One interaction step as seen by an agent.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    pub observation: Vec<f64>,
    pub reward: f64,
    /// True episode end (goal or fall); bootstrapping stops here.
    pub terminal: bool,
    /// Episode cut by the step cap; the transition is not terminal.
    pub truncated: bool,
    pub cause: TerminalCause,
}

/// Discrete-action episodic environment with vector observations.
pub trait Environment {
    fn n_actions(&self) -> usize;
    fn observation_dim(&self) -> usize;
    fn reset(&mut self) -> Vec<f64>;
    fn step(&mut self, action: usize, rng: &mut Rng) -> Result<EnvStep>;
}
