use super::learner::{Agent, TrainStats};
use super::replay::{ReplayBuffer, Transition};
use crate::envs::{Environment, TerminalCause};
use crate::uncertainty::UncertaintyEstimate;
use crate::{Result, Rng};

/// Per-step record handed to the observer of [`run_episode`].
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    /// Environment steps taken before this one.
    pub global_step: u64,
    pub action: usize,
    pub greedy: bool,
    pub reward: f64,
    pub uncertainty: Option<UncertaintyEstimate>,
    pub cause: TerminalCause,
    pub train: TrainStats,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeOutcome {
    /// Undiscounted return.
    pub episode_return: f64,
    pub steps: usize,
    pub cause: TerminalCause,
}

/// Runs one episode.
///
/// With `learn` set, every transition is pushed to `buffer` and, once the
/// buffer holds `warmup` transitions, one training step follows each
/// environment step. Without it neither the buffer nor the networks change.
/// `step_budget` ends the episode early (as a truncation) once that many
/// steps were taken. `global_step` is advanced by the number of steps.
#[allow(clippy::too_many_arguments)]
pub fn run_episode<E: Environment>(
    agent: &mut Agent,
    env: &mut E,
    buffer: &mut ReplayBuffer,
    rng: &mut Rng,
    learn: bool,
    global_step: &mut u64,
    step_budget: Option<usize>,
    mut observer: impl FnMut(&StepRecord),
) -> Result<EpisodeOutcome> {
    let mut obs = env.reset();
    let mut outcome = EpisodeOutcome {
        episode_return: 0.0,
        steps: 0,
        cause: TerminalCause::None,
    };
    loop {
        let choice = agent.select_action(&obs, *global_step, rng)?;
        let step = env.step(choice.action, rng)?;
        outcome.episode_return += step.reward;
        outcome.steps += 1;
        let mut train = TrainStats::default();
        if learn {
            buffer.push(Transition {
                state: std::mem::take(&mut obs),
                action: choice.action,
                reward: step.reward,
                next_state: step.observation.clone(),
                terminal: step.terminal,
            });
            if buffer.len() >= agent.config().warmup {
                train = agent.train_step(buffer, rng)?;
            }
        }
        observer(&StepRecord {
            global_step: *global_step,
            action: choice.action,
            greedy: choice.is_greedy(),
            reward: step.reward,
            uncertainty: choice.uncertainty,
            cause: step.cause,
            train,
        });
        *global_step += 1;
        let out_of_budget = step_budget.is_some_and(|b| outcome.steps >= b);
        if step.terminal || step.truncated || out_of_budget {
            outcome.cause = step.cause;
            return Ok(outcome);
        }
        obs = step.observation;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{AgentConfig, Policy};
    use crate::envs::{GridConfig, WindyCliff, N_ACTIONS, N_CELLS};
    use crate::seeded_rng;

    fn agent(policy: Policy) -> Agent {
        let cfg = AgentConfig {
            policy,
            n_quantiles: 8,
            hidden: vec![16],
            warmup: 10,
            minibatch: 8,
            ..AgentConfig::default()
        };
        Agent::new(cfg, N_CELLS, N_ACTIONS, 3).unwrap()
    }

    #[test]
    fn evaluation_mutates_nothing() {
        let mut a = agent(Policy::UaVariant2);
        let mut env = WindyCliff::new(GridConfig::default()).unwrap();
        let mut buf = ReplayBuffer::new(100).unwrap();
        let mut rng = seeded_rng(0);
        let before = a.fingerprint();
        let mut step = 0;
        for _ in 0..5 {
            run_episode(&mut a, &mut env, &mut buf, &mut rng, false, &mut step, None, |_| {}).unwrap();
        }
        assert_eq!(a.fingerprint(), before);
        assert!(buf.is_empty());
        assert!(step > 0);
    }

    #[test]
    fn episodes_respect_cap_and_learning_changes_params() {
        let mut a = agent(Policy::EpsGreedyQr);
        let cfg = GridConfig {
            step_cap: 7,
            ..GridConfig::default()
        };
        let mut env = WindyCliff::new(cfg).unwrap();
        let mut buf = ReplayBuffer::new(1000).unwrap();
        let mut rng = seeded_rng(1);
        let before = a.fingerprint();
        let mut step = 0;
        let mut trained = 0;
        for _ in 0..30 {
            let out = run_episode(&mut a, &mut env, &mut buf, &mut rng, true, &mut step, None, |r| {
                if r.train.trained {
                    trained += 1;
                }
            })
            .unwrap();
            assert!(out.steps <= 7);
            match out.cause {
                TerminalCause::Goal => assert_eq!(out.episode_return, 10.0 - out.steps as f64),
                _ => assert_eq!(out.episode_return, -(out.steps as f64)),
            }
        }
        assert!(trained > 0);
        assert_ne!(a.fingerprint(), before);
        assert_eq!(buf.len() as u64, step);
    }

    #[test]
    fn step_budget_cuts_episode() {
        let mut a = agent(Policy::EpsGreedyQr);
        let mut env = WindyCliff::new(GridConfig { wind_probability: 0.0, step_cap: 100 }).unwrap();
        let mut buf = ReplayBuffer::new(100).unwrap();
        let mut step = 0;
        let out = run_episode(&mut a, &mut env, &mut buf, &mut seeded_rng(2), true, &mut step, Some(1), |_| {})
            .unwrap();
        assert_eq!(out.steps, 1);
        assert_eq!(step, 1);
    }
}
