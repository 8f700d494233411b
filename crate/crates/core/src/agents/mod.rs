//! QR-DQN learner with anchored auxiliary networks and the four
//! action-selection policies: epsilon-greedy QR-DQN and the
//! uncertainty-aware variants (risk-neutral, biased-aleatoric,
//! unbiased-aleatoric).

mod config;
mod episode;
mod learner;
mod replay;

pub use config::{AgentConfig, Policy};
pub use episode::{run_episode, EpisodeOutcome, StepRecord};
pub use learner::{ua_choose, ActionChoice, Agent, AuxNet, TrainStats};
pub use replay::{ReplayBuffer, Transition};
