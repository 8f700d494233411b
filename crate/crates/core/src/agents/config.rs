use serde::{Deserialize, Serialize};

use crate::nn::{Activation, InitRule};
use crate::{Error, Result};

/// Action-selection policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// QR-DQN with a linearly annealed epsilon-greedy policy.
    EpsGreedyQr,
    /// Thompson sampling on the epistemic estimate, no risk penalty.
    UaRiskNeutral,
    /// Risk-averse; aleatoric input is the variance of the value network's quantiles.
    UaVariant1,
    /// Risk-averse; aleatoric input is the two-network covariance estimate.
    #[default]
    UaVariant2,
}

impl Policy {
    pub const ALL: [Policy; 4] = [
        Policy::EpsGreedyQr,
        Policy::UaRiskNeutral,
        Policy::UaVariant1,
        Policy::UaVariant2,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Policy::EpsGreedyQr => "eps_greedy_qr",
            Policy::UaRiskNeutral => "ua_risk_neutral",
            Policy::UaVariant1 => "ua_variant1",
            Policy::UaVariant2 => "ua_variant2",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown policy `{s}`")))
    }

    /// Whether the policy needs the auxiliary posterior-sample networks.
    pub fn uses_aux(self) -> bool {
        self != Policy::EpsGreedyQr
    }
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Learner and policy hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    pub policy: Policy,
    pub gamma: f64,
    pub n_quantiles: usize,
    /// Risk-aversion weight on the aleatoric standard deviation. Ignored by
    /// the epsilon-greedy and risk-neutral policies.
    pub lambda: f64,
    /// Thompson-sampling scale on the epistemic variance.
    pub beta: f64,
    pub eps_initial: f64,
    pub eps_final: f64,
    pub eps_decay_steps: u64,
    pub target_sync: u64,
    pub minibatch: usize,
    pub learning_rate: f64,
    pub adam_epsilon: f64,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub init: InitRule,
    pub buffer_capacity: usize,
    /// Environment steps collected before training starts.
    pub warmup: usize,
    /// Likelihood noise scale of the anchored prior.
    pub noise_scale: f64,
    pub anchored_penalty: bool,
    /// Auxiliary networks bootstrap from their own target copies instead of
    /// reusing the value network's targets.
    pub aux_own_targets: bool,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            policy: Policy::default(),
            gamma: 0.99,
            n_quantiles: 50,
            lambda: 0.5,
            beta: 0.2,
            eps_initial: 1.0,
            eps_final: 0.03,
            eps_decay_steps: 5_000,
            target_sync: 200,
            minibatch: 32,
            learning_rate: 1e-4,
            adam_epsilon: 1e-8,
            hidden: vec![64, 64],
            activation: Activation::Relu,
            init: InitRule::He,
            buffer_capacity: 10_000,
            warmup: 500,
            noise_scale: 1.0,
            anchored_penalty: true,
            aux_own_targets: false,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.gamma) {
            return fail("gamma must lie in [0, 1]");
        }
        if self.n_quantiles < 2 {
            return fail("n_quantiles must be at least 2");
        }
        if !(self.lambda >= 0.0) || !(self.beta >= 0.0) {
            return fail("lambda and beta must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.eps_initial) || !(0.0..=1.0).contains(&self.eps_final) {
            return fail("epsilon values must lie in [0, 1]");
        }
        if self.target_sync == 0 || self.minibatch == 0 || self.buffer_capacity == 0 {
            return fail("target_sync, minibatch and buffer_capacity must be positive");
        }
        if !(self.learning_rate > 0.0) || !(self.adam_epsilon > 0.0) || !(self.noise_scale > 0.0) {
            return fail("learning_rate, adam_epsilon and noise_scale must be positive");
        }
        if self.hidden.contains(&0) {
            return fail("hidden layer widths must be positive");
        }
        Ok(())
    }

    /// Linearly annealed exploration rate after `step` environment steps.
    pub fn epsilon_at(&self, step: u64) -> f64 {
        if self.eps_decay_steps == 0 || step >= self.eps_decay_steps {
            return self.eps_final;
        }
        let frac = step as f64 / self.eps_decay_steps as f64;
        self.eps_initial + frac * (self.eps_final - self.eps_initial)
    }

    /// Risk weight actually applied by the configured policy.
    pub fn effective_lambda(&self) -> f64 {
        match self.policy {
            Policy::UaVariant1 | Policy::UaVariant2 => self.lambda,
            _ => 0.0,
        }
    }

    pub fn layer_sizes(&self, obs_dim: usize, n_actions: usize) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.hidden.len() + 2);
        sizes.push(obs_dim);
        sizes.extend(&self.hidden);
        sizes.push(n_actions * self.n_quantiles);
        sizes
    }
}
