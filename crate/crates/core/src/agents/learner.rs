use std::collections::HashMap;

use rand::Rng as _;
use rand_distr::StandardNormal;

use super::config::{AgentConfig, Policy};
use super::replay::ReplayBuffer;
use crate::nn::{adam_step, AdamState, Gradients, Network};
use crate::quantile::{action_means, argmax, fill_targets, quantile_levels, SortedTargets};
use crate::uncertainty::{
    aleatoric_pair_unchecked, epistemic_pair_unchecked, UncertaintyEstimate,
};
use crate::stats::population_variance;
use crate::{derive_seed, Error, Result, Rng};

/// An auxiliary posterior-sample network with its own target copy and optimizer.
#[derive(Debug, Clone)]
pub struct AuxNet {
    pub net: Network,
    pub target: Network,
    adam: AdamState,
}

impl AuxNet {
    fn new(config: &AgentConfig, sizes: &[usize], seed: u64) -> Result<Self> {
        let net = Network::new(sizes, seed, config.init, config.activation)?;
        let adam = AdamState::new(&net, config.learning_rate, config.adam_epsilon)?;
        Ok(AuxNet {
            target: net.clone(),
            net,
            adam,
        })
    }
}

/// Result of one action selection.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionChoice {
    pub action: usize,
    /// Argmax of the value network's means.
    pub greedy_action: usize,
    /// Uncertainty of the chosen action, when auxiliary networks exist.
    pub uncertainty: Option<UncertaintyEstimate>,
}

impl ActionChoice {
    pub fn is_greedy(&self) -> bool {
        self.action == self.greedy_action
    }
}

/// Diagnostics of one training step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrainStats {
    /// False when the buffer was too small and nothing happened.
    pub trained: bool,
    pub value_loss: f64,
    pub aux_loss: [f64; 2],
}

/// Value network, its target copy and (for the uncertainty-aware policies)
/// two anchored auxiliary networks.
#[derive(Debug, Clone)]
pub struct Agent {
    config: AgentConfig,
    obs_dim: usize,
    n_actions: usize,
    taus: Vec<f64>,
    pub value: Network,
    value_target: Network,
    value_adam: AdamState,
    pub aux: Option<[AuxNet; 2]>,
    train_steps: u64,
    /// Greedy next-action quantiles of `value_target` keyed by next-state
    /// bits; valid until the next target sync.
    target_cache: HashMap<Vec<u64>, Vec<f64>>,
}

impl Agent {
    /// Builds an agent whose networks are seeded from independent streams of `seed`.
    pub fn new(config: AgentConfig, obs_dim: usize, n_actions: usize, seed: u64) -> Result<Self> {
        Self::with_seeds(
            config,
            obs_dim,
            n_actions,
            derive_seed(seed, 1),
            [derive_seed(seed, 2), derive_seed(seed, 3)],
        )
    }

    /// Explicit seeds for the value network and each auxiliary network.
    pub fn with_seeds(
        config: AgentConfig,
        obs_dim: usize,
        n_actions: usize,
        value_seed: u64,
        aux_seeds: [u64; 2],
    ) -> Result<Self> {
        config.validate()?;
        if obs_dim == 0 || n_actions == 0 {
            return Err(Error::Config("observation and action spaces must be non-empty".into()));
        }
        let sizes = config.layer_sizes(obs_dim, n_actions);
        let value = Network::new(&sizes, value_seed, config.init, config.activation)?;
        let value_adam = AdamState::new(&value, config.learning_rate, config.adam_epsilon)?;
        let aux = if config.policy.uses_aux() {
            Some([
                AuxNet::new(&config, &sizes, aux_seeds[0])?,
                AuxNet::new(&config, &sizes, aux_seeds[1])?,
            ])
        } else {
            None
        };
        Ok(Agent {
            taus: quantile_levels(config.n_quantiles),
            obs_dim,
            n_actions,
            value_target: value.clone(),
            value,
            value_adam,
            aux,
            train_steps: 0,
            target_cache: HashMap::new(),
            config,
        })
    }

    /// Target copy of the value network.
    pub fn value_target(&self) -> &Network {
        &self.value_target
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn train_steps(&self) -> u64 {
        self.train_steps
    }

    /// Combined fingerprint of every trainable network and target copy.
    pub fn fingerprint(&self) -> u64 {
        let mut h = self.value.fingerprint() ^ self.value_target.fingerprint().rotate_left(7);
        if let Some(aux) = &self.aux {
            for (k, a) in aux.iter().enumerate() {
                h ^= a.net.fingerprint().rotate_left(13 + k as u32);
                h ^= a.target.fingerprint().rotate_left(29 + k as u32);
            }
        }
        h
    }

    fn check_obs(&self, obs: &[f64]) -> Result<()> {
        if obs.len() != self.obs_dim {
            return Err(Error::shape("observation", self.obs_dim, obs.len()));
        }
        Ok(())
    }

    /// Flat `(action, quantile)` outputs of the value network.
    pub fn value_quantiles(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.check_obs(obs)?;
        self.value.forward(obs)
    }

    /// Per-action uncertainty estimates used by the configured policy.
    /// `None` for the epsilon-greedy policy.
    pub fn uncertainties(&self, obs: &[f64]) -> Result<Option<Vec<UncertaintyEstimate>>> {
        self.check_obs(obs)?;
        let Some(aux) = &self.aux else {
            return Ok(None);
        };
        let qa = aux[0].net.forward(obs)?;
        let qb = aux[1].net.forward(obs)?;
        let n = self.config.n_quantiles;
        let qv = if self.config.policy == Policy::UaVariant1 {
            Some(self.value.forward(obs)?)
        } else {
            None
        };
        Ok(Some(
            (0..self.n_actions)
                .map(|a| {
                    let r = a * n..(a + 1) * n;
                    let epi = epistemic_pair_unchecked(&qa[r.clone()], &qb[r.clone()]);
                    let alea = match &qv {
                        Some(v) => population_variance(&v[r]),
                        None => aleatoric_pair_unchecked(&qa[r.clone()], &qb[r]),
                    };
                    UncertaintyEstimate::new(epi, alea)
                })
                .collect(),
        ))
    }

    /// Chooses an action with the configured policy. `env_step` drives the
    /// epsilon schedule.
    pub fn select_action(&self, obs: &[f64], env_step: u64, rng: &mut Rng) -> Result<ActionChoice> {
        match self.config.policy {
            Policy::EpsGreedyQr => {
                self.eps_greedy_select(obs, self.config.epsilon_at(env_step), rng)
            }
            _ => self.ua_select_action(obs, rng),
        }
    }

    /// Uncertainty-aware selection: penalize each action mean by
    /// `lambda * sigma_aleatoric`, then Thompson-sample from
    /// `Normal(mean, beta * sigma^2_epistemic)` and take the argmax.
    pub fn ua_select_action(&self, obs: &[f64], rng: &mut Rng) -> Result<ActionChoice> {
        let means = action_means(&self.value_quantiles(obs)?, self.config.n_quantiles);
        let greedy_action = argmax(&means);
        let est = self
            .uncertainties(obs)?
            .ok_or_else(|| Error::Contract("policy has no auxiliary networks".into()))?;
        let epi: Vec<f64> = est.iter().map(|e| e.epistemic_var).collect();
        let alea: Vec<f64> = est.iter().map(|e| e.aleatoric_var).collect();
        let action = ua_choose(
            &means,
            &epi,
            &alea,
            self.config.effective_lambda(),
            self.config.beta,
            rng,
        );
        Ok(ActionChoice {
            action,
            greedy_action,
            uncertainty: Some(est[action]),
        })
    }

    /// With probability `epsilon` a uniform action, otherwise greedy on the
    /// value network's means.
    pub fn eps_greedy_select(&self, obs: &[f64], epsilon: f64, rng: &mut Rng) -> Result<ActionChoice> {
        let means = action_means(&self.value_quantiles(obs)?, self.config.n_quantiles);
        let greedy_action = argmax(&means);
        let explore = rng.random::<f64>() < epsilon;
        let action = if explore {
            rng.random_range(0..self.n_actions)
        } else {
            greedy_action
        };
        let uncertainty = self.uncertainties(obs)?.map(|est| est[action]);
        Ok(ActionChoice {
            action,
            greedy_action,
            uncertainty,
        })
    }

    /// One gradient step on a uniformly sampled minibatch for the value
    /// network and (when present) both auxiliary networks.
    pub fn train_step(&mut self, buffer: &ReplayBuffer, rng: &mut Rng) -> Result<TrainStats> {
        let batch = self.config.minibatch;
        if buffer.len() < batch {
            return Ok(TrainStats::default());
        }
        let n = self.config.n_quantiles;
        let gamma = self.config.gamma;
        let scale = 1.0 / batch as f64;
        let indices = buffer.sample_indices(batch, rng);

        let mut g_value = Gradients::zeros_like(&self.value);
        let mut g_aux = self
            .aux
            .as_ref()
            .map(|aux| [Gradients::zeros_like(&aux[0].net), Gradients::zeros_like(&aux[1].net)]);
        let mut targets = vec![0.0; n];
        let mut own_targets = vec![0.0; n];
        let mut grad = vec![0.0; n];
        let mut grad_sum = vec![0.0; n];
        let mut aux_sum = [vec![0.0; n], vec![0.0; n]];
        let mut sorted = SortedTargets::default();
        let mut own_sorted = SortedTargets::default();
        let mut stats = TrainStats {
            trained: true,
            ..TrainStats::default()
        };

        // Samples sharing (state, action) share one forward and one backward
        // pass on the summed output gradient.
        let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
        let mut group_of: HashMap<(Vec<u64>, usize), usize> = HashMap::new();
        for &i in &indices {
            let t = buffer.get(i);
            if t.action >= self.n_actions {
                return Err(Error::Contract(format!("stored action {} out of range", t.action)));
            }
            let key = (bits(&t.state), t.action);
            let g = *group_of.entry(key).or_insert_with(|| {
                groups.push((i, Vec::new()));
                groups.len() - 1
            });
            groups[g].1.push(i);
        }

        for (head, members) in &groups {
            let t0 = buffer.get(*head);
            let rows = t0.action * n..(t0.action + 1) * n;
            let trace = self.value.forward_rows(&t0.state, rows.clone());
            let aux_traces = self
                .aux
                .as_ref()
                .map(|aux| [aux[0].net.forward_rows(&t0.state, rows.clone()), aux[1].net.forward_rows(&t0.state, rows.clone())]);
            grad_sum.fill(0.0);
            for a in &mut aux_sum {
                a.fill(0.0);
            }
            for &i in members {
                let t = buffer.get(i);
                let next = if t.terminal {
                    None
                } else {
                    Some(
                        self.target_cache
                            .entry(bits(&t.next_state))
                            .or_insert_with(|| bootstrap_quantiles(&self.value_target, &t.next_state, n))
                            .as_slice(),
                    )
                };
                fill_targets(t.reward, gamma, next, &mut targets);
                sorted.reset(&targets);
                stats.value_loss += scale * sorted.loss_and_gradient(&trace.output, &self.taus, &mut grad);
                add(&grad, &mut grad_sum);

                if let (Some(aux), Some(traces)) = (&self.aux, &aux_traces) {
                    for k in 0..2 {
                        let tgt = if self.config.aux_own_targets {
                            let own = if t.terminal {
                                None
                            } else {
                                Some(bootstrap_quantiles(&aux[k].target, &t.next_state, n))
                            };
                            fill_targets(t.reward, gamma, own.as_deref(), &mut own_targets);
                            own_sorted.reset(&own_targets);
                            &own_sorted
                        } else {
                            &sorted
                        };
                        stats.aux_loss[k] += scale * tgt.loss_and_gradient(&traces[k].output, &self.taus, &mut grad);
                        add(&grad, &mut aux_sum[k]);
                    }
                }
            }
            self.value.backward_trace(&trace, &grad_sum, scale, &mut g_value);
            if let (Some(aux), Some(traces), Some(g_aux)) = (&self.aux, &aux_traces, g_aux.as_mut()) {
                for k in 0..2 {
                    aux[k].net.backward_trace(&traces[k], &aux_sum[k], scale, &mut g_aux[k]);
                }
            }
        }

        adam_step(&mut self.value, &g_value, &mut self.value_adam)?;
        if let (Some(aux), Some(mut g_aux)) = (self.aux.as_mut(), g_aux) {
            for (a, g) in aux.iter_mut().zip(g_aux.iter_mut()) {
                if self.config.anchored_penalty {
                    let priors = a.net.prior_scales().to_vec();
                    a.net
                        .add_anchored_penalty_gradient(g, self.config.noise_scale, &priors, buffer.len())?;
                }
                adam_step(&mut a.net, g, &mut a.adam)?;
            }
        }

        self.train_steps += 1;
        if self.train_steps.is_multiple_of(self.config.target_sync) {
            self.sync_targets();
        }
        Ok(stats)
    }

    fn sync_targets(&mut self) {
        self.value_target.copy_params_from(&self.value);
        self.target_cache.clear();
        if let Some(aux) = self.aux.as_mut() {
            for a in aux.iter_mut() {
                a.target.copy_params_from(&a.net);
            }
        }
    }
}

fn bits(x: &[f64]) -> Vec<u64> {
    x.iter().map(|v| v.to_bits()).collect()
}

fn add(x: &[f64], acc: &mut [f64]) {
    for (a, v) in acc.iter_mut().zip(x) {
        *a += v;
    }
}

/// Quantiles of the greedy next action under `target` (greedy by the
/// target's own means).
fn bootstrap_quantiles(target: &Network, next_state: &[f64], n: usize) -> Vec<f64> {
    let out = target.forward_rows(next_state, 0..target.output_dim()).output;
    let a = argmax(&action_means(&out, n));
    out[a * n..(a + 1) * n].to_vec()
}

/// Uncertainty-aware choice from per-action means and variance estimates.
/// One standard-normal draw is consumed per action regardless of the
/// variances, so the RNG stream does not depend on the estimates.
pub fn ua_choose(
    means: &[f64],
    epistemic_var: &[f64],
    aleatoric_var: &[f64],
    lambda: f64,
    beta: f64,
    rng: &mut Rng,
) -> usize {
    let sampled: Vec<f64> = means
        .iter()
        .zip(epistemic_var)
        .zip(aleatoric_var)
        .map(|((&mu, &epi), &alea)| {
            let z: f64 = rng.sample(StandardNormal);
            let penalized = mu - lambda * alea.max(0.0).sqrt();
            penalized + (beta * epi.max(0.0)).sqrt() * z
        })
        .collect();
    argmax(&sampled)
}
