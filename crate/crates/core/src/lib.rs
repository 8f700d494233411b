//! Distributional value learning with disentangled uncertainty.
//!
//! The crate learns return quantiles with small feed-forward networks,
//! estimates epistemic and aleatoric variance from two anchored posterior
//! samples, and uses those estimates to drive an uncertainty-aware DQN agent
//! (Thompson-sampling exploration plus an aleatoric risk penalty).
//!
//! Module map:
//!
//! - [`nn`]: dense MLP, reverse-mode gradients, Adam, anchored L2 prior.
//! - [`quantile`]: quantile levels, pinball loss and distributional Bellman targets.
//! - [`uncertainty`]: exact ensemble moments and the two-network estimators.
//! - [`envs`]: the windy-cliff gridworld and a heteroscedastic regression set.
//! - [`agents`]: replay buffer, QR-DQN learner and the action-selection policies.
//! - [`validation`]: Monte-Carlo checks of the estimator properties.
//! - [`harness`]: configuration, multi-seed experiments, CSV metrics and SVG plots.
//! - [`par`]: data-parallel helpers with a sequential fallback.

// `!(x > 0.0)` is the idiom for rejecting NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agents;
pub mod envs;
pub mod error;
pub mod harness;
pub mod nn;
pub mod par;
pub mod quantile;
pub mod stats;
pub mod uncertainty;
pub mod validation;

pub use error::{Error, Result};

/// Deterministic RNG used everywhere in the crate.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Builds the crate RNG from a 64-bit seed.
pub fn seeded_rng(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}

/// Derives an independent stream seed from a base seed and a stream tag.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
