//! Heteroscedastic 1-D regression data with a gap between two clusters.
//!
//! `x` is drawn uniformly from `[-3, -1]` or `[1, 3]` (equal odds), leaving
//! the interval `(-1, 1)` empty. `y = sin(1.5 x) + noise` where the noise is
//! Gaussian with standard deviation `low_noise` on the left cluster and
//! `high_noise_slope * x` on the right cluster.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{seeded_rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionSample {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegressionConfig {
    pub low_noise: f64,
    pub high_noise_slope: f64,
}

impl Default for RegressionConfig {
    fn default() -> Self {
        RegressionConfig {
            low_noise: 0.1,
            high_noise_slope: 0.15,
        }
    }
}

pub const LEFT_CLUSTER: (f64, f64) = (-3.0, -1.0);
pub const RIGHT_CLUSTER: (f64, f64) = (1.0, 3.0);

impl RegressionConfig {
    pub fn mean(&self, x: f64) -> f64 {
        (1.5 * x).sin()
    }

    pub fn noise_std(&self, x: f64) -> f64 {
        if x < 0.0 {
            self.low_noise
        } else {
            self.high_noise_slope * x
        }
    }
}

/// Deterministic dataset of `n_points` samples.
pub fn regression_dataset(
    n_points: usize,
    seed: u64,
    config: &RegressionConfig,
) -> Result<Vec<RegressionSample>> {
    if n_points == 0 {
        return Err(Error::Domain("regression dataset needs at least one point".into()));
    }
    let mut rng = seeded_rng(seed);
    Ok((0..n_points)
        .map(|_| {
            let (lo, hi) = if rng.random::<bool>() {
                LEFT_CLUSTER
            } else {
                RIGHT_CLUSTER
            };
            let x = rng.random_range(lo..=hi);
            let z: f64 = StandardNormal.sample(&mut rng);
            RegressionSample {
                x,
                y: config.mean(x) + config.noise_std(x) * z,
            }
        })
        .collect())
}
