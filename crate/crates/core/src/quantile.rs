//! Quantile representation of return distributions.
//!
//! A distribution is stored as `N` values at the fixed levels
//! `tau_i = i / (N + 1)`, `i = 1..=N`. Values are not required to be
//! monotone in `i`.

use crate::{Error, Result};

/// Quantile level of the `index`-th (zero-based) value among `n`.
#[inline]
pub fn quantile_level(index: usize, n: usize) -> f64 {
    (index + 1) as f64 / (n + 1) as f64
}

/// All `n` quantile levels.
pub fn quantile_levels(n: usize) -> Vec<f64> {
    (0..n).map(|i| quantile_level(i, n)).collect()
}

/// Return distribution of one (state, action) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileDistribution {
    values: Vec<f64>,
}

impl QuantileDistribution {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Domain("quantile distribution needs at least one value".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite quantile value".into()));
        }
        Ok(QuantileDistribution { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn levels(&self) -> Vec<f64> {
        quantile_levels(self.values.len())
    }

    /// Expected value: the mean of the quantile values.
    pub fn mean(&self) -> f64 {
        crate::stats::mean(&self.values)
    }
}

/// Pinball loss `rho_tau(u) = u * (tau - 1{u < 0})`.
pub fn pinball(u: f64, tau: f64) -> Result<f64> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Domain(format!("quantile level {tau} outside (0, 1)")));
    }
    Ok(pinball_unchecked(u, tau))
}

#[inline]
fn pinball_unchecked(u: f64, tau: f64) -> f64 {
    if u < 0.0 {
        u * (tau - 1.0)
    } else {
        u * tau
    }
}

/// `(1/M) * sum_j sum_i rho_{tau_i}(z_j - q_i)`.
pub fn quantile_loss(pred: &QuantileDistribution, targets: &[f64]) -> Result<f64> {
    if targets.is_empty() {
        return Err(Error::Domain("empty target sample set".into()));
    }
    let taus = pred.levels();
    Ok(loss_and_gradient(pred.values(), &taus, targets, None))
}

/// Subgradient of [`quantile_loss`] with respect to each quantile value:
/// `(1/M) * sum_j (1{z_j < q_i} - tau_i)`. At `z_j == q_i` the indicator is false.
pub fn quantile_loss_gradient(pred: &QuantileDistribution, targets: &[f64]) -> Result<Vec<f64>> {
    if targets.is_empty() {
        return Err(Error::Domain("empty target sample set".into()));
    }
    let taus = pred.levels();
    let mut grad = vec![0.0; pred.len()];
    loss_and_gradient(pred.values(), &taus, targets, Some(&mut grad));
    Ok(grad)
}

/// Loss and (optionally) its gradient in one pass; inputs are trusted.
pub(crate) fn loss_and_gradient(
    values: &[f64],
    taus: &[f64],
    targets: &[f64],
    mut grad: Option<&mut [f64]>,
) -> f64 {
    let inv_m = 1.0 / targets.len() as f64;
    let mut loss = 0.0;
    for (i, (&q, &tau)) in values.iter().zip(taus).enumerate() {
        let mut below = 0usize;
        for &z in targets {
            let u = z - q;
            loss += pinball_unchecked(u, tau);
            if u < 0.0 {
                below += 1;
            }
        }
        if let Some(g) = grad.as_deref_mut() {
            g[i] = inv_m * below as f64 - tau;
        }
    }
    loss * inv_m
}

/// Targets sorted once so that the loss and gradient of many quantile
/// vectors cost `O(N log M)` each instead of `O(N M)`.
#[derive(Debug, Clone, Default)]
pub(crate) struct SortedTargets {
    sorted: Vec<f64>,
    /// `prefix[k]` = sum of the `k` smallest targets.
    prefix: Vec<f64>,
}

impl SortedTargets {
    pub(crate) fn reset(&mut self, targets: &[f64]) {
        self.sorted.clear();
        self.sorted.extend_from_slice(targets);
        self.sorted.sort_unstable_by(f64::total_cmp);
        self.prefix.clear();
        self.prefix.push(0.0);
        let mut acc = 0.0;
        for &z in &self.sorted {
            acc += z;
            self.prefix.push(acc);
        }
    }

    /// Same quantities as [`loss_and_gradient`]; the loss differs only by
    /// rounding.
    pub(crate) fn loss_and_gradient(&self, values: &[f64], taus: &[f64], grad: &mut [f64]) -> f64 {
        let m = self.sorted.len() as f64;
        let inv_m = 1.0 / m;
        let total = self.prefix[self.sorted.len()];
        let mut loss = 0.0;
        for (i, (&q, &tau)) in values.iter().zip(taus).enumerate() {
            // targets strictly below q have u < 0
            let k = self.sorted.partition_point(|&z| z < q);
            let kf = k as f64;
            loss += tau * (total - m * q) - (self.prefix[k] - kf * q);
            grad[i] = inv_m * kf - tau;
        }
        loss * inv_m
    }
}

/// Distributional Bellman targets for one transition.
#[derive(Debug, Clone, PartialEq)]
pub struct BellmanTargets {
    pub targets: Vec<f64>,
}

impl BellmanTargets {
    /// `r + gamma * q'_j` for every next-state quantile, or `n` copies of `r`
    /// on a terminal transition.
    pub fn compute(
        reward: f64,
        gamma: f64,
        next: Option<&QuantileDistribution>,
        terminal: bool,
        n: usize,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::Domain(format!("discount {gamma} outside [0, 1]")));
        }
        match (terminal, next) {
            (true, None) => Ok(BellmanTargets {
                targets: vec![reward; n],
            }),
            (false, Some(d)) => {
                let mut targets = vec![0.0; d.len()];
                fill_targets(reward, gamma, Some(d.values()), &mut targets);
                Ok(BellmanTargets { targets })
            }
            (false, None) => Err(Error::Contract(
                "non-terminal transition needs a next-state distribution".into(),
            )),
            (true, Some(_)) => Err(Error::Contract(
                "terminal transition must not carry a next-state distribution".into(),
            )),
        }
    }
}

/// In-place variant used on the training hot path.
#[inline]
pub(crate) fn fill_targets(reward: f64, gamma: f64, next: Option<&[f64]>, out: &mut [f64]) {
    match next {
        Some(q) => {
            for (o, &v) in out.iter_mut().zip(q) {
                *o = reward + gamma * v;
            }
        }
        None => out.iter_mut().for_each(|o| *o = reward),
    }
}

/// Index of the action with the largest mean; ties go to the lowest index.
pub fn greedy_action(dists: &[QuantileDistribution]) -> Result<usize> {
    if dists.is_empty() {
        return Err(Error::Domain("empty action set".into()));
    }
    let means: Vec<f64> = dists.iter().map(QuantileDistribution::mean).collect();
    Ok(argmax(&means))
}

/// First index of the maximum. Panics on an empty slice.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Per-action means of a flat `(action, quantile)` output vector.
pub fn action_means(flat: &[f64], n_quantiles: usize) -> Vec<f64> {
    flat.chunks_exact(n_quantiles).map(crate::stats::mean).collect()
}
