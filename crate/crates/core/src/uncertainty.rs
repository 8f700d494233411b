//! Epistemic and aleatoric variance of quantile outputs.
//!
//! Two families live here:
//!
//! - exact ensemble quantities over an `M x N` matrix of posterior samples
//!   (rows are parameter samples, columns are quantile indices):
//!   epistemic = mean over columns of the variance over rows,
//!   aleatoric = variance over columns of the row-mean,
//!   total = variance over all entries;
//! - two-sample estimators that only need a pair of posterior samples
//!   `(qA, qB)`: half the mean squared difference (epistemic) and the
//!   covariance over the quantile index (aleatoric).
//!
//! All moments use population (divide-by-count) conventions, which makes
//! `total == epistemic + aleatoric` an exact identity.

use crate::stats::{mean, population_variance};
use crate::{Error, Result};

/// A pair of variance estimates and their sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertaintyEstimate {
    pub epistemic_var: f64,
    /// May be slightly negative for the two-sample covariance estimator.
    pub aleatoric_var: f64,
    pub total_var: f64,
}

impl UncertaintyEstimate {
    pub fn new(epistemic_var: f64, aleatoric_var: f64) -> Self {
        UncertaintyEstimate {
            epistemic_var,
            aleatoric_var,
            total_var: epistemic_var + aleatoric_var,
        }
    }

    /// Two-network estimate from a pair of posterior samples.
    pub fn from_pair(q_a: &[f64], q_b: &[f64]) -> Result<Self> {
        Ok(Self::new(
            epistemic_two_sample(q_a, q_b)?,
            aleatoric_two_sample(q_a, q_b)?,
        ))
    }

    pub fn epistemic_std(&self) -> f64 {
        clamped_sqrt(self.epistemic_var)
    }

    pub fn aleatoric_std(&self) -> f64 {
        clamped_sqrt(self.aleatoric_var)
    }

    pub fn total_std(&self) -> f64 {
        clamped_sqrt(self.total_var)
    }
}

/// `sqrt(max(v, 0))`.
#[inline]
pub fn clamped_sqrt(v: f64) -> f64 {
    v.max(0.0).sqrt()
}

fn check_pair(q_a: &[f64], q_b: &[f64]) -> Result<()> {
    if q_a.len() != q_b.len() {
        return Err(Error::shape("quantile pair", q_a.len(), q_b.len()));
    }
    Ok(())
}

/// `(1 / 2N) * sum_i (qA_i - qB_i)^2`.
pub fn epistemic_two_sample(q_a: &[f64], q_b: &[f64]) -> Result<f64> {
    check_pair(q_a, q_b)?;
    if q_a.is_empty() {
        return Err(Error::Domain("need at least one quantile".into()));
    }
    Ok(epistemic_pair_unchecked(q_a, q_b))
}

#[inline]
pub(crate) fn epistemic_pair_unchecked(q_a: &[f64], q_b: &[f64]) -> f64 {
    let ss: f64 = q_a.iter().zip(q_b).map(|(a, b)| (a - b) * (a - b)).sum();
    0.5 * ss / q_a.len() as f64
}

/// Population covariance over the quantile index.
pub fn aleatoric_two_sample(q_a: &[f64], q_b: &[f64]) -> Result<f64> {
    check_pair(q_a, q_b)?;
    if q_a.len() < 2 {
        return Err(Error::Domain(
            "covariance over the quantile index needs N >= 2".into(),
        ));
    }
    Ok(aleatoric_pair_unchecked(q_a, q_b))
}

#[inline]
pub(crate) fn aleatoric_pair_unchecked(q_a: &[f64], q_b: &[f64]) -> f64 {
    let (ma, mb) = (mean(q_a), mean(q_b));
    let s: f64 = q_a.iter().zip(q_b).map(|(a, b)| (a - ma) * (b - mb)).sum();
    s / q_a.len() as f64
}

/// Variance over the index of a single network's quantiles. Biased upward
/// whenever the posterior is dispersed.
pub fn aleatoric_biased(q: &[f64]) -> Result<f64> {
    if q.len() < 2 {
        return Err(Error::Domain("variance over the quantile index needs N >= 2".into()));
    }
    Ok(population_variance(q))
}

fn check_matrix(samples: &[Vec<f64>]) -> Result<usize> {
    let n = samples.first().map_or(0, Vec::len);
    for row in samples {
        if row.len() != n {
            return Err(Error::shape("sample matrix row", n, row.len()));
        }
    }
    Ok(n)
}

fn column_means(samples: &[Vec<f64>], n: usize) -> Vec<f64> {
    let mut means = vec![0.0; n];
    for row in samples {
        for (m, v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    let inv = 1.0 / samples.len() as f64;
    means.iter_mut().for_each(|m| *m *= inv);
    means
}

/// Mean over quantile columns of the population variance across sample rows.
pub fn epistemic_exact(samples: &[Vec<f64>]) -> Result<f64> {
    let n = check_matrix(samples)?;
    if samples.len() < 2 {
        return Err(Error::Domain("epistemic variance needs at least two posterior samples".into()));
    }
    if n == 0 {
        return Err(Error::Domain("empty quantile rows".into()));
    }
    let means = column_means(samples, n);
    let mut acc = vec![0.0; n];
    for row in samples {
        for ((a, v), m) in acc.iter_mut().zip(row).zip(&means) {
            *a += (v - m) * (v - m);
        }
    }
    let m = samples.len() as f64;
    Ok(acc.iter().sum::<f64>() / (m * n as f64))
}

/// Population variance over quantile columns of the per-column sample mean.
pub fn aleatoric_exact(samples: &[Vec<f64>]) -> Result<f64> {
    let n = check_matrix(samples)?;
    if samples.is_empty() {
        return Err(Error::Domain("need at least one posterior sample".into()));
    }
    if n < 2 {
        return Err(Error::Domain("aleatoric variance needs N >= 2".into()));
    }
    Ok(population_variance(&column_means(samples, n)))
}

/// Population variance over every entry of the matrix.
pub fn total_exact(samples: &[Vec<f64>]) -> Result<f64> {
    let n = check_matrix(samples)?;
    if samples.len() * n < 2 {
        return Err(Error::Domain("total variance needs at least two entries".into()));
    }
    let count = (samples.len() * n) as f64;
    let grand = samples.iter().flatten().sum::<f64>() / count;
    Ok(samples
        .iter()
        .flatten()
        .map(|v| (v - grand) * (v - grand))
        .sum::<f64>()
        / count)
}

/// Exact ensemble estimate (epistemic + aleatoric) of a sample matrix.
pub fn exact_estimate(samples: &[Vec<f64>]) -> Result<UncertaintyEstimate> {
    Ok(UncertaintyEstimate::new(
        epistemic_exact(samples)?,
        aleatoric_exact(samples)?,
    ))
}
