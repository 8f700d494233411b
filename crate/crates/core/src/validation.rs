//! Executable Monte-Carlo checks of the uncertainty estimators.
//!
//! Every check is deterministic given its seed, spreads its sampling over a
//! fixed number of independently seeded chunks (so results do not depend on
//! the thread count) and returns a serializable report with a `passed` flag.
//! Monte-Carlo tolerances are multiples of the standard error.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::envs::RegressionSample;
use crate::nn::{adam_step, Activation, AdamState, Gradients, InitRule, Network};
use crate::par::{self, Execution};
use crate::quantile::{loss_and_gradient, quantile_levels};
use crate::stats::{mean, median, population_variance, sample_variance, standard_error};
use crate::uncertainty::{
    aleatoric_exact, aleatoric_pair_unchecked, epistemic_exact, epistemic_pair_unchecked,
    total_exact,
};
use crate::{derive_seed, seeded_rng, Error, Result, Rng};

/// Number of independently seeded chunks the Monte-Carlo loops are split into.
const CHUNKS: usize = 16;

/// Multiple of the standard error accepted as Monte-Carlo noise.
pub const SE_MULTIPLE: f64 = 3.0;

/// Relative tolerance of the exact decomposition identity.
pub const DECOMPOSITION_TOL: f64 = 1e-10;

/// Shape of a synthetic posterior, independent of the number of quantiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PosteriorSpec {
    /// Column means are `spread * (2 tau_i - 1)`, i.e. quantiles of a uniform law.
    pub spread: f64,
    /// Standard deviation of the per-output perturbation.
    pub noise_sd: f64,
    /// Correlation between the perturbations of different outputs, in [0, 1).
    pub correlation: f64,
}

impl Default for PosteriorSpec {
    fn default() -> Self {
        PosteriorSpec {
            spread: 2.0,
            noise_sd: 1.0,
            correlation: 0.0,
        }
    }
}

/// Rows `y(theta) = mu + noise` with Gaussian noise, optionally equicorrelated
/// across outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPosterior {
    mu: Vec<f64>,
    noise_sd: f64,
    correlation: f64,
}

impl SyntheticPosterior {
    pub fn new(mu: Vec<f64>, noise_sd: f64, correlation: f64) -> Result<Self> {
        if mu.len() < 2 {
            return Err(Error::Domain("synthetic posterior needs N >= 2 outputs".into()));
        }
        if !(noise_sd >= 0.0) || !(0.0..1.0).contains(&correlation) {
            return Err(Error::Config(
                "noise_sd must be >= 0 and correlation in [0, 1)".into(),
            ));
        }
        Ok(SyntheticPosterior {
            mu,
            noise_sd,
            correlation,
        })
    }

    pub fn from_spec(spec: &PosteriorSpec, n: usize) -> Result<Self> {
        let mu = quantile_levels(n)
            .into_iter()
            .map(|t| spec.spread * (2.0 * t - 1.0))
            .collect();
        Self::new(mu, spec.noise_sd, spec.correlation)
    }

    pub fn n(&self) -> usize {
        self.mu.len()
    }

    pub fn means(&self) -> &[f64] {
        &self.mu
    }

    /// Closed-form epistemic variance: the per-output noise variance.
    pub fn epistemic(&self) -> f64 {
        self.noise_sd * self.noise_sd
    }

    /// Closed-form aleatoric variance: the variance over outputs of the means.
    pub fn aleatoric(&self) -> f64 {
        population_variance(&self.mu)
    }

    /// Expected value of the single-sample variance over outputs.
    pub fn biased_aleatoric_expectation(&self) -> f64 {
        let n = self.n() as f64;
        self.aleatoric() + self.epistemic() * (1.0 - self.correlation) * (1.0 - 1.0 / n)
    }

    pub fn sample_into(&self, rng: &mut Rng, out: &mut [f64]) {
        let shared: f64 = rng.sample(StandardNormal);
        let (a, b) = (self.correlation.sqrt(), (1.0 - self.correlation).sqrt());
        for (o, m) in out.iter_mut().zip(&self.mu) {
            let z: f64 = rng.sample(StandardNormal);
            *o = m + self.noise_sd * (a * shared + b * z);
        }
    }

    pub fn sample(&self, rng: &mut Rng) -> Vec<f64> {
        let mut v = vec![0.0; self.n()];
        self.sample_into(rng, &mut v);
        v
    }
}

fn chunk_sizes(total: usize) -> Vec<usize> {
    let base = total / CHUNKS;
    let extra = total % CHUNKS;
    (0..CHUNKS).map(|c| base + usize::from(c < extra)).collect()
}

/// Runs `draw` `total` times across the fixed chunks and concatenates the results in order.
fn monte_carlo<T: Send>(
    exec: Execution,
    total: usize,
    seed: u64,
    draw: impl Fn(&mut Rng) -> T + Sync + Send,
) -> Vec<T> {
    let sizes = chunk_sizes(total);
    par::map_range(exec, CHUNKS, |c| {
        let mut rng = seeded_rng(derive_seed(seed, c as u64));
        (0..sizes[c]).map(|_| draw(&mut rng)).collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionReport {
    pub total: f64,
    pub epistemic: f64,
    pub aleatoric: f64,
    pub abs_diff: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Checks `total == epistemic + aleatoric` on one sample matrix.
pub fn check_decomposition(samples: &[Vec<f64>]) -> Result<DecompositionReport> {
    if samples.len() < 2 || samples[0].len() < 2 {
        return Err(Error::Domain("decomposition check needs M >= 2 and N >= 2".into()));
    }
    let total = total_exact(samples)?;
    let epistemic = epistemic_exact(samples)?;
    let aleatoric = aleatoric_exact(samples)?;
    let abs_diff = (total - epistemic - aleatoric).abs();
    let tolerance = DECOMPOSITION_TOL * total.max(1.0);
    Ok(DecompositionReport {
        total,
        epistemic,
        aleatoric,
        abs_diff,
        tolerance,
        passed: abs_diff <= tolerance,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionSweepReport {
    pub matrices: usize,
    pub worst_relative_diff: f64,
    pub passed: bool,
}

/// Decomposition identity on `count` random matrices with `M, N` in `[2, 200]`.
pub fn decomposition_sweep(count: usize, seed: u64, exec: Execution) -> Result<DecompositionSweepReport> {
    let results = par::map_range(exec, count, |k| {
        let mut rng = seeded_rng(derive_seed(seed, k as u64));
        let m = rng.random_range(2..=200);
        let n = rng.random_range(2..=200);
        let scale = 10f64.powf(rng.random_range(-3.0..3.0));
        let offset = rng.random_range(-100.0..100.0);
        let samples: Vec<Vec<f64>> = (0..m)
            .map(|_| (0..n).map(|_| offset + scale * rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        check_decomposition(&samples)
    });
    let mut worst: f64 = 0.0;
    let mut passed = true;
    for r in results {
        let r = r?;
        worst = worst.max(r.abs_diff / r.total.max(1.0));
        passed &= r.passed;
    }
    Ok(DecompositionSweepReport {
        matrices: count,
        worst_relative_diff: worst,
        passed,
    })
}

/// Monte-Carlo mean of an estimator compared with its target value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimatorStat {
    pub mean: f64,
    pub se: f64,
    pub truth: f64,
    /// `(mean - truth) / se`; zero when both the error and the SE vanish.
    pub z: f64,
    /// Empirical variance of the estimator across draws.
    pub variance: f64,
}

impl EstimatorStat {
    fn new(values: &[f64], truth: f64) -> Self {
        let m = mean(values);
        let se = standard_error(values);
        let err = m - truth;
        // rounding-level errors count as exact even when the SE is ~0
        let z = if err.abs() <= 1e-12 * truth.abs().max(1.0) {
            0.0
        } else if se > 0.0 {
            err / se
        } else {
            f64::INFINITY
        };
        EstimatorStat {
            mean: m,
            se,
            truth,
            z,
            variance: sample_variance(values),
        }
    }

    pub fn within(&self, k: f64) -> bool {
        self.z.abs() <= k
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayPoint {
    pub n_quantiles: usize,
    pub epistemic_variance: f64,
    pub aleatoric_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnbiasednessReport {
    pub n_pairs: usize,
    pub n_quantiles: usize,
    pub epistemic: EstimatorStat,
    pub aleatoric: EstimatorStat,
    pub decay: Vec<DecayPoint>,
    /// Both estimator variances strictly decrease along `decay`.
    pub decay_monotone: bool,
    /// `N * variance` stays within a factor of 3 of its value at the smallest N.
    pub decay_scales_as_inverse_n: bool,
    pub passed: bool,
}

fn pair_estimates(post: &SyntheticPosterior, n_pairs: usize, seed: u64, exec: Execution) -> (Vec<f64>, Vec<f64>) {
    let draws = monte_carlo(exec, n_pairs, seed, |rng| {
        let a = post.sample(rng);
        let b = post.sample(rng);
        (epistemic_pair_unchecked(&a, &b), aleatoric_pair_unchecked(&a, &b))
    });
    draws.into_iter().unzip()
}

/// Two-sample estimators are unbiased and their variance decays with N.
pub fn check_unbiasedness(
    spec: &PosteriorSpec,
    n_pairs: usize,
    n_quantiles: usize,
    decay_ns: &[usize],
    seed: u64,
    exec: Execution,
) -> Result<UnbiasednessReport> {
    if n_pairs < 10_000 {
        return Err(Error::Domain(format!("unbiasedness check needs >= 10^4 pairs, got {n_pairs}")));
    }
    let post = SyntheticPosterior::from_spec(spec, n_quantiles)?;
    let (epi, alea) = pair_estimates(&post, n_pairs, seed, exec);
    let epistemic = EstimatorStat::new(&epi, post.epistemic());
    let aleatoric = EstimatorStat::new(&alea, post.aleatoric());

    let mut decay = Vec::with_capacity(decay_ns.len());
    for (k, &n) in decay_ns.iter().enumerate() {
        let post_n = SyntheticPosterior::from_spec(spec, n)?;
        let (e, a) = pair_estimates(&post_n, n_pairs, derive_seed(seed, 1000 + k as u64), exec);
        decay.push(DecayPoint {
            n_quantiles: n,
            epistemic_variance: sample_variance(&e),
            aleatoric_variance: sample_variance(&a),
        });
    }
    let decay_monotone = decay.windows(2).all(|w| {
        w[1].epistemic_variance < w[0].epistemic_variance
            && w[1].aleatoric_variance < w[0].aleatoric_variance
    });
    let decay_scales_as_inverse_n = match decay.first() {
        Some(first) => decay.iter().all(|p| {
            let ratio = |v: f64, v0: f64| (v * p.n_quantiles as f64) / (v0 * first.n_quantiles as f64);
            let re = ratio(p.epistemic_variance, first.epistemic_variance);
            let ra = ratio(p.aleatoric_variance, first.aleatoric_variance);
            // a zero-noise posterior has zero estimator variance everywhere
            let ok = |r: f64| r.is_nan() || (1.0 / 3.0..=3.0).contains(&r);
            ok(re) && ok(ra)
        }),
        None => true,
    };
    let zero_noise = spec.noise_sd == 0.0;
    let decay_ok = zero_noise || (decay_monotone && decay_scales_as_inverse_n);
    let passed = epistemic.within(SE_MULTIPLE) && aleatoric.within(SE_MULTIPLE) && decay_ok;
    Ok(UnbiasednessReport {
        n_pairs,
        n_quantiles,
        epistemic,
        aleatoric,
        decay,
        decay_monotone,
        decay_scales_as_inverse_n,
        passed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiasReport {
    pub n_samples: usize,
    pub n_quantiles: usize,
    pub mean_biased: f64,
    pub true_aleatoric: f64,
    pub gap: f64,
    pub gap_se: f64,
    pub expected_gap: f64,
    /// Gap consistent with `expected_gap` within the SE multiple.
    pub gap_matches: bool,
    /// Gap larger than the SE multiple (or exactly zero without dispersion).
    pub gap_positive: bool,
    pub passed: bool,
}

/// The single-network variance over quantiles overestimates the aleatoric
/// variance by the (decorrelated) epistemic variance times `1 - 1/N`.
pub fn check_single_network_bias(
    spec: &PosteriorSpec,
    n_samples: usize,
    n_quantiles: usize,
    seed: u64,
    exec: Execution,
) -> Result<BiasReport> {
    if n_samples < 10_000 {
        return Err(Error::Domain(format!("bias check needs >= 10^4 samples, got {n_samples}")));
    }
    let post = SyntheticPosterior::from_spec(spec, n_quantiles)?;
    let values = monte_carlo(exec, n_samples, seed, |rng| population_variance(&post.sample(rng)));
    let mean_biased = mean(&values);
    let gap_se = standard_error(&values);
    let true_aleatoric = post.aleatoric();
    let gap = mean_biased - true_aleatoric;
    let expected_gap = post.biased_aleatoric_expectation() - true_aleatoric;
    let (gap_matches, gap_positive) = if spec.noise_sd == 0.0 {
        let exact = gap.abs() <= 1e-12 * true_aleatoric.max(1.0);
        (exact, exact)
    } else {
        (
            (gap - expected_gap).abs() <= SE_MULTIPLE * gap_se,
            gap > SE_MULTIPLE * gap_se,
        )
    };
    Ok(BiasReport {
        n_samples,
        n_quantiles,
        mean_biased,
        true_aleatoric,
        gap,
        gap_se,
        expected_gap,
        gap_matches,
        gap_positive,
        passed: gap_matches && gap_positive,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClosedFormReport {
    pub n_samples: usize,
    pub epistemic_closed: f64,
    pub epistemic_empirical: f64,
    pub epistemic_tolerance: f64,
    pub aleatoric_closed: f64,
    pub aleatoric_empirical: f64,
    pub aleatoric_tolerance: f64,
    pub passed: bool,
}

/// Compares the closed-form moments of a synthetic posterior with streaming
/// brute-force ensemble statistics over `n_samples` rows.
pub fn verify_closed_form(
    post: &SyntheticPosterior,
    n_samples: usize,
    seed: u64,
    exec: Execution,
) -> Result<ClosedFormReport> {
    if n_samples < 2 {
        return Err(Error::Domain("need at least two samples".into()));
    }
    let n = post.n();
    let sizes = chunk_sizes(n_samples);
    // per-chunk column sums and sums of squares
    let partial = par::map_range(exec, CHUNKS, |c| {
        let mut rng = seeded_rng(derive_seed(seed, c as u64));
        let mut s1 = vec![0.0; n];
        let mut s2 = vec![0.0; n];
        let mut row = vec![0.0; n];
        for _ in 0..sizes[c] {
            post.sample_into(&mut rng, &mut row);
            for ((a, b), (v, m)) in s1.iter_mut().zip(s2.iter_mut()).zip(row.iter().zip(post.means())) {
                let d = v - m; // centered on the known mean for numerical stability
                *a += d;
                *b += d * d;
            }
        }
        (s1, s2)
    });
    let mut s1 = vec![0.0; n];
    let mut s2 = vec![0.0; n];
    for (a, b) in partial {
        s1.iter_mut().zip(&a).for_each(|(x, y)| *x += y);
        s2.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
    }
    let m = n_samples as f64;
    let col_means: Vec<f64> = s1.iter().zip(post.means()).map(|(s, mu)| mu + s / m).collect();
    let col_vars: Vec<f64> = s1.iter().zip(&s2).map(|(a, b)| b / m - (a / m) * (a / m)).collect();
    let epistemic_empirical = mean(&col_vars);
    let aleatoric_empirical = population_variance(&col_means);
    let s2_noise = post.epistemic();
    let epistemic_tolerance = SE_MULTIPLE * (2.0 / m).sqrt() * s2_noise + 1e-12;
    let sd_mu = post.aleatoric().sqrt();
    let aleatoric_tolerance =
        SE_MULTIPLE * (2.0 * post.noise_sd * sd_mu / m.sqrt() + s2_noise / m) + 1e-12;
    let passed = (epistemic_empirical - s2_noise).abs() <= epistemic_tolerance
        && (aleatoric_empirical - post.aleatoric()).abs() <= aleatoric_tolerance;
    Ok(ClosedFormReport {
        n_samples,
        epistemic_closed: s2_noise,
        epistemic_empirical,
        epistemic_tolerance,
        aleatoric_closed: post.aleatoric(),
        aleatoric_empirical,
        aleatoric_tolerance,
        passed,
    })
}

/// Mean pairwise Pearson correlation between output columns of the
/// deviations from the ensemble mean. Rows are ensemble members. Column
/// pairs with zero variance are skipped; `NaN` if none remain.
pub fn cross_output_correlation(rows: &[Vec<f64>]) -> f64 {
    let Some(first) = rows.first() else {
        return f64::NAN;
    };
    let n = first.len();
    let m = rows.len() as f64;
    let means: Vec<f64> = (0..n).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / m).collect();
    let dev: Vec<Vec<f64>> = (0..n)
        .map(|j| rows.iter().map(|r| r[j] - means[j]).collect())
        .collect();
    let norms: Vec<f64> = dev.iter().map(|d| d.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    let mut acc = 0.0;
    let mut pairs = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            if norms[i] == 0.0 || norms[j] == 0.0 {
                continue;
            }
            let c: f64 = dev[i].iter().zip(&dev[j]).map(|(a, b)| a * b).sum();
            acc += c / (norms[i] * norms[j]);
            pairs += 1;
        }
    }
    if pairs == 0 {
        f64::NAN
    } else {
        acc / pairs as f64
    }
}

/// Training setup of the width/correlation study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyConfig {
    pub widths: Vec<usize>,
    pub n_nets: usize,
    pub n_outputs: usize,
    pub hidden_layers: usize,
    pub train_steps: usize,
    pub learning_rate: f64,
    pub noise_scale: f64,
    /// Held-out inputs are an even grid over this interval.
    pub eval_range: (f64, f64),
    pub eval_points: usize,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            widths: vec![10, 100],
            n_nets: 30,
            n_outputs: 20,
            hidden_layers: 1,
            train_steps: 2000,
            learning_rate: 1e-2,
            noise_scale: 1.0,
            eval_range: (-5.0, 5.0),
            eval_points: 41,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WidthCorrelation {
    pub width: usize,
    pub median_correlation: f64,
    pub mean_correlation: f64,
    pub per_input: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationReport {
    pub n_nets: usize,
    pub results: Vec<WidthCorrelation>,
    pub passed: bool,
}

/// Trains one anchored multi-output quantile network on `data` with
/// full-batch Adam. Returns an error if training diverges.
pub fn train_anchored_quantile_net(
    sizes: &[usize],
    data: &[RegressionSample],
    steps: usize,
    learning_rate: f64,
    noise_scale: f64,
    seed: u64,
) -> Result<Network> {
    let mut net = Network::new(sizes, seed, InitRule::He, Activation::Relu)?;
    let mut adam = AdamState::new(&net, learning_rate, 1e-8)?;
    let n_out = net.output_dim();
    let taus = quantile_levels(n_out);
    let priors = net.prior_scales().to_vec();
    let scale = 1.0 / data.len() as f64;
    let mut grad = vec![0.0; n_out];
    let mut g = Gradients::zeros_like(&net);
    for _ in 0..steps {
        g.fill_zero();
        for s in data {
            let trace = net.forward_rows(&[s.x], 0..n_out);
            loss_and_gradient(&trace.output, &taus, &[s.y], Some(&mut grad));
            net.backward_trace(&trace, &grad, scale, &mut g);
        }
        net.add_anchored_penalty_gradient(&mut g, noise_scale, &priors, data.len())?;
        if !g.is_finite() {
            return Err(Error::Diverged(format!("non-finite gradient (seed {seed})")));
        }
        adam_step(&mut net, &g, &mut adam)?;
    }
    Ok(net)
}

/// Cross-output correlation of anchored multi-output networks versus width.
pub fn correlation_width_study(
    config: &StudyConfig,
    data: &[RegressionSample],
    seed: u64,
    exec: Execution,
) -> Result<CorrelationReport> {
    if config.widths.len() < 2 {
        return Err(Error::Config("width study needs at least two widths".into()));
    }
    if config.n_nets < 2 || config.n_outputs < 2 || config.eval_points < 1 || data.is_empty() {
        return Err(Error::Config("width study needs >= 2 nets, >= 2 outputs and data".into()));
    }
    let (lo, hi) = config.eval_range;
    let xs: Vec<f64> = (0..config.eval_points)
        .map(|k| {
            if config.eval_points == 1 {
                0.5 * (lo + hi)
            } else {
                lo + (hi - lo) * k as f64 / (config.eval_points - 1) as f64
            }
        })
        .collect();

    let mut results = Vec::with_capacity(config.widths.len());
    for (wi, &width) in config.widths.iter().enumerate() {
        let mut sizes = vec![1];
        sizes.extend(std::iter::repeat_n(width, config.hidden_layers.max(1)));
        sizes.push(config.n_outputs);
        let nets = par::map_range(exec, config.n_nets, |k| {
            train_anchored_quantile_net(
                &sizes,
                data,
                config.train_steps,
                config.learning_rate,
                config.noise_scale,
                derive_seed(seed, (wi * 100_000 + k) as u64),
            )
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let per_input: Vec<f64> = xs
            .iter()
            .map(|&x| {
                let rows: Vec<Vec<f64>> = nets.iter().map(|n| n.forward(&[x]).expect("1-d input")).collect();
                cross_output_correlation(&rows)
            })
            .collect();
        let finite: Vec<f64> = per_input.iter().copied().filter(|v| v.is_finite()).collect();
        results.push(WidthCorrelation {
            width,
            median_correlation: median(&finite),
            mean_correlation: mean(&finite),
            per_input,
        });
    }
    let narrowest = results
        .iter()
        .min_by_key(|r| r.width)
        .expect("non-empty")
        .median_correlation;
    let widest = results
        .iter()
        .max_by_key(|r| r.width)
        .expect("non-empty")
        .median_correlation;
    Ok(CorrelationReport {
        n_nets: config.n_nets,
        passed: widest < narrowest,
        results,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decomposition_limit_cases() {
        // identical rows: no epistemic part
        let rows = vec![vec![0.0, 1.0, 5.0]; 4];
        let r = check_decomposition(&rows).unwrap();
        assert!(r.passed);
        assert_eq!(r.epistemic, 0.0);
        assert!((r.total - r.aleatoric).abs() < 1e-15);
        // constant columns (rows differ by a constant): no aleatoric part
        let rows: Vec<Vec<f64>> = (0..4).map(|k| vec![k as f64; 3]).collect();
        let r = check_decomposition(&rows).unwrap();
        assert!(r.passed);
        assert_eq!(r.aleatoric, 0.0);
        assert!((r.total - r.epistemic).abs() < 1e-15);
        assert!(check_decomposition(&[vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn decomposition_on_random_100x50() {
        let mut rng = seeded_rng(8);
        let rows: Vec<Vec<f64>> = (0..100)
            .map(|_| (0..50).map(|_| rng.random_range(-3.0..7.0)).collect())
            .collect();
        assert!(check_decomposition(&rows).unwrap().passed);
    }

    #[test]
    fn zero_noise_posterior_is_exact() {
        let spec = PosteriorSpec {
            noise_sd: 0.0,
            ..PosteriorSpec::default()
        };
        let r = check_unbiasedness(&spec, 10_000, 50, &[10, 50], 1, Execution::Sequential).unwrap();
        assert_eq!(r.epistemic.mean, 0.0);
        assert!((r.aleatoric.mean - r.aleatoric.truth).abs() < 1e-12);
        assert!(r.passed);
        let b = check_single_network_bias(&spec, 10_000, 50, 1, Execution::Sequential).unwrap();
        assert!(b.gap.abs() < 1e-12);
        assert!(b.passed);
    }

    #[test]
    fn small_sample_counts_rejected() {
        let spec = PosteriorSpec::default();
        assert!(check_unbiasedness(&spec, 10, 50, &[], 0, Execution::Sequential).is_err());
        assert!(check_single_network_bias(&spec, 10, 50, 0, Execution::Sequential).is_err());
    }

    #[test]
    fn results_independent_of_execution_mode() {
        let spec = PosteriorSpec::default();
        let a = check_single_network_bias(&spec, 10_000, 20, 3, Execution::Sequential).unwrap();
        let b = check_single_network_bias(&spec, 10_000, 20, 3, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn correlation_of_identical_outputs_is_one() {
        let rows: Vec<Vec<f64>> = (0..10).map(|k| vec![(k as f64).sin(); 5]).collect();
        assert!((cross_output_correlation(&rows) - 1.0).abs() < 1e-12);
        let flat = vec![vec![1.0, 2.0]; 3];
        assert!(cross_output_correlation(&flat).is_nan());
    }

    #[test]
    fn closed_form_agrees_with_brute_force() {
        for corr in [0.0, 0.5] {
            let post = SyntheticPosterior::from_spec(
                &PosteriorSpec {
                    correlation: corr,
                    ..PosteriorSpec::default()
                },
                20,
            )
            .unwrap();
            let r = verify_closed_form(&post, 200_000, 4, Execution::Parallel).unwrap();
            assert!(r.passed, "{r:?}");
        }
    }

    #[test]
    fn width_study_rejects_single_width() {
        let cfg = StudyConfig {
            widths: vec![10],
            ..StudyConfig::default()
        };
        let data = [RegressionSample { x: 0.0, y: 0.0 }];
        assert!(correlation_width_study(&cfg, &data, 0, Execution::Sequential).is_err());
    }
}
