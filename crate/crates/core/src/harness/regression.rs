//! Toy-regression uncertainty profile from two anchored quantile networks.

use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::RegressionDemoConfig;
use super::gridworld::write_json;
use super::metrics::{fmt_real, write_csv};
use super::plots::plot_profile;
use crate::envs::{regression_dataset, RegressionSample, LEFT_CLUSTER, RIGHT_CLUSTER};
use crate::par::{self, Execution};
use crate::stats::{mean, median};
use crate::uncertainty::UncertaintyEstimate;
use crate::validation::train_anchored_quantile_net;
use crate::{derive_seed, Result};

/// Uncertainty at one grid input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfilePoint {
    pub x: f64,
    /// Mean over both networks and all quantiles.
    pub mean: f64,
    pub estimate: UncertaintyEstimate,
}

pub const PROFILE_HEADER: [&str; 8] = [
    "x",
    "mean",
    "epistemic_var",
    "aleatoric_var",
    "total_var",
    "epistemic_sd",
    "aleatoric_sd",
    "total_sd",
];

/// Medians of the profile over the gap and the two clusters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionSummary {
    pub gap_median_epistemic_sd: f64,
    pub cluster_median_epistemic_sd: f64,
    /// `gap / cluster`.
    pub epistemic_ratio: f64,
    pub low_noise_median_aleatoric_sd: f64,
    pub high_noise_median_aleatoric_sd: f64,
    /// Largest `|total - (epistemic + aleatoric)|` over the profile.
    pub max_total_residual: f64,
}

#[derive(Debug, Clone)]
pub struct RegressionRun {
    pub data: Vec<RegressionSample>,
    pub profile: Vec<ProfilePoint>,
    pub summary: RegressionSummary,
    pub profile_file: PathBuf,
}

fn grid(cfg: &RegressionDemoConfig) -> Vec<f64> {
    let (lo, hi) = cfg.grid_range;
    let n = cfg.grid_points;
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

fn inside(x: f64, (lo, hi): (f64, f64)) -> bool {
    lo <= x && x <= hi
}

pub fn summarize(profile: &[ProfilePoint]) -> RegressionSummary {
    let pick = |pred: &dyn Fn(f64) -> bool, f: &dyn Fn(&ProfilePoint) -> f64| -> f64 {
        let v: Vec<f64> = profile.iter().filter(|p| pred(p.x)).map(f).collect();
        median(&v)
    };
    let epi = |p: &ProfilePoint| p.estimate.epistemic_std();
    let alea = |p: &ProfilePoint| p.estimate.aleatoric_std();
    let gap = pick(&|x| LEFT_CLUSTER.1 < x && x < RIGHT_CLUSTER.0, &epi);
    let cluster = pick(&|x| inside(x, LEFT_CLUSTER) || inside(x, RIGHT_CLUSTER), &epi);
    RegressionSummary {
        gap_median_epistemic_sd: gap,
        cluster_median_epistemic_sd: cluster,
        epistemic_ratio: gap / cluster,
        low_noise_median_aleatoric_sd: pick(&|x| inside(x, LEFT_CLUSTER), &alea),
        high_noise_median_aleatoric_sd: pick(&|x| inside(x, RIGHT_CLUSTER), &alea),
        max_total_residual: profile
            .iter()
            .map(|p| (p.estimate.total_var - (p.estimate.epistemic_var + p.estimate.aleatoric_var)).abs())
            .fold(0.0, f64::max),
    }
}

/// Trains two anchored `n_quantiles`-output networks on the toy dataset and
/// writes `dataset.csv`, `profile.csv`, `summary.json` (and `profile.svg`
/// with `emit_svg`) into `out`.
pub fn run_regression_demo(
    cfg: &RegressionDemoConfig,
    seed: u64,
    emit_svg: bool,
    out: &Path,
    exec: Execution,
) -> Result<RegressionRun> {
    let data = regression_dataset(cfg.n_points, cfg.data_seed, &cfg.data)?;
    let mut sizes = vec![1];
    sizes.extend(&cfg.hidden);
    sizes.push(cfg.n_quantiles);
    let nets = par::map_range(exec, 2, |k| {
        train_anchored_quantile_net(
            &sizes,
            &data,
            cfg.train_steps,
            cfg.learning_rate,
            cfg.noise_scale,
            derive_seed(seed, k as u64),
        )
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let profile = grid(cfg)
        .into_iter()
        .map(|x| {
            let qa = nets[0].forward(&[x])?;
            let qb = nets[1].forward(&[x])?;
            Ok(ProfilePoint {
                x,
                mean: 0.5 * (mean(&qa) + mean(&qb)),
                estimate: UncertaintyEstimate::from_pair(&qa, &qb)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(&profile);

    std::fs::create_dir_all(out).map_err(|e| crate::Error::io(out, e))?;
    let data_rows: Vec<[String; 2]> = data.iter().map(|s| [fmt_real(s.x), fmt_real(s.y)]).collect();
    write_csv(&out.join("dataset.csv"), &["x", "y"], &data_rows)?;
    let rows: Vec<[String; 8]> = profile
        .iter()
        .map(|p| {
            let e = &p.estimate;
            [
                fmt_real(p.x),
                fmt_real(p.mean),
                fmt_real(e.epistemic_var),
                fmt_real(e.aleatoric_var),
                fmt_real(e.total_var),
                fmt_real(e.epistemic_std()),
                fmt_real(e.aleatoric_std()),
                fmt_real(e.total_std()),
            ]
        })
        .collect();
    let profile_file = out.join("profile.csv");
    write_csv(&profile_file, &PROFILE_HEADER, &rows)?;
    write_json(&out.join("summary.json"), &summary)?;
    if emit_svg {
        plot_profile(out, &out.join("profile.svg"))?;
    }
    Ok(RegressionRun {
        data,
        profile,
        summary,
        profile_file,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_demo_writes_consistent_profile() {
        let cfg = RegressionDemoConfig {
            n_points: 20,
            n_quantiles: 8,
            hidden: vec![8],
            train_steps: 20,
            grid_points: 9,
            ..RegressionDemoConfig::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let run = run_regression_demo(&cfg, 1, true, dir.path(), Execution::Sequential).unwrap();
        assert_eq!(run.profile.len(), 9);
        assert_eq!(run.summary.max_total_residual, 0.0);
        for f in ["dataset.csv", "profile.csv", "summary.json", "profile.svg"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let cols = super::super::metrics::read_columns(
            &run.profile_file,
            &["epistemic_var", "aleatoric_var", "total_var"],
        )
        .unwrap();
        for ((t, e), a) in cols[2].iter().zip(&cols[0]).zip(&cols[1]) {
            assert_eq!(*t, e + a);
        }
    }
}
