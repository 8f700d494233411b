//! The `validate` experiment: Monte-Carlo checks of the estimator properties.

use std::path::Path;

use serde::Serialize;

use super::config::ValidateConfig;
use super::gridworld::write_json;
use crate::envs::{regression_dataset, RegressionConfig};
use crate::par::Execution;
use crate::validation::{
    check_single_network_bias, check_unbiasedness, correlation_width_study, decomposition_sweep,
    verify_closed_form, BiasReport, ClosedFormReport, CorrelationReport, DecompositionSweepReport,
    SyntheticPosterior, UnbiasednessReport,
};
use crate::{derive_seed, Result};

/// Which checks to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckSet {
    pub decomposition: bool,
    pub unbiasedness: bool,
    pub bias: bool,
    pub closed_form: bool,
    pub width_study: bool,
}

impl CheckSet {
    pub const ALL: CheckSet = CheckSet {
        decomposition: true,
        unbiasedness: true,
        bias: true,
        closed_form: true,
        width_study: true,
    };
    pub const NONE: CheckSet = CheckSet {
        decomposition: false,
        unbiasedness: false,
        bias: false,
        closed_form: false,
        width_study: false,
    };
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decomposition: Option<DecompositionSweepReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unbiasedness: Option<UnbiasednessReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bias: Option<BiasReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub closed_form: Option<ClosedFormReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub width_study: Option<CorrelationReport>,
    pub passed: bool,
}

impl ValidationReport {
    /// `(name, passed)` for every check that ran.
    pub fn outcomes(&self) -> Vec<(&'static str, bool)> {
        let mut v = Vec::new();
        if let Some(r) = &self.decomposition {
            v.push(("decomposition", r.passed));
        }
        if let Some(r) = &self.unbiasedness {
            v.push(("unbiasedness", r.passed));
        }
        if let Some(r) = &self.bias {
            v.push(("bias", r.passed));
        }
        if let Some(r) = &self.closed_form {
            v.push(("closed_form", r.passed));
        }
        if let Some(r) = &self.width_study {
            v.push(("width_study", r.passed));
        }
        v
    }
}

/// Runs the selected checks; each uses its own seed stream of `cfg.seed`.
pub fn run_validation(cfg: &ValidateConfig, checks: CheckSet, exec: Execution) -> Result<ValidationReport> {
    let s = |k| derive_seed(cfg.seed, k);
    let decomposition = checks
        .decomposition
        .then(|| decomposition_sweep(cfg.decomposition_matrices, s(1), exec))
        .transpose()?;
    let unbiasedness = checks
        .unbiasedness
        .then(|| {
            check_unbiasedness(
                &cfg.posterior,
                cfg.n_pairs,
                cfg.n_quantiles,
                &cfg.decay_quantiles,
                s(2),
                exec,
            )
        })
        .transpose()?;
    let bias = checks
        .bias
        .then(|| check_single_network_bias(&cfg.posterior, cfg.bias_samples, cfg.n_quantiles, s(3), exec))
        .transpose()?;
    let closed_form = checks
        .closed_form
        .then(|| {
            let post = SyntheticPosterior::from_spec(&cfg.posterior, cfg.n_quantiles)?;
            verify_closed_form(&post, cfg.closed_form_samples, s(4), exec)
        })
        .transpose()?;
    let width_study = checks
        .width_study
        .then(|| {
            let data = regression_dataset(cfg.study_points, s(5), &RegressionConfig::default())?;
            correlation_width_study(&cfg.study, &data, s(6), exec)
        })
        .transpose()?;
    let mut report = ValidationReport {
        decomposition,
        unbiasedness,
        bias,
        closed_form,
        width_study,
        passed: true,
    };
    report.passed = report.outcomes().iter().all(|&(_, ok)| ok);
    Ok(report)
}

/// Writes the report as `report.json` in `out`.
pub fn write_validation_report(report: &ValidationReport, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| crate::Error::io(out, e))?;
    write_json(&out.join("report.json"), report)
}
