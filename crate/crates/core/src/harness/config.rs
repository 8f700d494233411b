use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::AgentConfig;
use crate::envs::{GridConfig, RegressionConfig};
use crate::validation::{PosteriorSpec, StudyConfig};
use crate::{Error, Result};

/// Environment variable naming the root directory for relative output paths.
pub const OUTPUT_ROOT_ENV: &str = "UADQN_OUTPUT_ROOT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    #[default]
    Gridworld,
    Regression,
    Validate,
}

/// Toy-regression uncertainty demo.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegressionDemoConfig {
    pub n_points: usize,
    pub data_seed: u64,
    pub n_quantiles: usize,
    pub hidden: Vec<usize>,
    pub train_steps: usize,
    pub learning_rate: f64,
    pub noise_scale: f64,
    pub grid_range: (f64, f64),
    pub grid_points: usize,
    pub data: RegressionConfig,
}

impl Default for RegressionDemoConfig {
    fn default() -> Self {
        RegressionDemoConfig {
            n_points: 200,
            data_seed: 0,
            n_quantiles: 50,
            hidden: vec![64, 64],
            train_steps: 3000,
            learning_rate: 3e-3,
            noise_scale: 1.0,
            grid_range: (-4.0, 4.0),
            grid_points: 161,
            data: RegressionConfig::default(),
        }
    }
}

/// Settings of the `validate` checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateConfig {
    pub seed: u64,
    pub decomposition_matrices: usize,
    pub n_pairs: usize,
    pub n_quantiles: usize,
    pub decay_quantiles: Vec<usize>,
    pub bias_samples: usize,
    pub closed_form_samples: usize,
    pub posterior: PosteriorSpec,
    pub study: StudyConfig,
    pub study_points: usize,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        ValidateConfig {
            seed: 0,
            decomposition_matrices: 1000,
            n_pairs: 100_000,
            n_quantiles: 50,
            decay_quantiles: vec![10, 50, 250],
            bias_samples: 100_000,
            closed_form_samples: 1_000_000,
            posterior: PosteriorSpec::default(),
            study: StudyConfig::default(),
            study_points: 40,
        }
    }
}

/// Fully resolved run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub seeds: usize,
    pub first_seed: u64,
    /// Environment steps per seed.
    pub steps: u64,
    pub output_dir: PathBuf,
    pub emit_svg: bool,
    /// Step spacing of the aggregate cumulative-falls curve.
    pub aggregate_every: u64,
    /// Window (in steps) of the non-greedy action fraction.
    pub trailing_window: usize,
    pub agent: AgentConfig,
    pub env: GridConfig,
    pub regression: RegressionDemoConfig,
    pub validate: ValidateConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            experiment: Experiment::default(),
            seeds: 30,
            first_seed: 0,
            steps: 20_000,
            output_dir: PathBuf::from("runs"),
            emit_svg: false,
            aggregate_every: 100,
            trailing_window: 100,
            agent: AgentConfig::default(),
            env: GridConfig::default(),
            regression: RegressionDemoConfig::default(),
            validate: ValidateConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds == 0 {
            return Err(Error::Config("seeds must be positive".into()));
        }
        if self.steps == 0 || self.aggregate_every == 0 || self.trailing_window == 0 {
            return Err(Error::Config(
                "steps, aggregate_every and trailing_window must be positive".into(),
            ));
        }
        self.agent.validate()?;
        self.env.validate()?;
        let r = &self.regression;
        if r.n_points == 0 || r.n_quantiles < 2 || r.grid_points < 2 || r.hidden.contains(&0) {
            return Err(Error::Config("invalid regression settings".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    /// `output_dir` joined onto `root` when it is relative.
    pub fn resolved_output_dir(&self, root: Option<&Path>) -> PathBuf {
        match root {
            Some(r) if self.output_dir.is_relative() => r.join(&self.output_dir),
            _ => self.output_dir.clone(),
        }
    }

    /// Writes the resolved configuration to `dir/config.toml`.
    pub fn echo_to(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("config.toml");
        std::fs::write(&path, self.to_toml()).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

/// Builds a [`RunConfig`] from an optional TOML file, the experiment tag and
/// `key=value` overrides (dotted keys address nested tables, e.g.
/// `agent.lambda=0.5`). Overrides win over file values; unknown keys are
/// rejected with the offending key named.
pub fn parse_config(
    path: Option<&Path>,
    experiment: Option<Experiment>,
    overrides: &[(String, String)],
) -> Result<RunConfig> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            text.parse::<toml::Table>()
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => toml::Table::new(),
    };
    if let Some(exp) = experiment {
        let v = toml::Value::try_from(exp).expect("enum serializes");
        table.insert("experiment".into(), v);
    }
    for (key, raw) in overrides {
        set_dotted(&mut table, key, parse_value(raw))?;
    }
    let config: RunConfig = table
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
    config.validate()?;
    Ok(config)
}

/// Parses `raw` as a TOML value, falling back to a plain string.
fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| {
        Error::Config(format!("empty override key `{key}`"))
    })?;
    let mut cur = table;
    for p in parts {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("`{p}` in `{key}` is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Splits `key=value`.
pub fn split_override(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{s}` is not key=value")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::Policy;

    fn ov(k: &str, v: &str) -> (String, String) {
        (k.to_string(), v.to_string())
    }

    #[test]
    fn empty_config_gives_table_defaults() {
        let c = parse_config(None, Some(Experiment::Gridworld), &[]).unwrap();
        assert_eq!(c.experiment, Experiment::Gridworld);
        assert_eq!(c.agent.n_quantiles, 50);
        assert_eq!(c.agent.gamma, 0.99);
        assert_eq!(c.agent.learning_rate, 1e-4);
        assert_eq!(c.seeds, 30);
        assert_eq!(c.steps, 20_000);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = parse_config(None, None, &[ov("agent.lamda", "0.5")]).unwrap_err();
        assert!(err.to_string().contains("lamda"), "{err}");
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "lamda = 1\n").unwrap();
        let err = parse_config(Some(&p), None, &[]).unwrap_err();
        assert!(err.to_string().contains("lamda"), "{err}");
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "seeds = 3\n[agent]\nlambda = 0.0\npolicy = \"ua_variant1\"\n").unwrap();
        let c = parse_config(Some(&p), None, &[ov("agent.lambda", "0.5")]).unwrap();
        assert_eq!(c.agent.lambda, 0.5);
        assert_eq!(c.seeds, 3);
        assert_eq!(c.agent.policy, Policy::UaVariant1);
        let c = parse_config(Some(&p), None, &[ov("agent.policy", "eps_greedy_qr"), ov("agent.hidden", "[8, 8]")]).unwrap();
        assert_eq!(c.agent.policy, Policy::EpsGreedyQr);
        assert_eq!(c.agent.hidden, vec![8, 8]);
    }

    #[test]
    fn resolved_config_round_trips() {
        let c = parse_config(None, Some(Experiment::Regression), &[ov("steps", "123")]).unwrap();
        let back: RunConfig = toml::from_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(parse_config(None, None, &[ov("seeds", "0")]).is_err());
        assert!(parse_config(None, None, &[ov("agent.gamma", "2.0")]).is_err());
        assert!(split_override("novalue").is_err());
        assert_eq!(split_override("a.b = 3").unwrap(), ov("a.b", "3"));
    }

    #[test]
    fn output_root_applies_to_relative_dirs() {
        let c = RunConfig::default();
        assert_eq!(c.resolved_output_dir(Some(Path::new("/tmp/x"))), PathBuf::from("/tmp/x/runs"));
        let abs = RunConfig {
            output_dir: PathBuf::from("/abs"),
            ..RunConfig::default()
        };
        assert_eq!(abs.resolved_output_dir(Some(Path::new("/tmp/x"))), PathBuf::from("/abs"));
    }
}
