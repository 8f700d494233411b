use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use uadqn::agents::Policy;
use uadqn::harness::{
    parse_config, plot_falls, plot_profile, run_policy_comparison, run_regression_demo,
    run_validation, split_override, write_validation_report, CheckSet, Experiment, RunConfig,
    OUTPUT_ROOT_ENV,
};
use uadqn::par::Execution;

/// Uncertainty-aware distributional RL experiments.
#[derive(Debug, Parser)]
#[command(name = "uadqn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Multi-seed training on the windy-cliff gridworld.
    TrainGridworld(TrainArgs),
    /// Uncertainty profile of two anchored quantile networks on toy data.
    RegressionDemo(DemoArgs),
    /// Monte-Carlo checks of the uncertainty estimators.
    Validate(ValidateArgs),
    /// Rebuild SVG figures from run directories.
    Plot(PlotArgs),
}

/// Options shared by the experiment subcommands. Precedence: defaults, then
/// `--config`, then `--set`, then the dedicated flags.
#[derive(Debug, Args)]
struct CommonArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any configuration key, e.g. `--set agent.beta=0.1` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory (relative paths are resolved against $UADQN_OUTPUT_ROOT).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    first_seed: Option<u64>,
    /// Environment steps per seed.
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    emit_svg: bool,
    #[arg(long)]
    aggregate_every: Option<u64>,
    #[arg(long)]
    trailing_window: Option<usize>,
    /// Run on one thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Policy to train (repeatable; `all` for every policy). Defaults to `agent.policy`.
    #[arg(long = "policy", value_name = "POLICY")]
    policies: Vec<String>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    n_quantiles: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    wind_probability: Option<f64>,
    /// Exit with status 1 unless ua_variant2 ends with fewer mean falls than
    /// ua_variant1 and eps_greedy_qr, with a 95% interval disjoint from eps_greedy_qr's.
    #[arg(long)]
    check: bool,
}

#[derive(Debug, Args)]
struct DemoArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Exit with status 1 unless the in-gap epistemic sd is at least 3x the
    /// in-cluster one and the aleatoric sd follows the noise profile.
    #[arg(long)]
    check: bool,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Total = epistemic + aleatoric on random ensembles.
    #[arg(long)]
    decomposition: bool,
    /// Two-sample estimators are unbiased; their variance decays with N.
    #[arg(long)]
    unbiasedness: bool,
    /// Single-network aleatoric estimate is biased upward.
    #[arg(long)]
    bias: bool,
    /// Closed-form moments of the synthetic posterior.
    #[arg(long)]
    closed_form: bool,
    /// Cross-output correlation shrinks with width.
    #[arg(long)]
    width_study: bool,
}

#[derive(Debug, Args)]
struct PlotArgs {
    /// Run directories: each holds `aggregate.csv` (falls) or `profile.csv` (regression).
    #[arg(required = true)]
    dirs: Vec<PathBuf>,
    /// Output SVG file.
    #[arg(long)]
    out: PathBuf,
}

/// Failure classes mapped to exit codes.
enum Failure {
    /// A requested check did not hold.
    Check(String),
    /// Bad configuration or arguments.
    Usage(String),
    /// Any other runtime error.
    Runtime(String),
}

impl From<uadqn::Error> for Failure {
    fn from(e: uadqn::Error) -> Self {
        match e {
            uadqn::Error::Config(_) | uadqn::Error::Parse(_) => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::TrainGridworld(a) => train(a),
        Command::RegressionDemo(a) => demo(a),
        Command::Validate(a) => validate(a),
        Command::Plot(a) => plot(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(m)) => {
            eprintln!("check failed: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

fn push<T: ToString>(ov: &mut Vec<(String, String)>, key: &str, v: Option<T>) {
    if let Some(v) = v {
        ov.push((key.to_string(), v.to_string()));
    }
}

fn toml_string(s: &str) -> String {
    format!("{s:?}")
}

/// Resolves the configuration and the output directory.
fn resolve(
    common: &CommonArgs,
    experiment: Experiment,
    extra: Vec<(String, String)>,
) -> Result<(RunConfig, PathBuf, Execution), Failure> {
    let mut ov = common
        .set
        .iter()
        .map(|s| split_override(s))
        .collect::<Result<Vec<_>, _>>()?;
    push(&mut ov, "seeds", common.seeds);
    push(&mut ov, "first_seed", common.first_seed);
    push(&mut ov, "steps", common.steps);
    push(&mut ov, "aggregate_every", common.aggregate_every);
    push(&mut ov, "trailing_window", common.trailing_window);
    push(&mut ov, "output_dir", common.out.as_ref().map(|p| toml_string(&p.to_string_lossy())));
    if common.emit_svg {
        ov.push(("emit_svg".into(), "true".into()));
    }
    ov.extend(extra);
    let cfg = parse_config(common.config.as_deref(), Some(experiment), &ov)?;
    let root = std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from);
    let out = cfg.resolved_output_dir(root.as_deref());
    let exec = if common.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    Ok((cfg, out, exec))
}

fn parse_policies(raw: &[String], default: Policy) -> Result<Vec<Policy>, Failure> {
    if raw.is_empty() {
        return Ok(vec![default]);
    }
    if raw.iter().any(|p| p == "all") {
        return Ok(Policy::ALL.to_vec());
    }
    let mut out = Vec::new();
    for p in raw.iter().flat_map(|s| s.split(',')) {
        let p = Policy::parse(p.trim())?;
        if !out.contains(&p) {
            out.push(p);
        }
    }
    Ok(out)
}

fn train(a: TrainArgs) -> Result<(), Failure> {
    let mut extra = Vec::new();
    push(&mut extra, "agent.lambda", a.lambda);
    push(&mut extra, "agent.beta", a.beta);
    push(&mut extra, "agent.gamma", a.gamma);
    push(&mut extra, "agent.n_quantiles", a.n_quantiles);
    push(&mut extra, "agent.learning_rate", a.learning_rate);
    push(&mut extra, "env.wind_probability", a.wind_probability);
    let (cfg, out, exec) = resolve(&a.common, Experiment::Gridworld, extra)?;
    let policies = parse_policies(&a.policies, cfg.agent.policy)?;
    cfg.echo_to(&out)?;
    let runs = run_policy_comparison(&cfg, &policies, &out, exec)?;
    for r in &runs {
        let s = &r.summary;
        println!(
            "{:<16} seeds={} final_falls={:.2} [{:.2}, {:.2}] episodes={:.1} non_greedy={:.3}",
            s.policy,
            s.seeds,
            s.final_falls.mean,
            s.final_falls.lower,
            s.final_falls.upper,
            s.mean_episodes,
            s.mean_non_greedy_fraction
        );
    }
    println!("wrote {}", out.display());
    if a.check {
        let find = |p: Policy| runs.iter().find(|r| r.summary.policy == p.as_str()).map(|r| r.summary.final_falls);
        let (Some(v2), Some(v1), Some(qr)) = (
            find(Policy::UaVariant2),
            find(Policy::UaVariant1),
            find(Policy::EpsGreedyQr),
        ) else {
            return Err(Failure::Usage(
                "--check needs ua_variant2, ua_variant1 and eps_greedy_qr".into(),
            ));
        };
        let ok = v2.mean < v1.mean && v2.mean < qr.mean && !v2.overlaps(&qr);
        if !ok {
            return Err(Failure::Check(format!(
                "falls ordering: ua_variant2 {:.2}, ua_variant1 {:.2}, eps_greedy_qr {:.2}",
                v2.mean, v1.mean, qr.mean
            )));
        }
    }
    Ok(())
}

fn demo(a: DemoArgs) -> Result<(), Failure> {
    let (cfg, out, exec) = resolve(&a.common, Experiment::Regression, Vec::new())?;
    cfg.echo_to(&out)?;
    let run = run_regression_demo(&cfg.regression, cfg.first_seed, cfg.emit_svg, &out, exec)?;
    let s = &run.summary;
    println!(
        "epistemic sd: gap {:.4} / clusters {:.4} = {:.2}x",
        s.gap_median_epistemic_sd, s.cluster_median_epistemic_sd, s.epistemic_ratio
    );
    println!(
        "aleatoric sd: low-noise cluster {:.4}, high-noise cluster {:.4}",
        s.low_noise_median_aleatoric_sd, s.high_noise_median_aleatoric_sd
    );
    println!("wrote {}", out.display());
    if a.check {
        let ok = s.epistemic_ratio >= 3.0
            && s.high_noise_median_aleatoric_sd > s.low_noise_median_aleatoric_sd
            && s.max_total_residual == 0.0;
        if !ok {
            return Err(Failure::Check("regression profile does not show the expected pattern".into()));
        }
    }
    Ok(())
}

fn validate(a: ValidateArgs) -> Result<(), Failure> {
    let (cfg, out, exec) = resolve(&a.common, Experiment::Validate, Vec::new())?;
    let selected = CheckSet {
        decomposition: a.decomposition,
        unbiasedness: a.unbiasedness,
        bias: a.bias,
        closed_form: a.closed_form,
        width_study: a.width_study,
    };
    let checks = if selected == CheckSet::NONE {
        CheckSet::ALL
    } else {
        selected
    };
    cfg.echo_to(&out)?;
    let report = run_validation(&cfg.validate, checks, exec)?;
    write_validation_report(&report, &out)?;
    for (name, ok) in report.outcomes() {
        println!("{:<14} {}", name, if ok { "PASS" } else { "FAIL" });
    }
    println!("wrote {}", out.join("report.json").display());
    if report.passed {
        Ok(())
    } else {
        Err(Failure::Check("one or more validation checks failed".into()))
    }
}

fn plot(a: PlotArgs) -> Result<(), Failure> {
    let falls: Vec<&Path> = a
        .dirs
        .iter()
        .filter(|d| d.join("aggregate.csv").is_file())
        .map(PathBuf::as_path)
        .collect();
    if falls.len() == a.dirs.len() {
        plot_falls(&falls, &a.out)?;
    } else if let [dir] = a.dirs.as_slice() {
        if !dir.join("profile.csv").is_file() {
            return Err(Failure::Usage(format!(
                "{} holds neither aggregate.csv nor profile.csv",
                dir.display()
            )));
        }
        plot_profile(dir, &a.out)?;
    } else {
        return Err(Failure::Usage(
            "every directory needs an aggregate.csv (or pass a single regression directory)".into(),
        ));
    }
    println!("wrote {}", a.out.display());
    Ok(())
}
