//! Multi-seed gridworld training runs.

use std::collections::VecDeque;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::RunConfig;
use super::plots::plot_falls;
use super::metrics::{
    aggregate, write_aggregate, write_metrics, AggregateRow, Checkpoint, MetricsRow,
};
use crate::agents::{run_episode, Agent, Policy, ReplayBuffer};
use crate::envs::{TerminalCause, WindyCliff, N_ACTIONS, N_CELLS};
use crate::par::{self, Execution};
use crate::stats::MeanCi;
use crate::{derive_seed, seeded_rng, Error, Result};

/// Everything one seed produced.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    pub rows: Vec<MetricsRow>,
    pub checkpoints: Vec<Checkpoint>,
    pub total_falls: u64,
    pub episodes: u64,
    pub non_greedy_steps: u64,
    pub steps: u64,
}

impl SeedRun {
    pub fn non_greedy_fraction(&self) -> f64 {
        self.non_greedy_steps as f64 / self.steps as f64
    }
}

/// Checkpoint grid: multiples of `every` up to `steps`, with `steps` always last.
pub fn checkpoint_steps(steps: u64, every: u64) -> Vec<u64> {
    let mut v: Vec<u64> = (1..=steps / every).map(|k| k * every).collect();
    if v.last() != Some(&steps) {
        v.push(steps);
    }
    v
}

/// Trains one agent for `cfg.steps` environment steps on seed `seed`.
pub fn run_seed(cfg: &RunConfig, seed: u64) -> Result<SeedRun> {
    let mut agent = Agent::new(cfg.agent.clone(), N_CELLS, N_ACTIONS, derive_seed(seed, 0))?;
    let mut env = WindyCliff::new(cfg.env)?;
    let mut buffer = ReplayBuffer::new(cfg.agent.buffer_capacity)?;
    let mut rng = seeded_rng(derive_seed(seed, 1));

    let grid = checkpoint_steps(cfg.steps, cfg.aggregate_every);
    let mut next_ck = 0;
    let mut run = SeedRun {
        seed,
        rows: Vec::new(),
        checkpoints: Vec::with_capacity(grid.len()),
        total_falls: 0,
        episodes: 0,
        non_greedy_steps: 0,
        steps: 0,
    };
    let mut window: VecDeque<bool> = VecDeque::with_capacity(cfg.trailing_window);
    let mut window_non_greedy = 0usize;
    let mut global_step = 0u64;

    while global_step < cfg.steps {
        let budget = (cfg.steps - global_step) as usize;
        let (mut epi_sum, mut alea_sum, mut n_unc) = (0.0, 0.0, 0usize);
        let episodes_done = run.episodes;
        let out = run_episode(
            &mut agent,
            &mut env,
            &mut buffer,
            &mut rng,
            true,
            &mut global_step,
            Some(budget),
            |rec| {
                if let Some(u) = rec.uncertainty {
                    epi_sum += u.epistemic_var;
                    alea_sum += u.aleatoric_var;
                    n_unc += 1;
                }
                if window.len() == cfg.trailing_window && window.pop_front() == Some(true) {
                    window_non_greedy -= 1;
                }
                let non_greedy = !rec.greedy;
                window.push_back(non_greedy);
                if non_greedy {
                    window_non_greedy += 1;
                    run.non_greedy_steps += 1;
                }
                if rec.cause == TerminalCause::Fell {
                    run.total_falls += 1;
                }
                let done = rec.global_step + 1;
                if next_ck < grid.len() && grid[next_ck] == done {
                    run.checkpoints.push(Checkpoint {
                        step: done,
                        falls: run.total_falls,
                        episodes: episodes_done,
                    });
                    next_ck += 1;
                }
            },
        )?;
        run.episodes += 1;
        // A checkpoint on the episode's last step counts the episode as ended.
        if let Some(ck) = run.checkpoints.last_mut().filter(|c| c.step == global_step) {
            ck.episodes = run.episodes;
        }
        let nan_or = |s: f64| if n_unc == 0 { f64::NAN } else { s / n_unc as f64 };
        run.rows.push(MetricsRow {
            seed,
            global_step,
            episode: run.episodes - 1,
            episode_return: out.episode_return,
            episode_steps: out.steps,
            terminal_cause: out.cause.as_str(),
            cumulative_falls: run.total_falls,
            mean_epistemic_var: nan_or(epi_sum),
            mean_aleatoric_var: nan_or(alea_sum),
            non_greedy_fraction: window_non_greedy as f64 / window.len() as f64,
        });
    }
    run.steps = global_step;
    if run.checkpoints.len() != grid.len() {
        return Err(Error::Contract("checkpoint grid not covered".into()));
    }
    Ok(run)
}

/// Final across-seed statistics of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridworldSummary {
    pub policy: String,
    pub seeds: usize,
    pub steps: u64,
    pub final_falls: MeanCi,
    pub mean_episodes: f64,
    pub mean_non_greedy_fraction: f64,
    pub per_seed_falls: Vec<u64>,
}

/// Result of [`run_gridworld_experiment`].
#[derive(Debug, Clone)]
pub struct GridworldRun {
    pub summary: GridworldSummary,
    pub aggregate: Vec<AggregateRow>,
    pub seeds: Vec<SeedRun>,
    pub seed_files: Vec<PathBuf>,
    pub aggregate_file: PathBuf,
}

/// Trains `cfg.seeds` independent agents with `cfg.agent.policy` and writes
/// `seed_XXX.csv` per seed, `aggregate.csv`, `summary.json` and the resolved
/// `config.toml` into `out`. Seeds run concurrently under
/// [`Execution::Parallel`]; output does not depend on the mode.
pub fn run_gridworld_experiment(cfg: &RunConfig, out: &Path, exec: Execution) -> Result<GridworldRun> {
    cfg.validate()?;
    cfg.echo_to(out)?;
    let seeds: Vec<u64> = (0..cfg.seeds as u64).map(|i| cfg.first_seed + i).collect();
    let runs = par::map(exec, &seeds, |&s| run_seed(cfg, s))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let mut seed_files = Vec::with_capacity(runs.len());
    for r in &runs {
        let p = out.join(format!("seed_{:03}.csv", r.seed));
        write_metrics(&p, &r.rows)?;
        seed_files.push(p);
    }
    let curves: Vec<Vec<Checkpoint>> = runs.iter().map(|r| r.checkpoints.clone()).collect();
    let agg = aggregate(&curves)?;
    let aggregate_file = out.join("aggregate.csv");
    write_aggregate(&aggregate_file, &agg)?;

    let per_seed_falls: Vec<u64> = runs.iter().map(|r| r.total_falls).collect();
    let falls: Vec<f64> = per_seed_falls.iter().map(|&f| f as f64).collect();
    let episodes: Vec<f64> = runs.iter().map(|r| r.episodes as f64).collect();
    let ng: Vec<f64> = runs.iter().map(SeedRun::non_greedy_fraction).collect();
    let summary = GridworldSummary {
        policy: cfg.agent.policy.as_str().to_string(),
        seeds: runs.len(),
        steps: cfg.steps,
        final_falls: MeanCi::from_samples(&falls),
        mean_episodes: crate::stats::mean(&episodes),
        mean_non_greedy_fraction: crate::stats::mean(&ng),
        per_seed_falls,
    };
    write_json(&out.join("summary.json"), &summary)?;
    if cfg.emit_svg {
        plot_falls(&[out], &out.join("falls.svg"))?;
    }
    Ok(GridworldRun {
        summary,
        aggregate: agg,
        seeds: runs,
        seed_files,
        aggregate_file,
    })
}

/// Runs every policy in `policies` into `out/<policy>/` and returns the
/// runs in the same order. With `emit_svg` a combined `out/falls.svg` is
/// written as well.
pub fn run_policy_comparison(
    cfg: &RunConfig,
    policies: &[Policy],
    out: &Path,
    exec: Execution,
) -> Result<Vec<GridworldRun>> {
    let runs = policies
        .iter()
        .map(|&p| {
            let mut c = cfg.clone();
            c.agent.policy = p;
            run_gridworld_experiment(&c, &out.join(p.as_str()), exec)
        })
        .collect::<Result<Vec<_>>>()?;
    if cfg.emit_svg {
        let dirs: Vec<PathBuf> = policies.iter().map(|p| out.join(p.as_str())).collect();
        let refs: Vec<&Path> = dirs.iter().map(PathBuf::as_path).collect();
        plot_falls(&refs, &out.join("falls.svg"))?;
    }
    Ok(runs)
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::AgentConfig;

    fn small(policy: Policy) -> RunConfig {
        RunConfig {
            seeds: 3,
            steps: 300,
            aggregate_every: 50,
            trailing_window: 20,
            agent: AgentConfig {
                policy,
                n_quantiles: 8,
                hidden: vec![16],
                warmup: 50,
                minibatch: 8,
                ..AgentConfig::default()
            },
            ..RunConfig::default()
        }
    }

    #[test]
    fn checkpoint_grid_ends_at_total() {
        assert_eq!(checkpoint_steps(250, 100), vec![100, 200, 250]);
        assert_eq!(checkpoint_steps(200, 100), vec![100, 200]);
        assert_eq!(checkpoint_steps(5, 100), vec![5]);
    }

    #[test]
    fn seed_run_is_consistent() {
        let cfg = small(Policy::UaVariant2);
        let r = run_seed(&cfg, 4).unwrap();
        assert_eq!(r.steps, 300);
        assert_eq!(r.rows.len() as u64, r.episodes);
        assert_eq!(r.rows.iter().map(|x| x.episode_steps as u64).sum::<u64>(), 300);
        for w in r.rows.windows(2) {
            assert!(w[1].global_step > w[0].global_step);
            assert!(w[1].cumulative_falls >= w[0].cumulative_falls);
            assert_eq!(w[1].episode, w[0].episode + 1);
        }
        let fell = r.rows.iter().filter(|x| x.terminal_cause == "fell").count() as u64;
        assert_eq!(fell, r.total_falls);
        let last = r.checkpoints.last().unwrap();
        assert_eq!((last.step, last.falls, last.episodes), (300, r.total_falls, r.episodes));
        assert!(r.rows.iter().all(|x| x.mean_epistemic_var.is_finite()));
        for w in r.checkpoints.windows(2) {
            assert!(w[1].falls >= w[0].falls && w[1].episodes >= w[0].episodes);
        }
    }

    #[test]
    fn eps_greedy_rows_have_no_uncertainty() {
        let r = run_seed(&small(Policy::EpsGreedyQr), 0).unwrap();
        assert!(r.rows.iter().all(|x| x.mean_epistemic_var.is_nan()));
    }

    #[test]
    fn experiment_writes_all_files_independent_of_execution() {
        let cfg = small(Policy::UaVariant1);
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let a = run_gridworld_experiment(&cfg, d1.path(), Execution::Parallel).unwrap();
        let b = run_gridworld_experiment(&cfg, d2.path(), Execution::Sequential).unwrap();
        assert_eq!(a.seed_files.len(), 3);
        for name in ["seed_000.csv", "seed_001.csv", "seed_002.csv", "aggregate.csv", "summary.json", "config.toml"] {
            let x = std::fs::read(d1.path().join(name)).unwrap();
            let y = std::fs::read(d2.path().join(name)).unwrap();
            assert_eq!(x, y, "{name}");
        }
        assert_eq!(a.aggregate.last().unwrap().step, 300);
        assert_eq!(a.summary, b.summary);
    }
}
