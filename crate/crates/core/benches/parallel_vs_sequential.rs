//! Rayon fan-out against the sequential path on the two batch workloads:
//! Monte-Carlo estimator checks and independent gridworld seeds.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use uadqn::harness::{run_seed, RunConfig};
use uadqn::par::{self, Execution};
use uadqn::validation::{check_unbiasedness, decomposition_sweep, PosteriorSpec};

const MODES: [(&str, Execution); 2] = [
    ("parallel", Execution::Parallel),
    ("sequential", Execution::Sequential),
];

fn monte_carlo(c: &mut Criterion) {
    let mut g = c.benchmark_group("monte_carlo");
    g.sample_size(10);
    let spec = PosteriorSpec::default();
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::new("unbiasedness_20k_pairs", name), &exec, |b, &exec| {
            b.iter(|| check_unbiasedness(&spec, 20_000, 50, &[10, 50], 1, exec).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("decomposition_100_matrices", name), &exec, |b, &exec| {
            b.iter(|| decomposition_sweep(100, 1, exec).unwrap())
        });
    }
    g.finish();
}

fn gridworld_seeds(c: &mut Criterion) {
    let mut g = c.benchmark_group("gridworld");
    g.sample_size(10);
    let mut cfg = RunConfig {
        steps: 1_000,
        ..RunConfig::default()
    };
    cfg.agent.hidden = vec![16];
    let seeds: Vec<u64> = (0..4).collect();
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::new("4_seeds_1k_steps", name), &exec, |b, &exec| {
            b.iter(|| par::map(exec, &seeds, |&s| run_seed(&cfg, s).unwrap().total_falls))
        });
    }
    g.finish();
}

criterion_group!(benches, monte_carlo, gridworld_seeds);
criterion_main!(benches);
