//! Experiment orchestration: configuration, multi-seed runs, CSV metrics and
//! SVG plots.

pub mod config;
pub mod gridworld;
pub mod metrics;
pub mod plots;
pub mod regression;
pub mod svg;
pub mod validate;

pub use config::{parse_config, split_override, Experiment, RegressionDemoConfig, RunConfig, ValidateConfig, OUTPUT_ROOT_ENV};
pub use gridworld::{run_gridworld_experiment, run_policy_comparison, run_seed, GridworldRun, GridworldSummary, SeedRun};
pub use metrics::{AggregateRow, Checkpoint, MetricsRow};
pub use regression::{run_regression_demo, RegressionRun, RegressionSummary};
pub use svg::{emit_svg_lineplot, render_svg_lineplot, PlotLabels, Series};
pub use validate::{run_validation, write_validation_report, CheckSet, ValidationReport};
pub use plots::{plot_falls, plot_profile};
