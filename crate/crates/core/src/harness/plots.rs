//! SVG figures rebuilt from the CSV outputs.

use std::path::Path;

use super::metrics::read_columns;
use super::svg::{emit_svg_lineplot, PlotLabels, Series};
use crate::Result;

fn dir_label(dir: &Path) -> String {
    dir.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}

/// Mean cumulative falls with their 95% band, one line per run directory
/// (each holding an `aggregate.csv`).
pub fn plot_falls(run_dirs: &[&Path], path: &Path) -> Result<()> {
    let mut series = Vec::with_capacity(run_dirs.len());
    for dir in run_dirs {
        let cols = read_columns(&dir.join("aggregate.csv"), &["step", "falls_mean", "falls_upper"])?;
        let band = cols[2].iter().zip(&cols[1]).map(|(u, m)| u - m).collect();
        series.push(Series::new(dir_label(dir), cols[0].clone(), cols[1].clone()).with_band(band));
    }
    let labels = PlotLabels {
        title: "cumulative falls during training".into(),
        x_label: "environment step".into(),
        y_label: "cumulative falls".into(),
    };
    emit_svg_lineplot(&series, &labels, path)
}

/// Predictive mean with total, aleatoric and epistemic one-sd bands from a
/// regression-demo directory (`profile.csv`, `dataset.csv`).
pub fn plot_profile(dir: &Path, path: &Path) -> Result<()> {
    let p = read_columns(
        &dir.join("profile.csv"),
        &["x", "mean", "total_sd", "aleatoric_sd", "epistemic_sd"],
    )?;
    let d = read_columns(&dir.join("dataset.csv"), &["x", "y"])?;
    let series = vec![
        Series::new("total", p[0].clone(), p[1].clone()).with_band(p[2].clone()),
        Series::new("aleatoric", p[0].clone(), p[1].clone()).with_band(p[3].clone()),
        Series::new("epistemic", p[0].clone(), p[1].clone()).with_band(p[4].clone()),
        Series::new("data", d[0].clone(), d[1].clone()),
    ];
    let labels = PlotLabels {
        title: "prediction with uncertainty bands".into(),
        x_label: "x".into(),
        y_label: "y".into(),
    };
    emit_svg_lineplot(&series, &labels, path)
}
