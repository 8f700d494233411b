//! CSV metrics. Reals are written with 17 significant digits, columns in a
//! fixed order with a header row.

use std::path::Path;

use crate::stats::MeanCi;
use crate::{Error, Result};

/// Formats a real with 17 significant digits.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

/// One row per finished episode of one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub seed: u64,
    /// Environment steps completed when the episode ended.
    pub global_step: u64,
    pub episode: u64,
    pub episode_return: f64,
    pub episode_steps: usize,
    pub terminal_cause: &'static str,
    pub cumulative_falls: u64,
    /// Mean over the episode's steps of the chosen action's estimate (NaN without auxiliary networks).
    pub mean_epistemic_var: f64,
    pub mean_aleatoric_var: f64,
    /// Fraction of non-greedy actions over the trailing step window.
    pub non_greedy_fraction: f64,
}

pub const METRICS_HEADER: [&str; 10] = [
    "seed",
    "global_step",
    "episode",
    "episode_return",
    "episode_steps",
    "terminal_cause",
    "cumulative_falls",
    "mean_epistemic_var",
    "mean_aleatoric_var",
    "non_greedy_fraction",
];

impl MetricsRow {
    fn record(&self) -> [String; 10] {
        [
            self.seed.to_string(),
            self.global_step.to_string(),
            self.episode.to_string(),
            fmt_real(self.episode_return),
            self.episode_steps.to_string(),
            self.terminal_cause.to_string(),
            self.cumulative_falls.to_string(),
            fmt_real(self.mean_epistemic_var),
            fmt_real(self.mean_aleatoric_var),
            fmt_real(self.non_greedy_fraction),
        ]
    }
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse(format!("{}: {other:?}", path.display())),
    }
}

/// Writes `header` and `rows` to `path`.
pub fn write_csv<R: AsRef<[String]>>(path: &Path, header: &[&str], rows: &[R]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.write_record(r.as_ref()).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_metrics(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let records: Vec<[String; 10]> = rows.iter().map(MetricsRow::record).collect();
    write_csv(path, &METRICS_HEADER, &records)
}

/// Reads a CSV written by this module into (header, rows of fields).
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = r
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

/// Extracts named numeric columns from a CSV.
pub fn read_columns(path: &Path, names: &[&str]) -> Result<Vec<Vec<f64>>> {
    let (header, rows) = read_csv(path)?;
    let idx: Vec<usize> = names
        .iter()
        .map(|n| {
            header
                .iter()
                .position(|h| h == n)
                .ok_or_else(|| Error::Parse(format!("{}: missing column `{n}`", path.display())))
        })
        .collect::<Result<_>>()?;
    let mut cols = vec![Vec::with_capacity(rows.len()); names.len()];
    for row in &rows {
        for (c, &i) in cols.iter_mut().zip(&idx) {
            let v = row[i]
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("{}: bad number `{}`: {e}", path.display(), row[i])))?;
            c.push(v);
        }
    }
    Ok(cols)
}

/// Cumulative falls (and episodes) of one seed at a checkpoint step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Checkpoint {
    pub step: u64,
    pub falls: u64,
    pub episodes: u64,
}

/// Across-seed statistics at one checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub step: u64,
    pub n_seeds: usize,
    pub episodes_mean: f64,
    pub falls: MeanCi,
}

pub const AGGREGATE_HEADER: [&str; 7] = [
    "step",
    "n_seeds",
    "episodes_mean",
    "falls_mean",
    "falls_se",
    "falls_lower",
    "falls_upper",
];

/// Merges per-seed checkpoint curves (all on the same step grid).
pub fn aggregate(curves: &[Vec<Checkpoint>]) -> Result<Vec<AggregateRow>> {
    let Some(first) = curves.first() else {
        return Ok(Vec::new());
    };
    let len = first.len();
    if curves.iter().any(|c| c.len() != len) {
        return Err(Error::Contract("seed curves have different checkpoint grids".into()));
    }
    (0..len)
        .map(|k| {
            let step = first[k].step;
            if curves.iter().any(|c| c[k].step != step) {
                return Err(Error::Contract("checkpoint steps differ across seeds".into()));
            }
            let falls: Vec<f64> = curves.iter().map(|c| c[k].falls as f64).collect();
            let eps: Vec<f64> = curves.iter().map(|c| c[k].episodes as f64).collect();
            Ok(AggregateRow {
                step,
                n_seeds: curves.len(),
                episodes_mean: crate::stats::mean(&eps),
                falls: MeanCi::from_samples(&falls),
            })
        })
        .collect()
}

pub fn write_aggregate(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let records: Vec<[String; 7]> = rows
        .iter()
        .map(|r| {
            [
                r.step.to_string(),
                r.n_seeds.to_string(),
                fmt_real(r.episodes_mean),
                fmt_real(r.falls.mean),
                fmt_real(r.falls.se),
                fmt_real(r.falls.lower),
                fmt_real(r.falls.upper),
            ]
        })
        .collect();
    write_csv(path, &AGGREGATE_HEADER, &records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits() {
        let s = fmt_real(0.1);
        assert_eq!(s, "1.0000000000000001e-1");
        assert_eq!(s.parse::<f64>().unwrap(), 0.1);
        let third = 1.0 / 3.0;
        assert_eq!(fmt_real(third).parse::<f64>().unwrap(), third);
    }

    #[test]
    fn aggregate_ci_contains_mean() {
        let c = |f: u64| vec![Checkpoint { step: 10, falls: f, episodes: 2 }];
        let rows = aggregate(&[c(1), c(3), c(8)]).unwrap();
        let r = &rows[0];
        assert_eq!(r.n_seeds, 3);
        assert!(r.falls.lower <= r.falls.mean && r.falls.mean <= r.falls.upper);
        assert!(((r.falls.upper - r.falls.lower) - 2.0 * 1.96 * r.falls.se).abs() < 1e-12);
        let bad = vec![Checkpoint { step: 11, falls: 0, episodes: 0 }];
        assert!(aggregate(&[c(1), bad]).is_err());
    }

    #[test]
    fn csv_round_trip_of_columns() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        let rows = vec![AggregateRow {
            step: 100,
            n_seeds: 2,
            episodes_mean: 7.5,
            falls: MeanCi::from_samples(&[1.0, 2.0]),
        }];
        write_aggregate(&p, &rows).unwrap();
        let cols = read_columns(&p, &["step", "falls_mean"]).unwrap();
        assert_eq!(cols, vec![vec![100.0], vec![1.5]]);
        assert!(read_columns(&p, &["nope"]).is_err());
    }
}
