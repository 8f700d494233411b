//! Minimal standalone SVG line plots with translucent bands.

use std::fmt::Write as _;
use std::path::Path;

use crate::{Error, Result};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 160.0;
const MARGIN_T: f64 = 24.0;
const MARGIN_B: f64 = 48.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// One line. `band` is empty or holds a half-width per point; the band spans
/// `y - band` to `y + band`.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub band: Vec<f64>,
}

impl Series {
    pub fn new(label: impl Into<String>, x: Vec<f64>, y: Vec<f64>) -> Self {
        Series {
            label: label.into(),
            x,
            y,
            band: Vec::new(),
        }
    }

    pub fn with_band(mut self, band: Vec<f64>) -> Self {
        self.band = band;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.y.len() != self.x.len() || !(self.band.is_empty() || self.band.len() == self.x.len()) {
            return Err(Error::shape("series arrays", self.x.len(), self.y.len().max(self.band.len())));
        }
        Ok(())
    }
}

/// Plot labels.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlotLabels {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn fit(series: &[Series]) -> Frame {
        let mut xs = (f64::INFINITY, f64::NEG_INFINITY);
        let mut ys = (f64::INFINITY, f64::NEG_INFINITY);
        for s in series {
            for (i, (&x, &y)) in s.x.iter().zip(&s.y).enumerate() {
                let b = s.band.get(i).copied().unwrap_or(0.0).abs();
                if x.is_finite() {
                    xs = (xs.0.min(x), xs.1.max(x));
                }
                if y.is_finite() && b.is_finite() {
                    ys = (ys.0.min(y - b), ys.1.max(y + b));
                }
            }
        }
        let pad = |(lo, hi): (f64, f64)| {
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if hi - lo <= 0.0 {
                (lo - 0.5, hi + 0.5)
            } else {
                (lo, hi)
            }
        };
        let (x0, x1) = pad(xs);
        let (y0, y1) = pad(ys);
        Frame { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN_L + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_B - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - MARGIN_T - MARGIN_B)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Renders the plot as SVG text. Non-finite points are skipped in lines.
pub fn render_svg_lineplot(series: &[Series], labels: &PlotLabels) -> Result<String> {
    for s in series {
        s.validate()?;
    }
    let f = Frame::fit(series);
    let mut o = String::new();
    let _ = writeln!(
        o,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(o, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let (left, right) = (MARGIN_L, WIDTH - MARGIN_R);
    let (top, bottom) = (MARGIN_T, HEIGHT - MARGIN_B);
    let _ = writeln!(
        o,
        r#"<g class="axes" stroke="black" fill="none"><line x1="{left}" y1="{bottom}" x2="{right}" y2="{bottom}"/><line x1="{left}" y1="{top}" x2="{left}" y2="{bottom}"/></g>"#
    );
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        let xv = f.x0 + t * (f.x1 - f.x0);
        let yv = f.y0 + t * (f.y1 - f.y0);
        let (px, py) = (f.px(xv), f.py(yv));
        let _ = writeln!(
            o,
            r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            bottom + 16.0,
            tick(xv)
        );
        let _ = writeln!(
            o,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            left - 6.0,
            py + 4.0,
            tick(yv)
        );
    }
    let _ = writeln!(
        o,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        (left + right) / 2.0,
        HEIGHT - 8.0,
        escape(&labels.x_label)
    );
    let _ = writeln!(
        o,
        r#"<text x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {:.2})">{}</text>"#,
        (top + bottom) / 2.0,
        (top + bottom) / 2.0,
        escape(&labels.y_label)
    );
    if !labels.title.is_empty() {
        let _ = writeln!(
            o,
            r#"<text x="{:.2}" y="16" text-anchor="middle">{}</text>"#,
            (left + right) / 2.0,
            escape(&labels.title)
        );
    }
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if !s.band.is_empty() {
            let upper = s.x.iter().zip(&s.y).zip(&s.band).map(|((&x, &y), &b)| (x, y + b.abs()));
            let lower = s.x.iter().zip(&s.y).zip(&s.band).rev().map(|((&x, &y), &b)| (x, y - b.abs()));
            let pts: Vec<String> = upper
                .chain(lower)
                .map(|(x, y)| format!("{:.2},{:.2}", f.px(x), f.py(y)))
                .collect();
            let _ = writeln!(
                o,
                r#"<polygon class="band" points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
                pts.join(" ")
            );
        }
        let pts: Vec<String> = s
            .x
            .iter()
            .zip(&s.y)
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|(&x, &y)| format!("{:.2},{:.2}", f.px(x), f.py(y)))
            .collect();
        let _ = writeln!(
            o,
            r#"<polyline class="line" points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            pts.join(" ")
        );
        let ly = top + 16.0 * (i as f64 + 1.0);
        let _ = writeln!(
            o,
            r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            right + 10.0,
            right + 30.0,
            right + 36.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    o.push_str("</svg>\n");
    Ok(o)
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else {
        format!("{v:.2}")
    }
}

/// Writes the plot to `path`. Identical inputs give byte-identical files.
pub fn emit_svg_lineplot(series: &[Series], labels: &PlotLabels, path: &Path) -> Result<()> {
    let text = render_svg_lineplot(series, labels)?;
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
