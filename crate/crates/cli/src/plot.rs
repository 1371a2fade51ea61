//! SVG plots of the training curves, drawn from the CSV logs.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use plotters::prelude::*;
use swinct_core::train::{CURVE_FILE, STEPS_FILE};

pub const LOSS_SVG: &str = "loss.svg";
pub const METRICS_SVG: &str = "metrics.svg";

/// Named columns of a CSV file; empty cells become `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
        let headers = r.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.with_context(|| format!("malformed row in {}", path.display()))?;
            rows.push(rec.iter().map(|c| c.parse().ok()).collect());
        }
        Ok(Self { headers, rows })
    }

    /// `(x, y)` pairs of two columns, skipping rows where either is empty.
    pub fn series(&self, x: &str, y: &str) -> Vec<(f64, f64)> {
        let (Some(xi), Some(yi)) = (self.column(x), self.column(y)) else {
            return Vec::new();
        };
        self.rows.iter().filter_map(|r| Some((r[xi]?, r[yi]?))).collect()
    }

    fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }
}

/// Writes `loss.svg` and `metrics.svg` next to the CSV logs in `run`.
pub fn write_curves(run: &Path) -> Result<Vec<PathBuf>> {
    let steps = Table::read(&run.join(STEPS_FILE))?;
    let curve = Table::read(&run.join(CURVE_FILE))?;
    let loss = run.join(LOSS_SVG);
    draw(
        &loss,
        "training loss",
        &[("step loss", steps.series("step", "train_loss")), ("interval mean", curve.series("step", "train_loss"))],
    )?;
    let metrics = run.join(METRICS_SVG);
    let lines: Vec<(&str, Vec<(f64, f64)>)> = ["val_top1", "val_top5", "val_miou", "val_macc", "val_aacc"]
        .into_iter()
        .map(|name| (name, curve.series("step", name)))
        .filter(|(_, s)| !s.is_empty())
        .collect();
    draw(&metrics, "validation metrics", &lines)?;
    Ok(vec![loss, metrics])
}

const COLORS: [RGBColor; 5] = [BLUE, RED, GREEN, MAGENTA, CYAN];

fn draw(path: &Path, title: &str, lines: &[(&str, Vec<(f64, f64)>)]) -> Result<()> {
    let points = lines.iter().flat_map(|(_, s)| s.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in points.filter(|(x, y)| x.is_finite() && y.is_finite()) {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if x0 > x1 {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        y1 = y0 + 1.0;
    }

    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (800, 500)).into_drawing_area();
        root.fill(&WHITE).map_err(plot_err)?;
        let mut chart = ChartBuilder::on(&root)
            .caption(title, ("sans-serif", 22))
            .margin(12)
            .x_label_area_size(40)
            .y_label_area_size(60)
            .build_cartesian_2d(x0..x1, y0..y1)
            .map_err(plot_err)?;
        chart.configure_mesh().x_desc("step").draw().map_err(plot_err)?;
        for (i, (name, series)) in lines.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            chart
                .draw_series(LineSeries::new(series.iter().copied(), &color))
                .map_err(plot_err)?
                .label(*name)
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color));
        }
        chart.configure_series_labels().background_style(WHITE).border_style(BLACK).draw().map_err(plot_err)?;
        root.present().map_err(plot_err)?;
    }
    swinct_tensor::io::write_atomic(path, svg.as_bytes()).with_context(|| format!("cannot write {}", path.display()))
}

fn plot_err(e: impl std::fmt::Display) -> anyhow::Error {
    anyhow::anyhow!("plotting failed: {e}")
}
