//! `grid.csv`, `curve.csv` and `heatmap.svg`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{find_crossing, PhaseGrid, PhaseGridConfig};
use crate::error::{Error, Result};
use crate::statdim::statdim_bounds;

/// Theoretical transition bracket for one column, in measurements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub s: usize,
    pub m_theory_upper: f64,
    pub m_theory_lower: f64,
}

/// `statdim_bounds` for every `s` of the configuration.
pub fn theory_predictions(config: &PhaseGridConfig) -> Result<Vec<Prediction>> {
    config
        .s_values
        .iter()
        .map(|&s| {
            let (lower, upper) = statdim_bounds(s, config.n, config.variant.bound_variant())?;
            Ok(Prediction {
                s,
                m_theory_upper: upper,
                m_theory_lower: lower,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputFiles {
    pub grid_csv: PathBuf,
    pub curve_csv: PathBuf,
    pub heatmap_svg: PathBuf,
}

const PLOT: f64 = 640.0;
const MARGIN: f64 = 48.0;

fn grid_csv(grid: &PhaseGrid) -> String {
    let mut out = String::from("m,s,successes,trials,non_converged\n");
    for (&(m, s), c) in &grid.cells {
        let _ = writeln!(out, "{m},{s},{},{},{}", c.successes, c.trials_run, c.non_converged);
    }
    out
}

fn curve_csv(grid: &PhaseGrid, predictions: &[Prediction]) -> String {
    let mut out = String::from("s,m_theory_upper,m_theory_lower,m50_empirical\n");
    for p in predictions {
        let m50 = find_crossing(grid, p.s).map_or(f64::NAN, |c| c.value());
        let _ = writeln!(out, "{},{},{},{}", p.s, p.m_theory_upper, p.m_theory_lower, m50);
    }
    out
}

/// Fractional row index of `m` among the sorted `m_values`.
fn row_position(ms: &[usize], m: f64) -> f64 {
    let i = ms.partition_point(|&v| (v as f64) < m);
    if i == 0 {
        return 0.0;
    }
    if i == ms.len() {
        return (ms.len() - 1) as f64;
    }
    let (a, b) = (ms[i - 1] as f64, ms[i] as f64);
    (i - 1) as f64 + (m - a) / (b - a)
}

fn heatmap_svg(grid: &PhaseGrid, predictions: &[Prediction]) -> String {
    let ms = &grid.config.m_values;
    let ss = &grid.config.s_values;
    let cw = PLOT / ss.len() as f64;
    let ch = PLOT / ms.len() as f64;
    // Column centre for s-index j and vertical centre for a fractional row.
    let x_of = |j: usize| MARGIN + (j as f64 + 0.5) * cw;
    let y_of = |row: f64| MARGIN + PLOT - (row + 0.5) * ch;

    let size = PLOT + 2.0 * MARGIN;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#
    );
    let _ = writeln!(
        svg,
        r#"<title>success probability, n={} variant={}</title>"#,
        grid.config.n,
        grid.config.variant.name()
    );
    let _ = writeln!(svg, r#"<g id="cells" shape-rendering="crispEdges">"#);
    for (j, &s) in ss.iter().enumerate() {
        for (i, &m) in ms.iter().enumerate() {
            let x = MARGIN + j as f64 * cw;
            let y = MARGIN + PLOT - (i as f64 + 1.0) * ch;
            match grid.cell(m, s) {
                Some(c) => {
                    let p = c.probability();
                    let v = (255.0 * p).round() as u8;
                    let _ = writeln!(
                        svg,
                        r#"<rect class="cell" x="{x}" y="{y}" width="{cw}" height="{ch}" fill="rgb({v},{v},{v})" data-m="{m}" data-s="{s}" data-p="{p}"/>"#
                    );
                }
                None => {
                    let _ = writeln!(
                        svg,
                        r#"<rect class="cell missing" x="{x}" y="{y}" width="{cw}" height="{ch}" fill="rgb(250,235,215)" data-m="{m}" data-s="{s}"/>"#
                    );
                }
            }
        }
    }
    let _ = writeln!(svg, "</g>");

    let index_of = |s: usize| ss.iter().position(|&v| v == s);
    let points: Vec<String> = predictions
        .iter()
        .filter_map(|p| {
            let j = index_of(p.s)?;
            Some(format!("{},{}", x_of(j), y_of(row_position(ms, p.m_theory_upper))))
        })
        .collect();
    let _ = writeln!(
        svg,
        r#"<polyline id="theory" fill="none" stroke="rgb(220,30,30)" stroke-width="2" points="{}"/>"#,
        points.join(" ")
    );
    for p in predictions {
        if let (Some(j), Ok(c)) = (index_of(p.s), find_crossing(grid, p.s)) {
            if let Some(m50) = c.at() {
                let _ = writeln!(
                    svg,
                    r#"<circle class="m50" cx="{}" cy="{}" r="3" fill="rgb(30,90,220)"/>"#,
                    x_of(j),
                    y_of(row_position(ms, m50))
                );
            }
        }
    }

    let axis_y = MARGIN + PLOT + 16.0;
    let _ = writeln!(
        svg,
        r#"<g font-family="sans-serif" font-size="11" text-anchor="middle">"#
    );
    let label_every = ss.len().div_ceil(16).max(1);
    for (j, &s) in ss.iter().enumerate().step_by(label_every) {
        let _ = writeln!(svg, r#"<text x="{}" y="{axis_y}">{s}</text>"#, x_of(j));
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}">s</text>"#,
        MARGIN + PLOT / 2.0,
        axis_y + 18.0
    );
    let label_every = ms.len().div_ceil(16).max(1);
    for (i, &m) in ms.iter().enumerate().step_by(label_every) {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}">{m}</text>"#,
            MARGIN - 16.0,
            y_of(i as f64) + 4.0
        );
    }
    let _ = writeln!(svg, r#"<text x="14" y="{}">m</text>"#, MARGIN + PLOT / 2.0);
    let _ = writeln!(svg, "</g>\n</svg>");
    svg
}

/// Writes the three output files into `out_dir`, creating it if needed.
pub fn emit_outputs(grid: &PhaseGrid, predictions: &[Prediction], out_dir: &Path) -> Result<OutputFiles> {
    if grid.cells.is_empty() {
        return Err(Error::InvalidArgument("grid has no evaluated cells".into()));
    }
    fs::create_dir_all(out_dir)?;
    let files = OutputFiles {
        grid_csv: out_dir.join("grid.csv"),
        curve_csv: out_dir.join("curve.csv"),
        heatmap_svg: out_dir.join("heatmap.svg"),
    };
    fs::write(&files.grid_csv, grid_csv(grid))?;
    fs::write(&files.curve_csv, curve_csv(grid, predictions))?;
    fs::write(&files.heatmap_svg, heatmap_svg(grid, predictions))?;
    Ok(files)
}
