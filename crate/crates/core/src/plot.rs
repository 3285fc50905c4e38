//! Minimal SVG line charts of run artifacts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::artifacts::{read_csv, write_atomic, METRICS_CSV, TRAJECTORY_CSV};
use crate::error::{Error, Result};

pub const SERIES: [&str; 5] = ["x", "y", "dhat", "errors", "lyapunov"];

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
/// Floor applied before taking log10 of nonnegative series.
const LOG_FLOOR: f64 = 1e-16;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// One named curve.
#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub label: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub title: String,
    pub y_label: String,
    pub times: Vec<f64>,
    pub lines: Vec<Line>,
}

/// Collects the curves for `which` from the artifacts in `dir`.
pub fn load_chart(dir: &Path, which: &str) -> Result<Chart> {
    let (file, title, y_label, log) = match which {
        "x" => (TRAJECTORY_CSV, "positions", "x_i", false),
        "y" => (TRAJECTORY_CSV, "velocities", "y_i", false),
        "dhat" => (TRAJECTORY_CSV, "integral action", "dhat_i", false),
        "errors" => (METRICS_CSV, "consensus error norms", "log10 norm", true),
        "lyapunov" => (METRICS_CSV, "Lyapunov function", "log10 value", true),
        other => {
            return Err(Error::validation(
                "series",
                format!(
                    "unknown series {other:?}; valid options: {}",
                    SERIES.join(", ")
                ),
            ))
        }
    };
    let table = read_csv(&dir.join(file))?;
    if table.rows.is_empty() {
        return Err(Error::validation(
            file,
            "trajectory is empty; nothing to plot",
        ));
    }
    let times = table
        .column("t")
        .ok_or_else(|| Error::validation(file, "missing column t"))?;
    let raw: Vec<(String, Vec<f64>)> = match which {
        "x" | "y" | "dhat" => table.columns_with_prefix(&format!("{which}_")),
        "errors" => ["e_x_norm", "e_y_norm", "e_d_norm"]
            .iter()
            .filter_map(|c| table.column(c).map(|v| (c.to_string(), v)))
            .collect(),
        _ => table.header[1..]
            .iter()
            .filter(|h| *h == "H" || *h == "W")
            .filter_map(|h| table.column(h).map(|v| (h.clone(), v)))
            .collect(),
    };
    if raw.is_empty() {
        return Err(Error::validation(
            file,
            format!("no columns for series {which}"),
        ));
    }
    let lines = raw
        .into_iter()
        .map(|(label, values)| Line {
            label,
            values: if log {
                values
                    .iter()
                    .map(|v| v.abs().max(LOG_FLOOR).log10())
                    .collect()
            } else {
                values
            },
        })
        .collect();
    Ok(Chart {
        title: title.into(),
        y_label: y_label.into(),
        times,
        lines,
    })
}

/// Writes `plot_<which>.svg` into `dir` and returns its path.
pub fn plot(dir: &Path, which: &str) -> Result<PathBuf> {
    let chart = load_chart(dir, which)?;
    let path = dir.join(format!("plot_{which}.svg"));
    write_atomic(&path, render_svg(&chart).as_bytes())?;
    Ok(path)
}

/// Roughly five round tick positions covering `[lo, hi]`.
pub fn nice_ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .into_iter()
        .map(|m| m * mag)
        .find(|s| span / s <= 6.0)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

pub fn render_svg(chart: &Chart) -> String {
    let (t0, t1) = (chart.times[0], *chart.times.last().expect("non-empty"));
    let (t0, t1) = if t1 > t0 { (t0, t1) } else { (t0, t0 + 1.0) };
    let finite = chart
        .lines
        .iter()
        .flat_map(|l| l.values.iter().copied())
        .filter(|v| v.is_finite());
    let (mut lo, mut hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    if !lo.is_finite() {
        (lo, hi) = (-1.0, 1.0);
    }
    if hi - lo < 1e-12 * (1.0 + hi.abs()) {
        lo -= 0.5;
        hi += 0.5;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |t: f64| LEFT + (t - t0) / (t1 - t0) * pw;
    let sy = |v: f64| TOP + (hi - v) / (hi - lo) * ph;

    let mut s = String::new();
    let w = &mut s;
    // Writing into a String cannot fail; results are ignored below.
    let _ = writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(w, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        w,
        r#"<text x="{:.1}" y="18" text-anchor="middle" font-size="14">{}</text>"#,
        LEFT + pw / 2.0,
        chart.title
    );
    let _ = writeln!(
        w,
        r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##
    );
    for t in nice_ticks(t0, t1) {
        let x = sx(t);
        let _ = writeln!(
            w,
            r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#ddd"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
            TOP,
            TOP + ph,
            TOP + ph + 16.0,
            fmt_tick(t)
        );
    }
    for v in nice_ticks(lo, hi) {
        let y = sy(v);
        let _ = writeln!(
            w,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            LEFT + pw,
            LEFT - 6.0,
            y + 4.0,
            fmt_tick(v)
        );
    }
    let _ = writeln!(
        w,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">time [s]</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 18.0
    );
    let _ = writeln!(
        w,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        chart.y_label
    );
    for (k, line) in chart.lines.iter().enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        let mut points = String::new();
        for (t, v) in chart
            .times
            .iter()
            .zip(&line.values)
            .filter(|(_, v)| v.is_finite())
        {
            let _ = write!(points, "{:.2},{:.2} ", sx(*t), sy(*v));
        }
        let _ = writeln!(
            w,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="1.2" points="{}"/>"#,
            points.trim_end()
        );
        let ly = TOP + 14.0 + 18.0 * k as f64;
        let lx = LEFT + pw + 12.0;
        let _ = writeln!(
            w,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{colour}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            line.label
        );
    }
    let _ = writeln!(w, "</svg>");
    s
}
