//! CSV reports and self-contained SVG charts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{coefficient_of_variation, BenchError, BenchReport, BenchRow, Point, RatioRow};
use crate::ledger::Mode;

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct CvRow {
    mode: Mode,
    latency_cv: f64,
}

/// Writes `<name>.csv` and `<name>.svg` (plus side tables where the report
/// has them) into `dir`, returning the paths written.
pub fn write_outputs(dir: &Path, name: &str, report: &BenchReport) -> Result<Vec<PathBuf>, BenchError> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let csv_path = dir.join(format!("{name}.csv"));
    write_csv(&csv_path, &report.rows)?;
    written.push(csv_path);

    if report.rows.iter().any(|r| r.point == Point::Parallelism) {
        let cvs: Vec<CvRow> = modes(&report.rows)
            .into_iter()
            .map(|mode| {
                let means: Vec<f64> = report.rows.iter().filter(|r| r.mode == mode).map(|r| r.mean_ms).collect();
                CvRow { mode, latency_cv: coefficient_of_variation(&means) }
            })
            .collect();
        let path = dir.join(format!("{name}_summary.csv"));
        write_csv(&path, &cvs)?;
        written.push(path);
    }
    if !report.ratios.is_empty() {
        let path = dir.join(format!("{name}_ratios.csv"));
        write_csv(&path, &report.ratios)?;
        written.push(path);
    }

    let svg = match name {
        "throughput" => line_chart_svg(
            "Issue throughput vs send rate",
            "send rate (tx/s)",
            "achieved throughput (tx/s)",
            &series(&report.rows, |r| r.achieved_tps),
        ),
        "latency" => line_chart_svg(
            "Authentication latency vs parallel requests",
            "parallel requests",
            "mean latency (ms)",
            &series(&report.rows, |r| r.mean_ms),
        ),
        _ => ratio_chart_svg("Endorsement / baseline resource ratio", &report.ratios),
    };
    let svg_path = dir.join(format!("{name}.svg"));
    std::fs::write(&svg_path, svg)?;
    written.push(svg_path);
    Ok(written)
}

fn modes(rows: &[BenchRow]) -> Vec<Mode> {
    let mut m: Vec<Mode> = Vec::new();
    for r in rows {
        if !m.contains(&r.mode) {
            m.push(r.mode);
        }
    }
    m
}

fn series(rows: &[BenchRow], y: impl Fn(&BenchRow) -> f64) -> Vec<(String, Vec<(f64, f64)>)> {
    modes(rows)
        .into_iter()
        .map(|m| (m.to_string(), rows.iter().filter(|r| r.mode == m).map(|r| (r.target, y(r))).collect()))
        .collect()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Upper axis bound rounded to 1, 2 or 5 times a power of ten.
fn nice_max(v: f64) -> f64 {
    if v <= 0.0 || !v.is_finite() {
        return 1.0;
    }
    let mag = 10f64.powf(v.log10().floor());
    [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|&c| c >= v).unwrap_or(10.0 * mag)
}

fn header(out: &mut String, title: &str) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = write!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = write!(out, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, (W - RIGHT + LEFT) / 2.0, escape(title));
}

/// A line chart with one polyline per series and a legend on the right.
pub fn line_chart_svg(title: &str, x_label: &str, y_label: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let pts = series.iter().flat_map(|(_, p)| p.iter());
    let (xmax, ymax) = pts.fold((0.0f64, 0.0f64), |(x, y), &(px, py)| (x.max(px), y.max(py)));
    let (xmax, ymax) = (nice_max(xmax), nice_max(ymax * 1.05));
    let (pw, ph) = (W - LEFT - RIGHT, H - TOP - BOTTOM);
    let sx = |x: f64| LEFT + x / xmax * pw;
    let sy = |y: f64| TOP + ph - y / ymax * ph;

    let mut out = String::new();
    header(&mut out, title);
    for i in 0..=5 {
        let f = i as f64 / 5.0;
        let (x, y) = (LEFT + f * pw, TOP + ph - f * ph);
        let _ = write!(out, r##"<line x1="{LEFT}" y1="{y}" x2="{}" y2="{y}" stroke="#ddd"/>"##, LEFT + pw);
        let _ = write!(out, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, LEFT - 6.0, y + 4.0, fmt_tick(f * ymax));
        let _ = write!(out, r#"<text x="{x}" y="{}" text-anchor="middle">{}</text>"#, TOP + ph + 18.0, fmt_tick(f * xmax));
    }
    let _ = write!(out, r#"<line x1="{LEFT}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, TOP + ph, LEFT + pw, TOP + ph);
    let _ = write!(out, r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{}" stroke="black"/>"#, TOP + ph);
    let _ = write!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, H - 12.0, escape(x_label));
    let _ = write!(
        out,
        r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(y_label)
    );
    for (i, (name, points)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = points.iter().map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y))).collect();
        let _ = write!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, path.join(" "));
        for &(x, y) in points {
            let _ = write!(out, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#, sx(x), sy(y));
        }
        let ly = TOP + 10.0 + i as f64 * 18.0;
        let lx = LEFT + pw + 16.0;
        let _ = write!(out, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0);
        let _ = write!(out, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, escape(name));
    }
    out.push_str("</svg>\n");
    out
}

/// Horizontal bars, one per counter, with a reference line at ratio 1.
fn ratio_chart_svg(title: &str, ratios: &[RatioRow]) -> String {
    let finite: Vec<&RatioRow> = ratios.iter().filter(|r| r.ratio.is_finite()).collect();
    let max = nice_max(finite.iter().map(|r| r.ratio).fold(1.0, f64::max) * 1.05);
    let (left, pw) = (170.0, W - 170.0 - 40.0);
    let bar_h = ((H - TOP - BOTTOM) / ratios.len().max(1) as f64).min(36.0);
    let mut out = String::new();
    header(&mut out, title);
    for (i, r) in ratios.iter().enumerate() {
        let y = TOP + i as f64 * bar_h;
        let len = if r.ratio.is_finite() { r.ratio / max * pw } else { pw };
        let label = if r.ratio.is_finite() { format!("{:.2}", r.ratio) } else { "baseline 0".into() };
        let _ = write!(out, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, left - 8.0, y + bar_h / 2.0 + 4.0, escape(&r.counter));
        let _ = write!(out, r#"<rect x="{left}" y="{}" width="{len:.1}" height="{}" fill="{}"/>"#, y + 4.0, bar_h - 8.0, COLORS[0]);
        let _ = write!(out, r#"<text x="{}" y="{}">{}</text>"#, left + len.min(pw - 60.0) + 4.0, y + bar_h / 2.0 + 4.0, label);
    }
    let one = left + 1.0 / max * pw;
    let bottom = TOP + ratios.len() as f64 * bar_h;
    let _ = write!(out, r#"<line x1="{one:.1}" y1="{TOP}" x2="{one:.1}" y2="{bottom}" stroke="black" stroke-dasharray="4 3"/>"#);
    let _ = write!(out, r#"<text x="{one:.1}" y="{}" text-anchor="middle">1.0</text>"#, bottom + 16.0);
    out.push_str("</svg>\n");
    out
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 || v.abs() >= 10.0 {
        format!("{v:.0}")
    } else if v.abs() >= 1.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.3}")
    }
}
