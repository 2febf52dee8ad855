//! Minimal SVG line charts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::harness::servo::RunRecord;

const W: f64 = 640.0;
const H: f64 = 360.0;
const MARGIN: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(name: impl Into<String>, xs: &[f64], ys: impl IntoIterator<Item = f64>) -> Self {
        Self { name: name.into(), points: xs.iter().copied().zip(ys).collect() }
    }
}

fn bounds(points: impl Iterator<Item = (f64, f64)>) -> (f64, f64, f64, f64) {
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in points.filter(|(x, y)| x.is_finite() && y.is_finite()) {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        return (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 <= 0.0 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 <= 0.0 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    (x0, x1, y0, y1)
}

fn polyline(out: &mut String, pts: impl Iterator<Item = (f64, f64)>, color: &str) {
    let _ = write!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points=""#);
    for (x, y) in pts {
        let _ = write!(out, "{x:.2},{y:.2} ");
    }
    out.push_str("\"/>\n");
}

fn frame(out: &mut String, title: &str) {
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{title}</text>"#, W / 2.0);
}

fn legend(out: &mut String, names: impl Iterator<Item = String>) {
    for (i, name) in names.enumerate() {
        let y = MARGIN + 14.0 * i as f64;
        let c = COLORS[i % COLORS.len()];
        let _ = writeln!(out, r#"<line x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="{c}" stroke-width="2"/>"#, W - 120.0, W - 100.0);
        let _ = writeln!(out, r#"<text x="{}" y="{}">{name}</text>"#, W - 95.0, y + 4.0);
    }
}

/// Line chart of several series against a shared x axis.
pub fn line_chart(title: &str, x_label: &str, series: &[Series]) -> String {
    let (x0, x1, y0, y1) = bounds(series.iter().flat_map(|s| s.points.iter().copied()));
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (W - 2.0 * MARGIN - 80.0);
    let sy = |y: f64| H - MARGIN - (y - y0) / (y1 - y0) * (H - 2.0 * MARGIN);
    let mut out = String::new();
    frame(&mut out, title);
    let (left, right, top, bottom) = (sx(x0), sx(x1), sy(y1), sy(y0));
    let _ = writeln!(out, r#"<rect x="{left}" y="{top}" width="{}" height="{}" fill="none" stroke="black"/>"#, right - left, bottom - top);
    if y0 < 0.0 && y1 > 0.0 {
        let _ = writeln!(out, r##"<line x1="{left}" y1="{0}" x2="{right}" y2="{0}" stroke="#999" stroke-dasharray="4"/>"##, sy(0.0));
    }
    let _ = writeln!(out, r#"<text x="{left}" y="{}">{x0:.3}</text>"#, bottom + 14.0);
    let _ = writeln!(out, r#"<text x="{right}" y="{}" text-anchor="end">{x1:.3}</text>"#, bottom + 14.0);
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{x_label}</text>"#, (left + right) / 2.0, bottom + 28.0);
    let _ = writeln!(out, r#"<text x="{}" y="{top}" text-anchor="end">{y1:.3e}</text>"#, left - 4.0);
    let _ = writeln!(out, r#"<text x="{}" y="{bottom}" text-anchor="end">{y0:.3e}</text>"#, left - 4.0);
    for (i, s) in series.iter().enumerate() {
        let pts = s.points.iter().filter(|(x, y)| x.is_finite() && y.is_finite()).map(|&(x, y)| (sx(x), sy(y)));
        polyline(&mut out, pts, COLORS[i % COLORS.len()]);
    }
    legend(&mut out, series.iter().map(|s| s.name.clone()));
    out.push_str("</svg>\n");
    out
}

/// Isometric projection of a 3-D path, with the target marked.
pub fn trajectory_3d(title: &str, path: &[Vector3<f64>], target: Option<Vector3<f64>>) -> String {
    let (c, s) = (30f64.to_radians().cos(), 30f64.to_radians().sin());
    let project = |p: &Vector3<f64>| ((p.x - p.y) * c, p.z + (p.x + p.y) * s);
    let mut pts: Vec<(f64, f64)> = path.iter().map(project).collect();
    let tgt = target.map(|t| project(&t));
    let (x0, x1, y0, y1) = bounds(pts.iter().copied().chain(tgt));
    let span = (x1 - x0).max(y1 - y0);
    let scale = (H - 2.0 * MARGIN) / span;
    let sx = |x: f64| MARGIN + (x - x0) * scale;
    let sy = |y: f64| H - MARGIN - (y - y0) * scale;
    let mut out = String::new();
    frame(&mut out, title);
    pts.retain(|(x, y)| x.is_finite() && y.is_finite());
    polyline(&mut out, pts.iter().map(|&(x, y)| (sx(x), sy(y))), COLORS[0]);
    if let Some(&(x, y)) = pts.first() {
        let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{}"/>"#, sx(x), sy(y), COLORS[2]);
    }
    if let Some((x, y)) = tgt {
        let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="none" stroke="{}" stroke-width="2"/>"#, sx(x), sy(y), COLORS[1]);
    }
    legend(&mut out, ["path".to_string(), "target".to_string(), "start".to_string()].into_iter());
    out.push_str("</svg>\n");
    out
}

fn save(path: PathBuf, text: String) -> Result<PathBuf> {
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes `<id>_dx.svg`, `<id>_s.svg`, `<id>_t1t2.svg` and
/// `<id>_trajectory.svg` into `dir`.
pub fn emit_plots(record: &RunRecord, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let id = &record.meta.id;
    let t = record.times();
    let axis = |f: fn(&crate::harness::servo::StepRow) -> [f64; 3], name: &str| -> Vec<Series> {
        (0..3).map(|j| Series::new(format!("{name}{}", j + 1), &t, record.rows.iter().map(|r| f(r)[j]))).collect()
    };
    let mut files = Vec::new();
    files.push(save(dir.join(format!("{id}_dx.svg")), line_chart(&format!("{id}: feature error"), "t (s)", &axis(|r| r.dx, "dx")))?);
    files.push(save(dir.join(format!("{id}_s.svg")), line_chart(&format!("{id}: sliding variable"), "t (s)", &axis(|r| r.s, "s")))?);
    let metrics = [
        Series::new("T1", &t, record.rows.iter().map(|r| r.t1)),
        Series::new("T2", &t, record.rows.iter().map(|r| r.t2)),
    ];
    files.push(save(dir.join(format!("{id}_t1t2.svg")), line_chart(&format!("{id}: estimation error"), "t (s)", &metrics))?);
    let path: Vec<Vector3<f64>> = record.rows.iter().map(|r| r.x()).collect();
    let target = Vector3::from_column_slice(&record.meta.target);
    files.push(save(dir.join(format!("{id}_trajectory.svg")), trajectory_3d(&format!("{id}: feature path"), &path, Some(target)))?);
    Ok(files)
}
