//! SVG heatmaps and metric curves with CSV companions.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::io::{fmt_f64, write_csv, write_json, write_text};
use crate::error::{Error, Result};
use crate::regression::{EvalRecord, Family};
use crate::solver::ParamGrid;

const MASK_COLOR: &str = "#ffffff";
const MISSING_COLOR: &str = "#d9d9d9";
const COLORMAP: &str = "viridis (5-stop linear)";
const VIRIDIS: [(f64, f64, f64); 5] = [
    (68.0, 1.0, 84.0),
    (59.0, 82.0, 139.0),
    (33.0, 145.0, 140.0),
    (94.0, 201.0, 98.0),
    (253.0, 231.0, 37.0),
];
const FAMILY_COLORS: [&str; 5] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd"];

fn color_at(u: f64) -> String {
    let u = if u.is_finite() { u.clamp(0.0, 1.0) } else { 0.0 };
    let pos = u * (VIRIDIS.len() - 1) as f64;
    let k = (pos.floor() as usize).min(VIRIDIS.len() - 2);
    let f = pos - k as f64;
    let (a, b) = (VIRIDIS[k], VIRIDIS[k + 1]);
    let mix = |x: f64, y: f64| (x + (y - x) * f).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Colour scale and rendering choices written next to each heatmap.
#[derive(Debug, Clone, Serialize)]
pub struct HeatmapLegend {
    pub title: String,
    pub vmin: f64,
    pub vmax: f64,
    pub colormap: &'static str,
    pub masked_color: &'static str,
    pub missing_color: &'static str,
    pub masked_cells: usize,
    pub x_axis: &'static str,
    pub y_axis: &'static str,
    pub csv_layout: &'static str,
}

/// Finite min/max of the values, widened when degenerate.
pub fn value_range(values: &[f64]) -> (f64, f64) {
    let (lo, hi) = values
        .iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

/// Writes `<stem>.csv`, `<stem>.svg` and `<stem>.legend.json`.
///
/// `values` are indexed by row-major grid id; NaN marks a missing value.
/// Cells listed in `mask` are blanked (left empty in the CSV, white in the
/// image).
pub fn emit_heatmap(
    grid: &ParamGrid,
    values: &[f64],
    mask: Option<&[usize]>,
    scale: Option<(f64, f64)>,
    title: &str,
    stem: &Path,
) -> Result<Vec<PathBuf>> {
    let n = grid.len();
    if values.len() != n {
        return Err(Error::Dimension {
            expected: n,
            actual: values.len(),
        });
    }
    let mut masked = vec![false; n];
    for &id in mask.unwrap_or(&[]) {
        if id >= n {
            return Err(Error::config(format!("mask id {id} outside grid of {n} points")));
        }
        masked[id] = true;
    }
    let (vmin, vmax) = scale.unwrap_or_else(|| {
        let visible: Vec<f64> = values.iter().zip(&masked).filter(|(_, &m)| !m).map(|(&v, _)| v).collect();
        value_range(&visible)
    });

    let csv_path = stem.with_extension("csv");
    let rows: Vec<Vec<String>> = (0..grid.n_alpha)
        .map(|i| {
            (0..grid.n_beta)
                .map(|j| {
                    let id = grid.id(i, j);
                    if masked[id] { String::new() } else { fmt_f64(values[id]) }
                })
                .collect()
        })
        .collect();
    write_csv(&csv_path, None, &rows)?;

    let cell = (480.0 / grid.n_alpha.max(grid.n_beta) as f64).max(2.0);
    let (left, top) = (70.0, 40.0);
    let width = cell * grid.n_alpha as f64;
    let height = cell * grid.n_beta as f64;
    let total_w = left + width + 110.0;
    let total_h = top + height + 60.0;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total_w:.0}" height="{total_h:.0}" viewBox="0 0 {total_w:.0} {total_h:.0}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, left + width / 2.0, esc(title));
    for i in 0..grid.n_alpha {
        for j in 0..grid.n_beta {
            let id = grid.id(i, j);
            let fill = if masked[id] {
                MASK_COLOR.to_string()
            } else if !values[id].is_finite() {
                MISSING_COLOR.to_string()
            } else {
                color_at((values[id] - vmin) / (vmax - vmin))
            };
            // beta grows upwards
            let x = left + i as f64 * cell;
            let y = top + (grid.n_beta - 1 - j) as f64 * cell;
            let _ = writeln!(
                svg,
                r#"<rect x="{x:.2}" y="{y:.2}" width="{c:.2}" height="{c:.2}" fill="{fill}"/>"#,
                c = cell + 0.05
            );
        }
    }
    let _ = writeln!(svg, r#"<rect x="{left}" y="{top}" width="{width:.2}" height="{height:.2}" fill="none" stroke="black"/>"#);
    let [a0, a1] = grid.alpha_range;
    let [b0, b1] = grid.beta_range;
    let _ = writeln!(svg, r#"<text x="{left}" y="{}" text-anchor="start">{}</text>"#, top + height + 16.0, fmt_f64(a0));
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, left + width, top + height + 16.0, fmt_f64(a1));
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">alpha</text>"#, left + width / 2.0, top + height + 36.0);
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, left - 6.0, top + height, fmt_f64(b0));
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, left - 6.0, top + 10.0, fmt_f64(b1));
    let _ = writeln!(svg, r#"<text x="20" y="{}" text-anchor="middle" transform="rotate(-90 20 {})">beta</text>"#, top + height / 2.0, top + height / 2.0);

    let bar_x = left + width + 20.0;
    let steps = 50;
    for s in 0..steps {
        let u = s as f64 / (steps - 1) as f64;
        let y = top + height - (s + 1) as f64 * height / steps as f64;
        let _ = writeln!(
            svg,
            r#"<rect x="{bar_x:.2}" y="{y:.2}" width="16" height="{:.2}" fill="{}"/>"#,
            height / steps as f64 + 0.05,
            color_at(u)
        );
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}">{}</text>"#, bar_x + 20.0, top + 10.0, format_tick(vmax));
    let _ = writeln!(svg, r#"<text x="{}" y="{}">{}</text>"#, bar_x + 20.0, top + height, format_tick(vmin));
    svg.push_str("</svg>\n");
    let svg_path = stem.with_extension("svg");
    write_text(&svg_path, &svg)?;

    let legend_path = stem.with_extension("legend.json");
    write_json(
        &legend_path,
        &HeatmapLegend {
            title: title.to_string(),
            vmin,
            vmax,
            colormap: COLORMAP,
            masked_color: MASK_COLOR,
            missing_color: MISSING_COLOR,
            masked_cells: masked.iter().filter(|&&m| m).count(),
            x_axis: "alpha (grid index i, left to right)",
            y_axis: "beta (grid index j, bottom to top)",
            csv_layout: "row i = alpha index, column j = beta index; masked cells empty",
        },
    )?;
    Ok(vec![csv_path, svg_path, legend_path])
}

fn format_tick(v: f64) -> String {
    if v.abs() >= 1e4 || (v != 0.0 && v.abs() < 1e-3) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveMetric {
    Mae,
    Rmse,
    R2,
}

impl CurveMetric {
    pub const ALL: [CurveMetric; 3] = [CurveMetric::Mae, CurveMetric::Rmse, CurveMetric::R2];

    pub fn name(self) -> &'static str {
        match self {
            CurveMetric::Mae => "mae",
            CurveMetric::Rmse => "rmse",
            CurveMetric::R2 => "r2",
        }
    }

    fn value(self, r: &EvalRecord) -> f64 {
        match self {
            CurveMetric::Mae => r.mae,
            CurveMetric::Rmse => r.rmse,
            CurveMetric::R2 => r.r2,
        }
    }
}

/// Lower display bound of the R² axis; CSV values are not clipped.
pub const R2_AXIS_FLOOR: f64 = -0.1;

/// Points of one family's curve after truncation at `3 * marker`.
pub fn curve_points(records: &[EvalRecord], metric: CurveMetric, marker: usize) -> BTreeMap<Family, Vec<(usize, f64)>> {
    let limit = 3 * marker.max(1);
    let mut curves: BTreeMap<Family, Vec<(usize, f64)>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.horizon <= limit) {
        curves.entry(r.family).or_default().push((r.horizon, metric.value(r)));
    }
    for pts in curves.values_mut() {
        pts.sort_by_key(|p| p.0);
    }
    curves
}

/// Writes `<stem>_<metric>.csv` with every record and `<stem>_<metric>.svg`
/// with curves up to `T <= 3 * marker` and dashed markers at `marker` and
/// `3 * marker`.
pub fn emit_curves(records: &[EvalRecord], marker: usize, title: &str, stem: &Path) -> Result<Vec<PathBuf>> {
    if records.is_empty() {
        return Err(Error::InsufficientData("no evaluation records to plot".into()));
    }
    let mut written = Vec::new();
    let base = stem.file_name().and_then(|s| s.to_str()).unwrap_or("curves").to_string();
    for metric in CurveMetric::ALL {
        let path_for = |ext: &str| stem.with_file_name(format!("{base}_{}.{ext}", metric.name()));

        let mut sorted: Vec<&EvalRecord> = records.iter().collect();
        sorted.sort_by_key(|r| (r.family, r.horizon));
        let rows: Vec<Vec<String>> = sorted
            .iter()
            .map(|r| vec![r.horizon.to_string(), r.family.to_string(), fmt_f64(metric.value(r))])
            .collect();
        let csv_path = path_for("csv");
        write_csv(&csv_path, Some(&["T", "family", metric.name()]), &rows)?;
        written.push(csv_path);

        let curves = curve_points(records, metric, marker);
        let svg_path = path_for("svg");
        write_text(&svg_path, &curve_svg(&curves, metric, marker, &format!("{title} - {}", metric.name())))?;
        written.push(svg_path);
    }
    Ok(written)
}

fn curve_svg(curves: &BTreeMap<Family, Vec<(usize, f64)>>, metric: CurveMetric, marker: usize, title: &str) -> String {
    let (w, h) = (520.0, 320.0);
    let (left, right, top, bottom) = (60.0, 130.0, 36.0, 44.0);
    let pw = w - left - right;
    let ph = h - top - bottom;
    let t_max = (3 * marker.max(1)).max(curves.values().flatten().map(|p| p.0).max().unwrap_or(1)) as f64;
    let clip = |v: f64| if metric == CurveMetric::R2 { v.max(R2_AXIS_FLOOR) } else { v };
    let vals: Vec<f64> = curves.values().flatten().map(|p| clip(p.1)).filter(|v| v.is_finite()).collect();
    let (mut lo, mut hi) = value_range(&vals);
    if metric == CurveMetric::R2 {
        lo = lo.max(R2_AXIS_FLOOR);
        hi = hi.max(1.0_f64.min(hi + 0.05));
    }
    if hi <= lo {
        hi = lo + 1.0;
    }
    let sx = |t: f64| left + pw * (t - 1.0).max(0.0) / (t_max - 1.0).max(1.0);
    let sy = |v: f64| top + ph * (1.0 - (clip(v) - lo) / (hi - lo));

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, left + pw / 2.0, esc(title));
    let _ = writeln!(svg, r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    for m in [marker, 3 * marker] {
        let x = sx(m as f64);
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.2}" y1="{top}" x2="{x:.2}" y2="{}" stroke="#555555" stroke-dasharray="5,4"/>"##,
            top + ph
        );
        let _ = writeln!(svg, r#"<text x="{x:.2}" y="{}" text-anchor="middle">T={m}</text>"#, top + ph + 16.0);
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">prefix length T</text>"#, left + pw / 2.0, h - 8.0);
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, left - 4.0, top + 10.0, format_tick(hi));
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, left - 4.0, top + ph, format_tick(lo));
    for (k, (family, pts)) in curves.iter().enumerate() {
        let color = FAMILY_COLORS[Family::ALL.iter().position(|f| f == family).unwrap_or(k) % FAMILY_COLORS.len()];
        let coords: Vec<String> = pts
            .iter()
            .filter(|p| p.1.is_finite())
            .map(|&(t, v)| format!("{:.2},{:.2}", sx(t as f64), sy(v)))
            .collect();
        let _ = writeln!(svg, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.6"/>"#, coords.join(" "));
        let ly = top + 14.0 + 18.0 * k as f64;
        let lx = left + pw + 12.0;
        let _ = writeln!(svg, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 18.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{}">{}</text>"#, lx + 24.0, ly + 4.0, family);
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::SplitKind;

    fn small_grid() -> ParamGrid {
        ParamGrid {
            n_alpha: 3,
            n_beta: 4,
            ..ParamGrid::default()
        }
    }

    #[test]
    fn heatmap_masks_cells() {
        let dir = tempfile::tempdir().unwrap();
        let g = small_grid();
        let values: Vec<f64> = (0..12).map(|v| v as f64).collect();
        let files = emit_heatmap(&g, &values, None, None, "all", &dir.path().join("a")).unwrap();
        assert_eq!(files.len(), 3);
        let csv = std::fs::read_to_string(&files[0]).unwrap();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.lines().all(|l| l.split(',').all(|c| !c.is_empty())));

        let all: Vec<usize> = (0..12).collect();
        let files = emit_heatmap(&g, &values, Some(&all), None, "masked", &dir.path().join("b")).unwrap();
        let csv = std::fs::read_to_string(&files[0]).unwrap();
        assert!(csv.lines().all(|l| l.split(',').all(str::is_empty)));
        let svg = std::fs::read_to_string(&files[1]).unwrap();
        assert_eq!(svg.matches(r##"fill="#ffffff""##).count(), 12);

        assert!(emit_heatmap(&g, &values, Some(&[12]), None, "bad", &dir.path().join("c")).is_err());
    }

    fn rec(family: Family, horizon: usize, r2: f64) -> EvalRecord {
        EvalRecord {
            split: SplitKind::Random,
            family,
            horizon,
            mae: 0.1,
            rmse: 0.2,
            r2,
            fit_seconds: 0.0,
            test_seconds: 0.0,
            test_per_sample_seconds: 0.0,
        }
    }

    #[test]
    fn curves_truncate_at_three_markers() {
        let recs: Vec<_> = (1..=50).map(|t| rec(Family::Knn, t, -0.5 + t as f64 * 0.02)).collect();
        let pts = curve_points(&recs, CurveMetric::R2, 12);
        assert_eq!(pts[&Family::Knn].last().unwrap().0, 36);

        let three: Vec<_> = [1, 3, 5].map(|t| rec(Family::Ridge, t, 0.5)).to_vec();
        let pts = curve_points(&three, CurveMetric::Mae, 12);
        assert_eq!(pts[&Family::Ridge].len(), 3);

        let dir = tempfile::tempdir().unwrap();
        let files = emit_curves(&recs, 12, "random", &dir.path().join("random")).unwrap();
        assert_eq!(files.len(), 6);
        let csv = std::fs::read_to_string(dir.path().join("random_r2.csv")).unwrap();
        // every record is kept and unclipped in the CSV
        assert_eq!(csv.lines().count(), 51);
        assert!(csv.contains("-0.48"));
        assert!(emit_curves(&[], 12, "x", &dir.path().join("x")).is_err());
    }
}
