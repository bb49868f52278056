//! Machine-readable outputs: the sweep CSV schema, run manifests and
//! best-effort SVG scatter plots.

use serde::Serialize;
use std::time::{SystemTime, UNIX_EPOCH};

use hsps_core::model::Figure;
use hsps_core::scenario::SweepRow;

/// Column layout shared by `simulate` (one row) and `sweep` (one row per
/// grid point).
pub const CSV_HEADER: &str =
    "set_value,r_h_hz,r_h_err,p1,p1_err,g2,g2_err,n_mean,g2_theory,error";

/// Sentinel for cells without a finite value.
pub const NA: &str = "NA";

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        NA.to_string()
    }
}

fn figure_cells(f: Option<&Figure>) -> (String, String) {
    match f {
        Some(Figure::Defined { value, sigma }) => (num(*value), num(*sigma)),
        _ => (NA.to_string(), NA.to_string()),
    }
}

/// Render sweep rows (or a single simulate row) as CSV.
pub fn rows_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for row in rows {
        let (r_h, r_h_err, p1, p1_err, g2, g2_err, n_mean, theory) = match &row.figures {
            Some(f) => {
                let (p1, p1_err) = figure_cells(Some(&f.p1));
                let (g2, g2_err) = figure_cells(Some(&f.g2));
                let (n_mean, _) = figure_cells(Some(&f.n_mean));
                (
                    num(f.r_h_hz.value),
                    num(f.r_h_hz.sigma),
                    p1,
                    p1_err,
                    g2,
                    g2_err,
                    n_mean,
                    row.g2_theory.map(num).unwrap_or_else(|| NA.to_string()),
                )
            }
            None => (
                NA.to_string(),
                NA.to_string(),
                NA.to_string(),
                NA.to_string(),
                NA.to_string(),
                NA.to_string(),
                NA.to_string(),
                NA.to_string(),
            ),
        };
        let error = row.error.clone().unwrap_or_default().replace(',', ";");
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            num(row.set_value),
            r_h,
            r_h_err,
            p1,
            p1_err,
            g2,
            g2_err,
            n_mean,
            theory,
            error
        ));
    }
    out
}

/// Run provenance: every output file points back to exactly one manifest.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub version: String,
    pub seed: u64,
    pub config: serde_json::Value,
    /// Unix seconds.
    pub started_at: f64,
    pub finished_at: f64,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(seed: u64, config: serde_json::Value) -> Self {
        RunManifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config,
            started_at: unix_now(),
            finished_at: 0.0,
            outputs: Vec::new(),
        }
    }

    pub fn finish(&mut self, outputs: Vec<String>) {
        self.finished_at = unix_now();
        self.outputs = outputs;
    }
}

pub fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

/// Minimal SVG scatter plot. Axis labels carry the exact data extent.
pub fn scatter_svg(title: &str, x_label: &str, y_label: &str, points: &[(f64, f64)]) -> String {
    let finite: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|(x, y)| x.is_finite() && y.is_finite())
        .collect();
    let (w, h, ml, mb, mt, mr) = (640.0, 440.0, 90.0, 60.0, 40.0, 30.0);
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">{title}</text>\n",
        w / 2.0
    ));
    if finite.is_empty() {
        svg.push_str("<text x=\"320\" y=\"220\" text-anchor=\"middle\">no data</text>\n</svg>\n");
        return svg;
    }
    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in &finite {
        x_min = x_min.min(*x);
        x_max = x_max.max(*x);
        y_min = y_min.min(*y);
        y_max = y_max.max(*y);
    }
    let x_span = if x_max > x_min { x_max - x_min } else { x_max.abs().max(1.0) };
    let y_span = if y_max > y_min { y_max - y_min } else { y_max.abs().max(1.0) };
    let px = |x: f64| ml + (x - x_min) / x_span * (w - ml - mr);
    let py = |y: f64| (h - mb) - (y - y_min) / y_span * (h - mb - mt);

    svg.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"black\"/>\n",
        h - mb,
        w - mr
    ));
    svg.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{}\" stroke=\"black\"/>\n",
        h - mb
    ));
    // Extent labels double as the axis calibration.
    svg.push_str(&format!(
        "<text x=\"{ml}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{x_min}</text>\n",
        h - mb + 16.0
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\">{x_max}</text>\n",
        w - mr,
        h - mb + 16.0
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{y_min}</text>\n",
        ml - 6.0,
        h - mb
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\">{y_max}</text>\n",
        ml - 6.0,
        mt + 4.0
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\">{x_label}</text>\n",
        (ml + w - mr) / 2.0,
        h - 16.0
    ));
    svg.push_str(&format!(
        "<text x=\"18\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 18 {0})\">{y_label}</text>\n",
        (mt + h - mb) / 2.0
    ));
    for (x, y) in &finite {
        svg.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"steelblue\"/>\n",
            px(*x),
            py(*y)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use hsps_core::model::{FiguresOfMerit, Measured};

    fn row(set: f64) -> SweepRow {
        SweepRow {
            set_value: set,
            figures: Some(FiguresOfMerit {
                r_h_hz: Measured::new(1.0e6, 1.0e3),
                s1_hz: Measured::new(5.0e4, 100.0),
                s2_hz: Measured::new(60.0, 5.0),
                p1: Figure::defined(0.42, 0.004),
                g2: Figure::defined(0.02, 0.002),
                n_mean: Figure::defined(0.0025, 1e-5),
                warnings: vec![],
            }),
            g2_theory: Some(0.0099),
            runtime_s: 0.5,
            error: None,
        }
    }

    #[test]
    fn csv_layout_and_sentinels() {
        let mut failed = row(2.0);
        failed.figures = None;
        failed.g2_theory = None;
        failed.error = Some("bad, config".into());
        let csv = rows_to_csv(&[row(1.0), failed]);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        let ok_line = lines.next().unwrap();
        assert!(ok_line.starts_with("1,1000000,1000,0.42,"));
        let bad_line = lines.next().unwrap();
        assert!(bad_line.contains("NA,NA"));
        assert!(bad_line.ends_with("bad; config"));
        // Cells are finite numbers or the sentinel, never NaN text.
        assert!(!csv.contains("NaN"));
    }

    #[test]
    fn svg_carries_data_extent() {
        let svg = scatter_svg("t", "x", "y", &[(1.0, 10.0), (5.0, 30.0)]);
        assert!(svg.contains(">1<"));
        assert!(svg.contains(">5<"));
        assert!(svg.contains(">10<"));
        assert!(svg.contains(">30<"));
        assert!(svg.contains("circle"));
        let empty = scatter_svg("t", "x", "y", &[]);
        assert!(empty.contains("no data"));
    }
}
