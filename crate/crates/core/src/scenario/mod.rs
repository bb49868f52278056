//! Experiment campaigns: pump-power sweeps, detector-upgrade projections and
//! the published-results comparison table.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::time::Instant;

use crate::estimator::estimate_scenario;
use crate::model::{single_mode_g2_theory, Figure, FiguresOfMerit, ModelError};
use crate::simkernel::{run, SimError, SimScenario};

/// Which knob a sweep turns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    LaserPowerMw,
    NMean,
}

/// A sweep campaign: one base scenario evaluated over an ordered grid.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub base: SimScenario,
    pub variable: SweepVariable,
    /// Strictly increasing, non-empty.
    pub grid: Vec<f64>,
    /// Simulated span per grid point (s).
    pub duration_s: f64,
    /// Point i runs with seed `seed_base + i`.
    pub seed_base: u64,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.grid.is_empty() {
            return Err(SimError::InvalidScenario("sweep grid is empty".into()));
        }
        if self.grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SimError::InvalidScenario(
                "sweep grid must be strictly increasing".into(),
            ));
        }
        let duration_ok = self.duration_s.is_finite() && self.duration_s > 0.0;
        if !duration_ok {
            return Err(SimError::InvalidScenario(
                "sweep duration must be > 0".into(),
            ));
        }
        Ok(())
    }

    /// The fully resolved scenario of grid point `index`.
    pub fn point_scenario(&self, index: usize) -> SimScenario {
        let mut scenario = self.base.clone();
        match self.variable {
            SweepVariable::LaserPowerMw => scenario.set_laser_power(self.grid[index]),
            SweepVariable::NMean => scenario.set_n_mean(self.grid[index]),
        }
        scenario.duration_s = self.duration_s;
        scenario.seed = self.seed_base + index as u64;
        scenario
    }

    /// Default grid: 8 log-spaced laser powers whose analytic heralding
    /// rates span 50 kHz to 2.1 MHz.
    pub fn default_grid(base: &SimScenario) -> Result<Vec<f64>, ModelError> {
        let r_ref = base
            .source
            .analytic_heralding_rate(base.sspd.efficiency)?;
        let p_ref = base.source.laser_power_mw;
        let (r_lo, r_hi) = (5.0e4_f64, 2.1e6_f64);
        let n = 8;
        Ok((0..n)
            .map(|i| {
                let f = i as f64 / (n - 1) as f64;
                let r = r_lo * (r_hi / r_lo).powf(f);
                p_ref * r / r_ref
            })
            .collect())
    }
}

/// One sweep point's outcome. Failures stay in-row; the sweep continues.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub set_value: f64,
    pub figures: Option<FiguresOfMerit>,
    /// Single-mode theory g² at the point's inferred mean pair number.
    pub g2_theory: Option<f64>,
    pub runtime_s: f64,
    pub error: Option<String>,
}

/// Run every grid point (in parallel), returning rows in grid order.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>, SimError> {
    spec.validate()?;
    let rows: Vec<SweepRow> = (0..spec.grid.len())
        .into_par_iter()
        .map(|index| run_point(spec, index))
        .collect();
    Ok(rows)
}

fn run_point(spec: &SweepSpec, index: usize) -> SweepRow {
    let started = Instant::now();
    let scenario = spec.point_scenario(index);
    let outcome = run(&scenario)
        .map_err(|e| e.to_string())
        .and_then(|totals| estimate_scenario(&totals, &scenario).map_err(|e| e.to_string()))
        .and_then(|figures| {
            let theory = figures
                .n_mean
                .value()
                .map(|mu| single_mode_g2_theory(mu, scenario.source.statistics))
                .transpose()
                .map_err(|e| e.to_string())?;
            Ok((figures, theory))
        });
    match outcome {
        Ok((figures, theory)) => SweepRow {
            set_value: spec.grid[index],
            figures: Some(figures),
            g2_theory: theory,
            runtime_s: started.elapsed().as_secs_f64(),
            error: None,
        },
        Err(e) => SweepRow {
            set_value: spec.grid[index],
            figures: None,
            g2_theory: None,
            runtime_s: started.elapsed().as_secs_f64(),
            error: Some(e),
        },
    }
}

/// Detector/coupling upgrade to project onto measured figures.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct UpgradeSpec {
    pub old_eta_d: f64,
    pub new_eta_d: f64,
    pub old_gamma: f64,
    pub new_gamma: f64,
}

impl UpgradeSpec {
    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, v) in [
            ("old_eta_d", self.old_eta_d),
            ("new_eta_d", self.new_eta_d),
            ("old_gamma", self.old_gamma),
            ("new_gamma", self.new_gamma),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(ModelError::InvalidConfig(format!(
                    "{name} must lie in (0, 1], got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn rate_scale(&self) -> f64 {
        (self.new_eta_d / self.old_eta_d) * (self.new_gamma / self.old_gamma)
    }

    pub fn gamma_scale(&self) -> f64 {
        self.new_gamma / self.old_gamma
    }
}

/// Project measured figures onto upgraded detector efficiency and coupling:
/// the heralding rate scales with both, the heralding efficiency with the
/// coupling (capped at 1), and g² is held at its base value (the upgrade adds
/// no multi-photon contamination).
pub fn project_upgrade(
    base: &FiguresOfMerit,
    upgrade: &UpgradeSpec,
) -> Result<FiguresOfMerit, ModelError> {
    upgrade.validate()?;
    let rs = upgrade.rate_scale();
    let gs = upgrade.gamma_scale();
    let scale_measured = |m: crate::model::Measured, k: f64| {
        crate::model::Measured::new(m.value * k, m.sigma * k)
    };
    let scale_figure = |f: &Figure, k: f64, cap: Option<f64>| match f {
        Figure::Defined { value, sigma } => {
            let v = value * k;
            match cap {
                Some(c) if v > c => Figure::defined(c, sigma * k),
                _ => Figure::defined(v, sigma * k),
            }
        }
        Figure::Undefined { reason } => Figure::undefined(reason.clone()),
    };
    Ok(FiguresOfMerit {
        r_h_hz: scale_measured(base.r_h_hz, rs),
        // S1 = P1 R eta1 / 2 picks up both scalings; S2 follows from g2 held
        // fixed at the scaled S1 and R.
        s1_hz: scale_measured(base.s1_hz, rs * gs),
        s2_hz: scale_measured(base.s2_hz, rs * gs * gs),
        p1: scale_figure(&base.p1, gs, Some(1.0)),
        g2: base.g2.clone(),
        n_mean: base.n_mean.clone(),
        warnings: base.warnings.clone(),
    })
}

// ---------------------------------------------------------------------------
// Comparison table
// ---------------------------------------------------------------------------

/// One table cell: a value with an optional comparison qualifier ("~", "<",
/// "<~") and an optional footnote tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    #[serde(rename = "v")]
    pub value: f64,
    #[serde(rename = "q", default, skip_serializing_if = "Option::is_none")]
    pub qualifier: Option<String>,
    #[serde(rename = "note", default, skip_serializing_if = "Option::is_none")]
    pub footnote: Option<String>,
}

impl Cell {
    pub fn plain(value: f64) -> Self {
        Cell {
            value,
            qualifier: None,
            footnote: None,
        }
    }
}

/// One comparison-table row: named figures in the published layout.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name_note: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p1: Option<Cell>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_d: Option<Cell>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_h_hz: Option<Cell>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_mean: Option<Cell>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g2: Option<Cell>,
}

impl TableRow {
    /// Build a row from estimated or projected figures.
    pub fn from_figures(name: impl Into<String>, eta_d: Option<f64>, f: &FiguresOfMerit) -> Self {
        TableRow {
            name: name.into(),
            name_note: None,
            p1: f.p1.value().map(Cell::plain),
            eta_d: eta_d.map(Cell::plain),
            r_h_hz: Some(Cell::plain(f.r_h_hz.value)),
            n_mean: f.n_mean.value().map(Cell::plain),
            g2: f.g2.value().map(Cell::plain),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
struct CatalogFile {
    footnotes: BTreeMap<String, String>,
    entries: Vec<TableRow>,
}

fn catalog_file() -> CatalogFile {
    serde_json::from_str(include_str!("catalog.json")).expect("bundled catalog parses")
}

/// The bundled catalog of published source realizations, one row per group,
/// at each group's highest reported heralding rate.
pub fn catalog_rows() -> Vec<TableRow> {
    catalog_file().entries
}

/// Footnote legend of the bundled catalog.
pub fn catalog_footnotes() -> BTreeMap<String, String> {
    catalog_file().footnotes
}

fn format_rate(hz: f64) -> String {
    if hz >= 1e6 {
        format!("{} MHz", trim(hz / 1e6))
    } else if hz >= 1e3 {
        format!("{} kHz", trim(hz / 1e3))
    } else {
        format!("{} Hz", trim(hz))
    }
}

fn trim(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() {
        "0".into()
    } else {
        s.into()
    }
}

fn format_cell(cell: &Option<Cell>, rate: bool) -> String {
    match cell {
        None => "-".into(),
        Some(c) => {
            let mut s = String::new();
            if let Some(q) = &c.qualifier {
                s.push_str(q);
            }
            if rate {
                s.push_str(&format_rate(c.value));
            } else {
                s.push_str(&trim_sig(c.value));
            }
            if let Some(n) = &c.footnote {
                s.push('^');
                s.push_str(n);
            }
            s
        }
    }
}

fn trim_sig(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    // Exact short literals (catalog values) print as-is; long mantissas
    // (estimated figures) round to four decimals.
    let exact = format!("{v}");
    if exact.len() <= 7 {
        return exact;
    }
    let s = format!("{v:.4}");
    let trimmed = s.trim_end_matches('0').trim_end_matches('.');
    if trimmed == "0" || trimmed == "-0" || trimmed.is_empty() {
        format!("{v:.2e}")
    } else {
        trimmed.into()
    }
}

/// Render rows in the published five-column layout. Missing fields render as
/// "-"; footnote tags used by any row are explained under the table.
pub fn comparison_table(rows: &[TableRow]) -> String {
    let header = ["", "P1", "eta_D", "R_H", "<n>", "g2(0)"];
    let mut grid: Vec<[String; 6]> = vec![header.map(|s| s.to_string())];
    let mut notes_used: Vec<String> = Vec::new();
    let mut note = |tag: &Option<String>| {
        if let Some(t) = tag {
            if !notes_used.contains(t) {
                notes_used.push(t.clone());
            }
        }
    };
    for row in rows {
        note(&row.name_note);
        for c in [&row.p1, &row.eta_d, &row.r_h_hz, &row.n_mean, &row.g2]
            .into_iter()
            .flatten()
        {
            note(&c.footnote);
        }
        let mut name = row.name.clone();
        if let Some(n) = &row.name_note {
            name.push('^');
            name.push_str(n);
        }
        grid.push([
            name,
            format_cell(&row.p1, false),
            format_cell(&row.eta_d, false),
            format_cell(&row.r_h_hz, true),
            format_cell(&row.n_mean, false),
            format_cell(&row.g2, false),
        ]);
    }
    let mut widths = [0usize; 6];
    for row in &grid {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    for (i, row) in grid.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .zip(widths)
            .map(|(cell, w)| format!("{cell:<w$}"))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 10));
            out.push('\n');
        }
    }
    if !notes_used.is_empty() {
        let legend = catalog_footnotes();
        notes_used.sort();
        for tag in notes_used {
            if let Some(text) = legend.get(&tag) {
                out.push_str(&format!("^{tag} {text}\n"));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Measured;
    use crate::model::PairStatistics;

    fn reference_figures() -> FiguresOfMerit {
        FiguresOfMerit {
            r_h_hz: Measured::new(2.1e6, 1e3),
            s1_hz: Measured::new(110_250.0, 100.0),
            s2_hz: Measured::new(133.1, 5.0),
            p1: Figure::defined(0.42, 0.004),
            g2: Figure::defined(0.023, 0.001),
            n_mean: Figure::defined(0.005, 5e-5),
            warnings: Vec::new(),
        }
    }

    #[test]
    fn identity_upgrade_changes_nothing() {
        let base = reference_figures();
        let up = UpgradeSpec {
            old_eta_d: 0.17,
            new_eta_d: 0.17,
            old_gamma: 0.60,
            new_gamma: 0.60,
        };
        let projected = project_upgrade(&base, &up).unwrap();
        assert_eq!(projected, base);
    }

    #[test]
    fn reference_upgrade_projection() {
        let base = reference_figures();
        let up = UpgradeSpec {
            old_eta_d: 0.17,
            new_eta_d: 0.90,
            old_gamma: 0.60,
            new_gamma: 0.80,
        };
        let projected = project_upgrade(&base, &up).unwrap();
        let expect = 2.1e6 * (0.90 / 0.17) * (0.80 / 0.60);
        let r = projected.r_h_hz.value;
        assert!(((r - expect) / expect).abs() < 1e-12);
        assert!(r > 14.1e6 && r < 15.6e6, "projected R_H {r}");
        assert!((projected.p1.value().unwrap() - 0.56).abs() < 1e-12);
        assert_eq!(projected.g2, base.g2);
        assert_eq!(projected.n_mean, base.n_mean);
    }

    #[test]
    fn detector_only_upgrade_factor() {
        let base = reference_figures();
        let up = UpgradeSpec {
            old_eta_d: 0.17,
            new_eta_d: 0.90,
            old_gamma: 0.60,
            new_gamma: 0.60,
        };
        let projected = project_upgrade(&base, &up).unwrap();
        let factor = projected.r_h_hz.value / base.r_h_hz.value;
        assert!(((factor - 0.90 / 0.17) / (0.90 / 0.17)).abs() < 1e-12);
        assert!((factor - 5.294).abs() < 0.001, "factor {factor}");
        // P1 cap: pushing gamma far above its base saturates at 1.
        let capped = project_upgrade(
            &base,
            &UpgradeSpec {
                old_eta_d: 0.17,
                new_eta_d: 0.17,
                old_gamma: 0.30,
                new_gamma: 0.90,
            },
        )
        .unwrap();
        assert_eq!(capped.p1.value().unwrap(), 1.0);
    }

    #[test]
    fn catalog_reference_rows() {
        let rows = catalog_rows();
        assert_eq!(rows.len(), 7);
        let nice = &rows[0];
        assert_eq!(nice.name, "Nice");
        assert_eq!(nice.p1.as_ref().unwrap().value, 0.42);
        assert_eq!(nice.eta_d.as_ref().unwrap().value, 0.17);
        assert_eq!(nice.r_h_hz.as_ref().unwrap().value, 2.1e6);
        assert_eq!(nice.n_mean.as_ref().unwrap().value, 0.005);
        assert_eq!(nice.g2.as_ref().unwrap().value, 0.023);
        let geneva = &rows[1];
        assert_eq!(geneva.p1.as_ref().unwrap().value, 0.45);
        assert_eq!(geneva.eta_d.as_ref().unwrap().value, 0.50);
        assert_eq!(geneva.r_h_hz.as_ref().unwrap().value, 4.4e6);
        assert_eq!(geneva.n_mean.as_ref().unwrap().value, 0.1);
        assert_eq!(geneva.g2.as_ref().unwrap().value, 0.18);
        assert_eq!(geneva.g2.as_ref().unwrap().footnote.as_deref(), Some("a"));
        let upgraded = &rows[6];
        assert_eq!(upgraded.name_note.as_deref(), Some("c"));
        assert_eq!(upgraded.r_h_hz.as_ref().unwrap().value, 1.5e7);
    }

    #[test]
    fn table_formatting() {
        let rows = catalog_rows();
        let table = comparison_table(&rows);
        assert!(table.contains("Nice"));
        assert!(table.contains("2.1 MHz"));
        assert!(table.contains("105 kHz"));
        assert!(table.contains("~10 kHz^b"));
        assert!(table.contains("<0.3"));
        assert!(table.contains("Nice^c"));
        assert!(table.contains("^a theoretically calculated"));
        // Vienna has no n_mean / g2.
        let vienna_line = table.lines().find(|l| l.starts_with("Vienna")).unwrap();
        assert!(vienna_line.contains('-'));
        // Empty input renders the header only.
        let empty = comparison_table(&[]);
        assert_eq!(empty.lines().count(), 2); // header + rule
    }

    #[test]
    fn sweep_grid_validation() {
        let base = SimScenario::single_mode(0.005, PairStatistics::Thermal);
        let mut spec = SweepSpec {
            base,
            variable: SweepVariable::NMean,
            grid: vec![],
            duration_s: 1e-5,
            seed_base: 5,
        };
        assert!(spec.validate().is_err());
        spec.grid = vec![0.002, 0.002];
        assert!(spec.validate().is_err());
        spec.grid = vec![0.002, 0.005];
        assert!(spec.validate().is_ok());
    }

    #[test]
    fn single_point_sweep_equals_plain_run() {
        let base = SimScenario::single_mode(0.005, PairStatistics::Thermal);
        let spec = SweepSpec {
            base,
            variable: SweepVariable::NMean,
            grid: vec![0.004],
            duration_s: 1e-4,
            seed_base: 9,
        };
        let rows = run_sweep(&spec).unwrap();
        assert_eq!(rows.len(), 1);
        let row = &rows[0];
        assert!(row.error.is_none());
        let scenario = spec.point_scenario(0);
        let totals = crate::simkernel::run(&scenario).unwrap();
        let figures = estimate_scenario(&totals, &scenario).unwrap();
        assert_eq!(row.figures.as_ref().unwrap(), &figures);
    }

    #[test]
    fn failing_point_is_kept_in_row() {
        let base = SimScenario::single_mode(0.005, PairStatistics::Thermal);
        let spec = SweepSpec {
            base,
            variable: SweepVariable::NMean,
            grid: vec![-0.5, 0.004],
            duration_s: 1e-5,
            seed_base: 1,
        };
        let rows = run_sweep(&spec).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].error.is_some());
        assert!(rows[0].figures.is_none());
        assert!(rows[1].error.is_none());
    }

    #[test]
    fn default_grid_spans_rate_decades() {
        let base = crate::simkernel::SimScenario::reference();
        let grid = SweepSpec::default_grid(&base).unwrap();
        assert_eq!(grid.len(), 8);
        assert!(grid.windows(2).all(|w| w[1] > w[0]));
        // Endpoint reproduces the base power (R_H 2.1 MHz at 40 mW).
        assert!((grid[7] - 40.0).abs() < 1e-9, "endpoint {}", grid[7]);
        assert!((grid[0] - 40.0 * 5.0e4 / 2.1e6).abs() < 1e-9);
    }
}
