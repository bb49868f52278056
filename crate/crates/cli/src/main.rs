//! Command-line front end: closed-form evaluation, Monte Carlo runs,
//! pump-power sweeps, the comparison table and detector-upgrade projections.
//!
//! Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 simulation
//! invariant violation.

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use hsps_core::estimator::estimate_scenario;
use hsps_core::model::{
    mode_counts, multimode_heralding_limit, single_mode_g2_theory, Figure, FiguresOfMerit,
    Measured, ModelError, PairStatistics,
};
use hsps_core::scenario::{
    catalog_rows, comparison_table, project_upgrade, run_sweep, SweepRow, SweepSpec,
    SweepVariable, TableRow, UpgradeSpec,
};
use hsps_core::simkernel::{run_parallel, SimError, SimScenario};

#[derive(Parser)]
#[command(
    name = "hsps-sim",
    version,
    about = "Simulator and analytic toolkit for a pulsed heralded single-photon source"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the closed-form figures of merit (no sampling)
    Analytic(AnalyticArgs),
    /// Run the Monte Carlo chain; write results CSV and a manifest
    Simulate(SimulateArgs),
    /// Sweep the pump power over a grid; write the sweep CSV (+ SVG plots)
    Sweep(SweepArgs),
    /// Print the comparison table of source realizations
    Table(TableArgs),
    /// Project figures onto upgraded detector/coupling efficiencies
    Project(ProjectArgs),
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Sectioned key-value config file; defaults apply where keys are unset
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the seed laser average power (mW)
    #[arg(long)]
    laser_power_mw: Option<f64>,
    /// Override the heralding-band mean pairs per pulse (adjusts the pump)
    #[arg(long)]
    n_mean: Option<f64>,
    /// Override the heralding detector efficiency
    #[arg(long)]
    eta_d: Option<f64>,
    /// Override the waveguide-to-fiber coupling efficiency
    #[arg(long)]
    gamma: Option<f64>,
    /// Override the per-mode pair statistics (thermal | poissonian)
    #[arg(long)]
    statistics: Option<String>,
    /// Mode structure override: "single" drops every uncorrelated mode,
    /// "multi" keeps the configured structure
    #[arg(long)]
    modes: Option<String>,
}

#[derive(Args)]
struct AnalyticArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Print machine-readable JSON instead of text
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Simulated span (e.g. 10ms, 2s)
    #[arg(long)]
    duration: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for results.csv and manifest.json
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Comma-separated grid of laser powers in mW (default: 8 log-spaced
    /// points spanning heralding rates 50 kHz to 2.1 MHz)
    #[arg(long, allow_hyphen_values = true)]
    grid: Option<String>,
    /// Simulated span per grid point
    #[arg(long)]
    duration: Option<String>,
    /// Base seed; point i runs with seed + i
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for sweep.csv and manifest.json
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Also write p1_vs_rh.svg and g2_vs_rh.svg
    #[arg(long)]
    svg: bool,
}

#[derive(Args)]
struct TableArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Append a simulated row from a run of the resolved scenario
    #[arg(long)]
    simulate: bool,
    /// Simulated span for --simulate
    #[arg(long)]
    duration: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ProjectArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Upgraded heralding detector efficiency
    #[arg(long)]
    new_eta_d: f64,
    /// Upgraded coupling efficiency (defaults to the configured one)
    #[arg(long)]
    new_gamma: Option<f64>,
    /// Print machine-readable JSON instead of text
    #[arg(long)]
    json: bool,
}

enum CliError {
    Config(String),
    Io(String),
    Sim(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Sim(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Io(m) | CliError::Sim(m) => m,
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Model(_) | SimError::InvalidScenario(_) => CliError::Config(e.to_string()),
            SimError::InvariantViolation(_) | SimError::Pool(_) => CliError::Sim(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Config(e.to_string())
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    // Cap the global pool (used by sweeps) to the configured worker count.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count())
        .build_global();
    let result = match cli.command {
        Command::Analytic(args) => cmd_analytic(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Table(args) => cmd_table(args),
        Command::Project(args) => cmd_project(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

/// Worker cap: HSPS_SIM_THREADS env var, else the machine's parallelism.
fn worker_count() -> usize {
    std::env::var("HSPS_SIM_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

/// Load the config file (if any) and apply command-line overrides.
fn resolve_scenario(common: &CommonArgs) -> Result<(SimScenario, f64), CliError> {
    let file = match &common.config {
        Some(path) => config::ConfigFile::load(path).map_err(|e| match e {
            config::LoadError::Io(err) => io_err(path, err),
            config::LoadError::Config(err) => CliError::Config(err.message),
        })?,
        None => {
            config::ConfigFile::parse("", "defaults").map_err(|e| CliError::Config(e.message))?
        }
    };
    let (mut scenario, noise_ratio) = file.resolve().map_err(|e| CliError::Config(e.message))?;
    if let Some(stats) = &common.statistics {
        scenario.source.statistics = match stats.as_str() {
            "thermal" => PairStatistics::Thermal,
            "poissonian" => PairStatistics::Poissonian,
            other => {
                return Err(CliError::Config(format!(
                    "--statistics: expected thermal or poissonian, got '{other}'"
                )))
            }
        };
    }
    if let Some(eta) = common.eta_d {
        scenario.sspd.efficiency = eta;
    }
    if let Some(gamma) = common.gamma {
        scenario.source.gamma = gamma;
    }
    if let Some(power) = common.laser_power_mw {
        scenario.set_laser_power(power);
    }
    if let Some(n) = common.n_mean {
        scenario.set_n_mean(n);
    }
    match common.modes.as_deref() {
        None | Some("multi") => {}
        Some("single") => {
            scenario.modes.n_spectral = 1;
            scenario.modes.n_temporal = 1;
            scenario.modes.noise_mu_per_mode = 0.0;
        }
        Some(other) => {
            return Err(CliError::Config(format!(
                "--modes: expected single or multi, got '{other}'"
            )))
        }
    }
    Ok((scenario, noise_ratio))
}

/// Closed-form figures of the scenario: the rate chain plus the single-mode
/// theory value standing in for the coincidence figures.
fn analytic_figures(scenario: &SimScenario) -> Result<FiguresOfMerit, ModelError> {
    let src = &scenario.source;
    let n_mean = src.mean_pairs_per_pulse()?;
    let r_h = src.analytic_heralding_rate(scenario.sspd.efficiency)?;
    let p1 = src.analytic_heralding_efficiency()?;
    let g2 = single_mode_g2_theory(n_mean, src.statistics)?;
    let s1 = p1 * r_h * scenario.apd1.efficiency / 2.0;
    let s2 = if r_h > 0.0 && scenario.apd1.efficiency > 0.0 {
        g2 * s1 * s1 * scenario.apd2.efficiency / (r_h * scenario.apd1.efficiency)
    } else {
        0.0
    };
    Ok(FiguresOfMerit {
        r_h_hz: Measured::new(r_h, 0.0),
        s1_hz: Measured::new(s1, 0.0),
        s2_hz: Measured::new(s2, 0.0),
        p1: Figure::defined(p1, 0.0),
        g2: Figure::defined(g2, 0.0),
        n_mean: Figure::defined(n_mean, 0.0),
        warnings: Vec::new(),
    })
}

#[derive(Serialize)]
struct AnalyticReport {
    r_h_hz: f64,
    p1: f64,
    n_mean: f64,
    g2_single_mode_theory: f64,
    s1_hz: f64,
    s2_hz: f64,
    n_spectral: u32,
    n_temporal: u32,
    multimode_n_mean_cap: f64,
}

fn cmd_analytic(args: AnalyticArgs) -> Result<(), CliError> {
    let (scenario, _) = resolve_scenario(&args.common)?;
    scenario.validate()?;
    let figures = analytic_figures(&scenario)?;
    let (n_f, n_t) = mode_counts(
        scenario.source.heralded_bw_ghz,
        scenario.source.heralding_bw_ghz,
        scenario.tac2_window_ps,
        scenario.period_ps(),
    )?;
    let report = AnalyticReport {
        r_h_hz: figures.r_h_hz.value,
        p1: figures.p1.value().unwrap_or(f64::NAN),
        n_mean: figures.n_mean.value().unwrap_or(f64::NAN),
        g2_single_mode_theory: figures.g2.value().unwrap_or(f64::NAN),
        s1_hz: figures.s1_hz.value,
        s2_hz: figures.s2_hz.value,
        n_spectral: n_f,
        n_temporal: n_t,
        multimode_n_mean_cap: multimode_heralding_limit(n_f, n_t, 0.1)?,
    };
    if args.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&report).expect("report serializes")
        );
    } else {
        println!("closed-form figures (no sampling):");
        println!("  R_H    = {:.6e} Hz", report.r_h_hz);
        println!("  P1     = {:.4}", report.p1);
        println!("  <n>    = {:.6}", report.n_mean);
        println!(
            "  g2(0)  = {:.6}  (single-mode theory at <n>)",
            report.g2_single_mode_theory
        );
        println!(
            "  S1     = {:.4e} Hz, S2 = {:.4e} Hz (implied)",
            report.s1_hz, report.s2_hz
        );
        println!(
            "  modes  : N_f = {}, N_t = {}, multimode <n> cap = {:.6}",
            report.n_spectral, report.n_temporal, report.multimode_n_mean_cap
        );
    }
    Ok(())
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn single_row(scenario: &SimScenario, workers: usize) -> Result<SweepRow, CliError> {
    let started = std::time::Instant::now();
    let totals = run_parallel(scenario, workers)?;
    let figures = estimate_scenario(&totals, scenario)?;
    let g2_theory = figures
        .n_mean
        .value()
        .map(|mu| single_mode_g2_theory(mu, scenario.source.statistics))
        .transpose()?;
    Ok(SweepRow {
        set_value: scenario.source.laser_power_mw,
        figures: Some(figures),
        g2_theory,
        runtime_s: started.elapsed().as_secs_f64(),
        error: None,
    })
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let (mut scenario, noise_ratio) = resolve_scenario(&args.common)?;
    if let Some(d) = &args.duration {
        scenario.duration_s = config::parse_duration(d).map_err(CliError::Config)?;
    }
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    scenario.validate()?;

    let mut manifest = output::RunManifest::new(
        scenario.seed,
        serde_json::json!({
            "scenario": &scenario,
            "noise_brightness_ratio": noise_ratio,
            "config_text": config::serialize(&scenario, noise_ratio),
        }),
    );
    let row = single_row(&scenario, worker_count())?;
    let csv = output::rows_to_csv(std::slice::from_ref(&row));

    std::fs::create_dir_all(&args.out).map_err(|e| io_err(&args.out, e))?;
    let csv_path = args.out.join("results.csv");
    write_file(&csv_path, &csv)?;
    manifest.finish(vec![csv_path.display().to_string()]);
    let manifest_path = args.out.join("manifest.json");
    write_file(
        &manifest_path,
        &serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;

    let figures = row.figures.as_ref().expect("successful run has figures");
    println!(
        "simulated {} s (seed {}): R_H = {:.4e} Hz, P1 = {}, g2 = {}, <n> = {}",
        scenario.duration_s,
        scenario.seed,
        figures.r_h_hz.value,
        display_figure(&figures.p1),
        display_figure(&figures.g2),
        display_figure(&figures.n_mean),
    );
    for w in &figures.warnings {
        println!("  warning: {w}");
    }
    println!("wrote {} and {}", csv_path.display(), manifest_path.display());
    Ok(())
}

fn display_figure(f: &Figure) -> String {
    match f {
        Figure::Defined { value, sigma } => format!("{value:.5} +- {sigma:.5}"),
        Figure::Undefined { reason } => format!("undefined ({reason})"),
    }
}

fn cmd_sweep(args: SweepArgs) -> Result<(), CliError> {
    let (mut base, noise_ratio) = resolve_scenario(&args.common)?;
    if let Some(seed) = args.seed {
        base.seed = seed;
    }
    base.validate()?;
    let duration_s = match &args.duration {
        Some(d) => config::parse_duration(d).map_err(CliError::Config)?,
        None => base.duration_s,
    };
    let grid = match &args.grid {
        Some(text) => {
            let mut grid = Vec::new();
            for part in text.split(',') {
                let v: f64 = part
                    .trim()
                    .parse()
                    .map_err(|_| CliError::Config(format!("--grid: '{part}' is not a number")))?;
                grid.push(v);
            }
            grid
        }
        None => SweepSpec::default_grid(&base)?,
    };
    let spec = SweepSpec {
        variable: SweepVariable::LaserPowerMw,
        seed_base: base.seed,
        base,
        grid,
        duration_s,
    };

    let mut manifest = output::RunManifest::new(
        spec.seed_base,
        serde_json::json!({
            "scenario": &spec.base,
            "noise_brightness_ratio": noise_ratio,
            "grid_laser_power_mw": &spec.grid,
            "duration_s_per_point": duration_s,
        }),
    );
    let rows = run_sweep(&spec)?;
    let csv = output::rows_to_csv(&rows);

    std::fs::create_dir_all(&args.out).map_err(|e| io_err(&args.out, e))?;
    let csv_path = args.out.join("sweep.csv");
    write_file(&csv_path, &csv)?;
    let mut outputs = vec![csv_path.display().to_string()];

    if args.svg {
        let p1_points: Vec<(f64, f64)> = rows
            .iter()
            .filter_map(|r| {
                let f = r.figures.as_ref()?;
                Some((f.r_h_hz.value, f.p1.value()?))
            })
            .collect();
        let g2_points: Vec<(f64, f64)> = rows
            .iter()
            .filter_map(|r| {
                let f = r.figures.as_ref()?;
                Some((f.r_h_hz.value, f.g2.value()?))
            })
            .collect();
        for (name, title, ylab, points) in [
            (
                "p1_vs_rh.svg",
                "Heralding efficiency vs heralding rate",
                "P1",
                p1_points,
            ),
            (
                "g2_vs_rh.svg",
                "Heralded g2(0) vs heralding rate",
                "g2(0)",
                g2_points,
            ),
        ] {
            let path = args.out.join(name);
            write_file(&path, &output::scatter_svg(title, "R_H (Hz)", ylab, &points))?;
            outputs.push(path.display().to_string());
        }
    }

    manifest.finish(outputs);
    let manifest_path = args.out.join("manifest.json");
    write_file(
        &manifest_path,
        &serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;

    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    println!(
        "swept {} points ({} failed), wrote {} and {}",
        rows.len(),
        failed,
        csv_path.display(),
        manifest_path.display()
    );
    Ok(())
}

fn cmd_table(args: TableArgs) -> Result<(), CliError> {
    let (mut scenario, _) = resolve_scenario(&args.common)?;
    let mut rows = catalog_rows();
    if args.simulate {
        if let Some(d) = &args.duration {
            scenario.duration_s = config::parse_duration(d).map_err(CliError::Config)?;
        }
        if let Some(seed) = args.seed {
            scenario.seed = seed;
        }
        scenario.validate()?;
        let row = single_row(&scenario, worker_count())?;
        let figures = row.figures.expect("successful run has figures");
        rows.push(TableRow::from_figures(
            "simulated",
            Some(scenario.sspd.efficiency),
            &figures,
        ));
    }
    print!("{}", comparison_table(&rows));
    Ok(())
}

fn cmd_project(args: ProjectArgs) -> Result<(), CliError> {
    let (scenario, _) = resolve_scenario(&args.common)?;
    scenario.validate()?;
    let base = analytic_figures(&scenario)?;
    let upgrade = UpgradeSpec {
        old_eta_d: scenario.sspd.efficiency,
        new_eta_d: args.new_eta_d,
        old_gamma: scenario.source.gamma,
        new_gamma: args.new_gamma.unwrap_or(scenario.source.gamma),
    };
    let projected = project_upgrade(&base, &upgrade)?;
    if args.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&serde_json::json!({
                "base": &base,
                "projected": &projected,
                "rate_scale": upgrade.rate_scale(),
            }))
            .expect("projection serializes")
        );
    } else {
        let rows = vec![
            TableRow::from_figures("base", Some(upgrade.old_eta_d), &base),
            TableRow::from_figures("projected", Some(upgrade.new_eta_d), &projected),
        ];
        print!("{}", comparison_table(&rows));
        println!("rate scale = {:.4}", upgrade.rate_scale());
    }
    Ok(())
}
