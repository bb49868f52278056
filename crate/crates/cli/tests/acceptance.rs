//! Acceptance suite: one test per release criterion, each printing a
//! pass/fail line (run with `-- --nocapture` to see them). Tests share a
//! lock so the timed criteria run alone.

use std::process::Command;
use std::sync::Mutex;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;

use hsps_core::estimator::estimate_scenario;
use hsps_core::model::{
    dead_time_correct, heralding_rate, invert_heralding_rate, mode_counts,
    multimode_heralding_limit, observed_rate, single_mode_g2_theory, Figure, FiguresOfMerit,
    Measured, PairStatistics,
};
use hsps_core::scenario::{project_upgrade, UpgradeSpec};
use hsps_core::simkernel::{detect, run, run_parallel, DetectorId, SimScenario};

static SERIAL: Mutex<()> = Mutex::new(());

fn lock() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn check(criterion: u32, ok: bool, detail: &str) {
    assert!(ok, "criterion {criterion}: FAIL -- {detail}");
}

fn binary(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_hsps-sim"))
        .args(args)
        .output()
        .expect("binary runs")
}

#[test]
fn criterion_01_formula_fidelity() {
    let _g = lock();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let started = Instant::now();
    for _ in 0..10_000 {
        let f = rng.random_range(1e6..1e11);
        let n = rng.random_range(1e-8..0.2);
        let gamma = rng.random_range(0.01..1.0);
        let t_h = rng.random_range(0.01..1.0);
        let eta = rng.random_range(0.01..1.0);
        let r = heralding_rate(f, n, gamma, t_h, eta).unwrap();
        let back = invert_heralding_rate(r, f, gamma, t_h, eta).unwrap();
        check(
            1,
            ((back - n) / n).abs() <= 1e-12,
            &format!("rate round-trip off: {n} -> {back}"),
        );

        let rate = rng.random_range(0.0..1e5);
        let tau = rng.random_range(0.0..5e-6);
        if rate * tau < 0.5 {
            let measured = observed_rate(rate, tau).unwrap();
            let corrected = dead_time_correct(measured, tau).unwrap();
            check(
                1,
                (corrected - rate).abs() <= 1e-12 * rate.max(1.0),
                &format!("dead-time round-trip off: {rate} -> {corrected}"),
            );
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    check(1, elapsed < 1.0, &format!("round-trips took {elapsed:.2} s"));
    println!("criterion 1: PASS -- 1e4 round-trips exact to 1e-12 in {elapsed:.3} s");
}

#[test]
fn criterion_02_analytic_reference_point() {
    let _g = lock();
    let out = binary(&["analytic", "--json"]);
    check(2, out.status.success(), "analytic command failed");
    let json: serde_json::Value =
        serde_json::from_str(&String::from_utf8_lossy(&out.stdout)).expect("json output");
    let r_h = json["r_h_hz"].as_f64().unwrap();
    let p1 = json["p1"].as_f64().unwrap();
    let n_mean = json["n_mean"].as_f64().unwrap();
    check(
        2,
        ((r_h - 2.1e6) / 2.1e6).abs() <= 0.01,
        &format!("R_H {r_h} not within 1% of 2.1 MHz"),
    );
    check(2, (p1 - 0.42).abs() <= 0.01, &format!("P1 {p1} not 0.42 +- 0.01"));
    check(
        2,
        ((n_mean - 0.005) / 0.005).abs() <= 0.02,
        &format!("<n> {n_mean} not within 2% of 0.005"),
    );
    println!("criterion 2: PASS -- analytic R_H = {r_h:.4e} Hz, P1 = {p1:.4}, <n> = {n_mean:.5}");
}

#[test]
fn criterion_03_upgrade_projection() {
    let _g = lock();
    let base = FiguresOfMerit {
        r_h_hz: Measured::new(2.1e6, 0.0),
        s1_hz: Measured::new(110_250.0, 0.0),
        s2_hz: Measured::new(133.1, 0.0),
        p1: Figure::defined(0.42, 0.0),
        g2: Figure::defined(0.023, 0.0),
        n_mean: Figure::defined(0.005, 0.0),
        warnings: vec![],
    };
    let full = project_upgrade(
        &base,
        &UpgradeSpec {
            old_eta_d: 0.17,
            new_eta_d: 0.90,
            old_gamma: 0.60,
            new_gamma: 0.80,
        },
    )
    .unwrap();
    let r = full.r_h_hz.value;
    check(
        3,
        (14.1e6..=15.6e6).contains(&r),
        &format!("projected R_H {r} outside [14.1, 15.6] MHz"),
    );
    let eta_only = project_upgrade(
        &base,
        &UpgradeSpec {
            old_eta_d: 0.17,
            new_eta_d: 0.90,
            old_gamma: 0.60,
            new_gamma: 0.60,
        },
    )
    .unwrap();
    let factor = eta_only.r_h_hz.value / base.r_h_hz.value;
    let expected = 0.90 / 0.17;
    check(
        3,
        ((factor - expected) / expected).abs() <= 0.02,
        &format!("eta-only factor {factor} not within 2% of {expected}"),
    );
    println!(
        "criterion 3: PASS -- projected R_H = {:.3e} Hz, eta-only factor {factor:.3} (~5x)",
        r
    );
}

#[test]
fn criterion_04_single_mode_theory_equivalence() {
    let _g = lock();
    let mut summary = Vec::new();
    for mu in [0.001, 0.005, 0.02] {
        let started = Instant::now();
        let mut scenario = SimScenario::single_mode(mu, PairStatistics::Thermal);
        scenario.duration_s = 0.01;
        scenario.seed = 42;
        let totals = run_parallel(&scenario, 2).unwrap();
        let est = estimate_scenario(&totals, &scenario).unwrap();
        let g2 = est.g2.value().unwrap();
        let sigma = est.g2.sigma().unwrap();
        let theory = single_mode_g2_theory(mu, PairStatistics::Thermal).unwrap();
        check(
            4,
            (g2 - theory).abs() <= 3.0 * sigma,
            &format!("mu {mu}: g2 {g2} vs theory {theory} beyond 3 sigma ({sigma})"),
        );
        if mu == 0.02 {
            check(
                4,
                ((g2 - theory) / theory).abs() <= 0.10,
                &format!("mu 0.02: g2 {g2} vs theory {theory} beyond 10%"),
            );
        }
        let elapsed = started.elapsed().as_secs_f64();
        check(4, elapsed < 60.0, &format!("mu {mu} took {elapsed:.1} s"));
        summary.push(format!(
            "mu {mu}: g2 {g2:.4} vs {theory:.4} ({:+.1} sigma, {elapsed:.1} s)",
            (g2 - theory) / sigma
        ));
    }
    println!("criterion 4: PASS -- {}", summary.join("; "));
}

#[test]
fn criterion_05_estimator_closure_and_flat_p1() {
    let _g = lock();
    let mut g2_track: Vec<(f64, f64)> = Vec::new();
    let mut r_h_track: Vec<f64> = Vec::new();
    let mut summary = Vec::new();
    for (i, power_mw) in [10.0, 20.0, 40.0].into_iter().enumerate() {
        let mut scenario = SimScenario::reference();
        scenario.set_laser_power(power_mw);
        scenario.duration_s = 0.5;
        scenario.seed = 60 + i as u64;
        let mu = scenario.modes.mu_per_mode;
        let totals = run_parallel(&scenario, 2).unwrap();
        let est = estimate_scenario(&totals, &scenario).unwrap();

        let n_hat = est.n_mean.value().unwrap();
        let n_sigma = est.n_mean.sigma().unwrap();
        check(
            5,
            (n_hat - mu).abs() <= 3.0 * n_sigma,
            &format!("{power_mw} mW: n_hat {n_hat} vs mu {mu} beyond 3 sigma ({n_sigma})"),
        );

        let p1 = est.p1.value().unwrap();
        let p1_sigma = est.p1.sigma().unwrap();
        check(
            5,
            (p1 - 0.42).abs() <= 3.0 * p1_sigma,
            &format!("{power_mw} mW: P1 {p1} vs 0.42 beyond 3 sigma ({p1_sigma})"),
        );
        g2_track.push((est.g2.value().unwrap(), est.g2.sigma().unwrap()));
        r_h_track.push(est.r_h_hz.value);
        summary.push(format!(
            "{power_mw} mW: n_hat {n_hat:.5}/{mu:.5}, P1 {p1:.4}"
        ));
    }
    // The heralding rate grows strictly along the grid.
    for pair in r_h_track.windows(2) {
        check(
            5,
            pair[1] > pair[0],
            &format!("R_H not strictly increasing: {} -> {}", pair[0], pair[1]),
        );
    }
    // Multi-photon contamination grows along the grid.
    for pair in g2_track.windows(2) {
        let (lo, lo_s) = pair[0];
        let (hi, hi_s) = pair[1];
        check(
            5,
            hi - lo >= -3.0 * lo_s.hypot(hi_s),
            &format!("g2 not non-decreasing at 3 sigma: {lo} -> {hi}"),
        );
    }
    println!("criterion 5: PASS -- {}", summary.join("; "));
}

#[test]
fn criterion_06_multimode_g2_band() {
    let _g = lock();
    let mut scenario = SimScenario::reference();
    scenario.duration_s = 12.0;
    scenario.seed = 9;
    let totals = run_parallel(&scenario, 2).unwrap();
    let est = estimate_scenario(&totals, &scenario).unwrap();
    let r_h = est.r_h_hz.value;
    check(
        6,
        ((r_h - 2.1e6) / 2.1e6).abs() < 0.02,
        &format!("operating point drifted: R_H {r_h}"),
    );
    let g2 = est.g2.value().unwrap();
    let sigma = est.g2.sigma().unwrap();
    check(
        6,
        (0.015..=0.030).contains(&g2),
        &format!("g2 {g2} outside [0.015, 0.030]"),
    );
    let theory =
        single_mode_g2_theory(est.n_mean.value().unwrap(), PairStatistics::Thermal).unwrap();
    let excess_sigmas = (g2 - theory) / sigma;
    check(
        6,
        excess_sigmas >= 3.0,
        &format!("g2 {g2} does not exceed theory {theory} at 3 sigma (got {excess_sigmas:.1})"),
    );
    println!(
        "criterion 6: PASS -- g2 = {g2:.4} +- {sigma:.4} in band, theory {theory:.4}, excess {excess_sigmas:.1} sigma at R_H {r_h:.3e} Hz"
    );
}

#[test]
fn criterion_07_dead_time_physics() {
    let _g = lock();
    let detector = hsps_core::model::DetectorModel::free_running(1.0, 0.0, 0.0, 10e-6);
    let true_rate = 50_000.0;
    let span_s = 100.0;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    let mut arrivals = Vec::with_capacity(5_100_000);
    let mut t = 0.0_f64;
    loop {
        let u: f64 = 1.0 - rng.random::<f64>();
        t += -u.ln() / true_rate * 1e12;
        if t >= span_s * 1e12 {
            break;
        }
        arrivals.push(t);
    }
    let clicks = detect(
        &arrivals,
        &detector,
        &mut rng,
        0.0,
        span_s * 1e12,
        DetectorId::Apd1,
        100.0,
    )
    .unwrap();
    let measured = clicks.len() as f64 / span_s;
    check(
        7,
        ((measured - 33_333.3) / 33_333.3).abs() <= 0.01,
        &format!("measured {measured} Hz not 33.33 kHz +- 1%"),
    );
    let corrected = dead_time_correct(measured, 10e-6).unwrap();
    check(
        7,
        ((corrected - true_rate) / true_rate).abs() <= 0.01,
        &format!("corrected {corrected} Hz not 50 kHz +- 1%"),
    );
    println!(
        "criterion 7: PASS -- measured {measured:.1} Hz, corrected {corrected:.1} Hz from 50 kHz truth"
    );
}

#[test]
fn criterion_08_mode_counting_and_limit() {
    let _g = lock();
    let (n_f, n_t) = mode_counts(200.0, 25.0, 400.0, 100.0).unwrap();
    check(8, n_f == 8, &format!("N_f {n_f} != 8"));
    check(8, n_t == 4, &format!("N_t {n_t} != 4"));
    let cap = multimode_heralding_limit(n_f, n_t, 0.1).unwrap();
    check(
        8,
        (cap - 0.003_125).abs() < 1e-12,
        &format!("limit {cap} != 0.003125"),
    );
    println!("criterion 8: PASS -- mode counts ({n_f}, {n_t}), heralding-band cap {cap}");
}

#[test]
fn criterion_09_performance_and_scaling() {
    let _g = lock();
    let mut scenario = SimScenario::reference();
    scenario.duration_s = 0.1;
    scenario.seed = 5;

    let mut t_serial = f64::INFINITY;
    let mut serial_totals = None;
    for _ in 0..3 {
        let started = Instant::now();
        let totals = run(&scenario).unwrap();
        t_serial = t_serial.min(started.elapsed().as_secs_f64());
        serial_totals = Some(totals);
    }
    let serial_totals = serial_totals.unwrap();
    check(
        9,
        t_serial < 300.0,
        &format!("single-threaded 100 ms took {t_serial:.1} s (>= 5 min)"),
    );

    let mut t_parallel = f64::INFINITY;
    let mut parallel_totals = None;
    for _ in 0..3 {
        let started = Instant::now();
        let totals = run_parallel(&scenario, 4).unwrap();
        t_parallel = t_parallel.min(started.elapsed().as_secs_f64());
        parallel_totals = Some(totals);
    }
    check(
        9,
        parallel_totals.as_ref() == Some(&serial_totals),
        "4-worker totals differ from serial totals",
    );
    let speedup = t_serial / t_parallel;
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(0);
    check(
        9,
        speedup >= 3.0,
        &format!(
            "speedup {speedup:.2}x < 3x on 4 workers (host exposes {cores} cores; serial {t_serial:.2} s, parallel {t_parallel:.2} s)"
        ),
    );
    println!(
        "criterion 9: PASS -- 100 ms in {t_serial:.2} s serial, {speedup:.2}x on 4 workers, bit-identical totals"
    );
}

#[test]
fn criterion_10_deterministic_outputs() {
    let _g = lock();
    let run_simulate = |dir: &std::path::Path| {
        let out = binary(&[
            "simulate",
            "--duration",
            "2ms",
            "--seed",
            "77",
            "--out",
            dir.to_str().unwrap(),
        ]);
        check(10, out.status.success(), "simulate failed");
        std::fs::read(dir.join("results.csv")).unwrap()
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    check(
        10,
        run_simulate(a.path()) == run_simulate(b.path()),
        "simulate CSVs differ between identical seeds",
    );

    let run_sweep = |dir: &std::path::Path| {
        let out = binary(&[
            "sweep",
            "--grid",
            "20,40",
            "--duration",
            "1ms",
            "--seed",
            "33",
            "--out",
            dir.to_str().unwrap(),
        ]);
        check(10, out.status.success(), "sweep failed");
        std::fs::read(dir.join("sweep.csv")).unwrap()
    };
    let c = tempfile::tempdir().unwrap();
    let d = tempfile::tempdir().unwrap();
    check(
        10,
        run_sweep(c.path()) == run_sweep(d.path()),
        "sweep CSVs differ between identical seeds"
    );
    println!("criterion 10: PASS -- identical seeds give byte-identical CSV outputs");
}
