//! Calibration probe: prints engine-versus-theory numbers for the
//! single-mode checks and the reference multimode operating point.
//!
//! Usage: cargo run --release -p hsps-core --example calibrate [noise_ratio] [duration_s]

use hsps_core::estimator::estimate_scenario;
use hsps_core::model::{single_mode_g2_theory, PairStatistics};
use hsps_core::simkernel::{run_parallel, SimScenario};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let noise_ratio: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(-1.0);
    let duration: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(2.0);

    println!("== single-mode engine vs theory (10 ms each) ==");
    for mu in [0.001, 0.005, 0.02] {
        let mut scenario = SimScenario::single_mode(mu, PairStatistics::Thermal);
        scenario.duration_s = 0.01;
        scenario.seed = 42;
        let t0 = std::time::Instant::now();
        let totals = run_parallel(&scenario, 2).unwrap();
        let est = estimate_scenario(&totals, &scenario).unwrap();
        let theory = single_mode_g2_theory(mu, PairStatistics::Thermal).unwrap();
        let g2 = est.g2.value().unwrap_or(f64::NAN);
        let sg = est.g2.sigma().unwrap_or(f64::NAN);
        println!(
            "mu {mu:<6}: heralds {:>7}  s1 {:>6}  s2 {:>5}  g2 {g2:.5} +- {sg:.5}  theory {theory:.5}  dev {:+.1}% ({:+.2} sigma)  n_hat {:.5}  [{:.2}s]",
            totals.heralds,
            totals.s1_counts,
            totals.s2_counts,
            (g2 / theory - 1.0) * 100.0,
            (g2 - theory) / sg,
            est.n_mean.value().unwrap_or(f64::NAN),
            t0.elapsed().as_secs_f64(),
        );
    }

    println!("== reference multimode scenario ({duration} s) ==");
    let ratios: Vec<f64> = if noise_ratio >= 0.0 {
        vec![noise_ratio]
    } else {
        vec![0.0, 0.01, 0.02, 0.05, 0.10, 0.20, 1.0]
    };
    for ratio in ratios {
        let mut scenario = SimScenario::reference();
        scenario.duration_s = duration;
        scenario.seed = 7;
        let mu = scenario.modes.mu_per_mode;
        scenario.modes.noise_mu_per_mode = mu * ratio;
        let t0 = std::time::Instant::now();
        let totals = run_parallel(&scenario, 2).unwrap();
        let est = estimate_scenario(&totals, &scenario).unwrap();
        let theory = single_mode_g2_theory(
            est.n_mean.value().unwrap_or(mu),
            PairStatistics::Thermal,
        )
        .unwrap();
        println!(
            "ratio {ratio:<5}: R_H {:.4e} (obs {:.4e})  P1 {:.4} +- {:.4}  g2 {:.4} +- {:.4}  theory {:.4}  n_hat {:.5}  s2 {}  [{:.1}s]",
            est.r_h_hz.value,
            totals.heralds as f64 / totals.duration_s,
            est.p1.value().unwrap_or(f64::NAN),
            est.p1.sigma().unwrap_or(f64::NAN),
            est.g2.value().unwrap_or(f64::NAN),
            est.g2.sigma().unwrap_or(f64::NAN),
            theory,
            est.n_mean.value().unwrap_or(f64::NAN),
            totals.s2_counts,
            t0.elapsed().as_secs_f64(),
        );
    }
}
