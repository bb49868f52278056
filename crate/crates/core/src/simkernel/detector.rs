//! Single-photon detector response: efficiency thinning, Gaussian timing
//! jitter, non-paralyzable dead time, dark counts and TAC window checks.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::model::{DetectorMode, DetectorModel};
use crate::simkernel::{ClickOrigin, ClickRecord, DetectorId, SimError};

/// Jitter draws are clamped to +/- this many sigma so that the set of pulse
/// slots a gate can reach is strictly bounded (the clipped tail mass is
/// ~2e-9 per draw).
pub const JITTER_CLAMP_SIGMA: f64 = 6.0;

/// Draw one clamped Gaussian jitter offset (ps).
pub fn sample_jitter<R: Rng + ?Sized>(rng: &mut R, sigma_ps: f64) -> f64 {
    if sigma_ps == 0.0 {
        return 0.0;
    }
    let z: f64 = rng.sample(StandardNormal);
    z.clamp(-JITTER_CLAMP_SIGMA, JITTER_CLAMP_SIGMA) * sigma_ps
}

/// Non-paralyzable dead-time latch of one detector.
#[derive(Debug, Clone)]
pub struct DetectorState {
    dead_until_ps: f64,
}

impl DetectorState {
    pub fn new() -> Self {
        DetectorState {
            dead_until_ps: f64::NEG_INFINITY,
        }
    }

    pub fn is_live(&self, t_ps: f64) -> bool {
        t_ps >= self.dead_until_ps
    }

    /// Register a click candidate at `t_ps`. Returns true when the detector
    /// was live; a registered click latches the detector dead for
    /// `dead_time_ps`. Candidates arriving dead are discarded and extend
    /// nothing.
    pub fn try_click(&mut self, t_ps: f64, dead_time_ps: f64) -> bool {
        if t_ps < self.dead_until_ps {
            return false;
        }
        self.dead_until_ps = t_ps + dead_time_ps;
        true
    }

    pub fn dead_until_ps(&self) -> f64 {
        self.dead_until_ps
    }
}

impl Default for DetectorState {
    fn default() -> Self {
        Self::new()
    }
}

/// Detect a time-ordered slice of photon arrivals with a free-running
/// detector over the span `[span_start_ps, span_end_ps)`.
///
/// Each arrival fires with probability `efficiency`; a firing arrival's click
/// time is the arrival plus Gaussian jitter. Poisson dark clicks at
/// `dark_rate_hz` are merged in. Clicks are then passed through the
/// non-paralyzable dead time in click-time order.
pub fn detect<R: Rng + ?Sized>(
    arrivals_ps: &[f64],
    detector: &DetectorModel,
    rng: &mut R,
    span_start_ps: f64,
    span_end_ps: f64,
    detector_id: DetectorId,
    pulse_period_ps: f64,
) -> Result<Vec<ClickRecord>, SimError> {
    detector.validate()?;
    if detector.mode != DetectorMode::FreeRunning {
        return Err(SimError::InvalidScenario(
            "detect() models a free-running detector; use detect_in_gate() for triggered ones"
                .into(),
        ));
    }
    if arrivals_ps.windows(2).any(|w| w[1] < w[0]) {
        return Err(SimError::InvariantViolation(
            "detect() requires time-ordered arrivals".into(),
        ));
    }

    let sigma = detector.jitter_sigma_ps();
    let mut candidates: Vec<(f64, ClickOrigin)> = Vec::new();
    for &arrival in arrivals_ps {
        if rng.random::<f64>() < detector.efficiency {
            candidates.push((arrival + sample_jitter(rng, sigma), ClickOrigin::PhotonCorrelated));
        }
    }
    if detector.dark_rate_hz > 0.0 {
        let rate_per_ps = detector.dark_rate_hz * 1e-12;
        let mut t = span_start_ps;
        loop {
            let u = 1.0 - rng.random::<f64>();
            t += -u.ln() / rate_per_ps;
            if t >= span_end_ps {
                break;
            }
            candidates.push((t, ClickOrigin::Dark));
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0));

    let dead_ps = detector.dead_time_s * 1e12;
    let mut state = DetectorState::new();
    let mut clicks = Vec::new();
    for (t, origin) in candidates {
        if state.try_click(t, dead_ps) {
            let pulse_index = if t <= 0.0 {
                0
            } else {
                (t / pulse_period_ps).floor() as u64
            };
            clicks.push(ClickRecord {
                detector_id,
                pulse_index,
                offset_ps: t - pulse_index as f64 * pulse_period_ps,
                origin,
            });
        }
    }
    Ok(clicks)
}

/// Detect photon arrivals with a triggered detector during one gate.
///
/// The arming window spans `[trigger + gate_delay, trigger + gate_delay +
/// gate_window]`; arrivals inside it fire with probability `efficiency`
/// (click time jittered), one Bernoulli dark click per gate is merged in,
/// and the earliest candidate the dead-time latch accepts becomes the click.
pub fn detect_in_gate<R: Rng + ?Sized>(
    arrivals_ps: &[f64],
    detector: &DetectorModel,
    rng: &mut R,
    trigger_ps: f64,
    state: &mut DetectorState,
    detector_id: DetectorId,
    pulse_period_ps: f64,
) -> Result<Option<ClickRecord>, SimError> {
    detector.validate()?;
    if detector.mode != DetectorMode::Triggered {
        return Err(SimError::InvalidScenario(
            "detect_in_gate() models a triggered detector; use detect() for free-running ones"
                .into(),
        ));
    }
    let arm_lo = trigger_ps + detector.gate_delay_ps;
    let arm_hi = arm_lo + detector.gate_window_ps;
    let sigma = detector.jitter_sigma_ps();
    let mut candidates: Vec<(f64, ClickOrigin)> = Vec::new();
    for &arrival in arrivals_ps {
        if arrival >= arm_lo && arrival <= arm_hi && rng.random::<f64>() < detector.efficiency {
            candidates.push((arrival + sample_jitter(rng, sigma), ClickOrigin::PhotonCorrelated));
        }
    }
    if detector.dark_prob_per_gate > 0.0 && rng.random::<f64>() < detector.dark_prob_per_gate {
        let t = arm_lo + rng.random::<f64>() * detector.gate_window_ps;
        candidates.push((t, ClickOrigin::Dark));
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0));
    let dead_ps = detector.dead_time_s * 1e12;
    for (t, origin) in candidates {
        if state.try_click(t, dead_ps) {
            let pulse_index = if t <= 0.0 {
                0
            } else {
                (t / pulse_period_ps).floor() as u64
            };
            return Ok(Some(ClickRecord {
                detector_id,
                pulse_index,
                offset_ps: t - pulse_index as f64 * pulse_period_ps,
                origin,
            }));
        }
    }
    Ok(None)
}

/// Accept a click iff it falls inside the post-selection window opened by the
/// trigger: 0 <= click - trigger <= window.
pub fn tac_gate(click_time_ps: f64, trigger_time_ps: f64, window_ps: f64) -> bool {
    let delta = click_time_ps - trigger_time_ps;
    delta >= 0.0 && delta <= window_ps
}

/// Bernoulli-thin `photons` through a chain of loss stages; the survival
/// probability is the product of the stage transmissions.
pub fn transport<R: Rng + ?Sized>(
    photons: u32,
    stage_transmissions: &[f64],
    rng: &mut R,
) -> Result<u32, SimError> {
    for &t in stage_transmissions {
        if !(0.0..=1.0).contains(&t) {
            return Err(SimError::InvalidScenario(format!(
                "stage transmission must lie in [0, 1], got {t}"
            )));
        }
    }
    let mut surviving = photons;
    for &t in stage_transmissions {
        if t == 1.0 {
            continue;
        }
        let mut kept = 0;
        for _ in 0..surviving {
            if rng.random::<f64>() < t {
                kept += 1;
            }
        }
        surviving = kept;
    }
    Ok(surviving)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn perfect_detector_reproduces_arrivals() {
        let det = DetectorModel::free_running(1.0, 0.0, 0.0, 0.0);
        let arrivals: Vec<f64> = (0..100).map(|i| i as f64 * 250.0).collect();
        let clicks = detect(&arrivals, &det, &mut rng(1), 0.0, 25_000.0, DetectorId::Sspd, 100.0)
            .unwrap();
        assert_eq!(clicks.len(), arrivals.len());
        for (click, arrival) in clicks.iter().zip(&arrivals) {
            let t = click.pulse_index as f64 * 100.0 + click.offset_ps;
            assert!((t - arrival).abs() < 1e-9);
        }
    }

    #[test]
    fn unordered_arrivals_are_rejected() {
        let det = DetectorModel::free_running(1.0, 0.0, 0.0, 0.0);
        let err = detect(&[200.0, 100.0], &det, &mut rng(1), 0.0, 1e3, DetectorId::Sspd, 100.0);
        assert!(matches!(err, Err(SimError::InvariantViolation(_))));
    }

    #[test]
    fn dead_time_throttles_poisson_arrivals() {
        // 50 kHz true rate into a 10 us non-paralyzable detector reads
        // 33.33 kHz, and the closed-form correction recovers the truth.
        let det = DetectorModel::free_running(1.0, 0.0, 0.0, 10e-6);
        let true_rate = 50_000.0;
        let span_s = 60.0;
        let mut r = rng(2);
        let mut arrivals = Vec::new();
        let mut t = 0.0;
        loop {
            let u = 1.0 - r.random::<f64>();
            t += -u.ln() / true_rate * 1e12;
            if t >= span_s * 1e12 {
                break;
            }
            arrivals.push(t);
        }
        let clicks = detect(&arrivals, &det, &mut r, 0.0, span_s * 1e12, DetectorId::Apd1, 100.0)
            .unwrap();
        let measured = clicks.len() as f64 / span_s;
        let expected = crate::model::observed_rate(true_rate, 10e-6).unwrap();
        assert!(
            ((measured - expected) / expected).abs() < 0.01,
            "measured {measured} vs {expected}"
        );
        let corrected = crate::model::dead_time_correct(measured, 10e-6).unwrap();
        assert!(((corrected - true_rate) / true_rate).abs() < 0.01);
    }

    #[test]
    fn jitter_spread_matches_fwhm() {
        // FWHM 120 ps => sigma 50.96 ps, sampled std within 2%.
        let det = DetectorModel::free_running(1.0, 0.0, 120.0, 0.0);
        let n = 1_000_000;
        let arrivals: Vec<f64> = (0..n).map(|i| i as f64 * 10_000.0).collect();
        let clicks = detect(
            &arrivals,
            &det,
            &mut rng(3),
            0.0,
            n as f64 * 10_000.0,
            DetectorId::Apd1,
            100.0,
        )
        .unwrap();
        assert_eq!(clicks.len(), n);
        let devs: Vec<f64> = clicks
            .iter()
            .zip(&arrivals)
            .map(|(c, a)| c.pulse_index as f64 * 100.0 + c.offset_ps - a)
            .collect();
        let mean = devs.iter().sum::<f64>() / n as f64;
        let var = devs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n as f64 - 1.0);
        let std = var.sqrt();
        let sigma = 120.0 / crate::model::FWHM_PER_SIGMA;
        assert!(
            ((std - sigma) / sigma).abs() < 0.02,
            "std {std} vs sigma {sigma}"
        );
    }

    #[test]
    fn dark_rate_produces_poisson_background() {
        let det = DetectorModel::free_running(1.0, 100.0, 0.0, 0.0);
        let span_s = 200.0;
        let clicks = detect(&[], &det, &mut rng(4), 0.0, span_s * 1e12, DetectorId::Sspd, 100.0)
            .unwrap();
        let expect = 100.0 * span_s;
        let sigma = expect.sqrt();
        assert!(
            ((clicks.len() as f64) - expect).abs() <= 4.0 * sigma,
            "darks {} vs {expect}",
            clicks.len()
        );
        assert!(clicks.iter().all(|c| matches!(c.origin, ClickOrigin::Dark)));
    }

    #[test]
    fn tac_gate_reference_points() {
        assert!(tac_gate(150.0, 0.0, 300.0));
        assert!(!tac_gate(450.0, 0.0, 400.0));
        assert!(!tac_gate(-5.0, 0.0, 300.0));
        assert!(tac_gate(0.0, 0.0, 0.0));
        // A 300 ps window over a 100 ps pulse train covers 3 consecutive
        // slots; a 400 ps window covers 4.
        let slots_in = |window: f64| {
            (-5i64..=5)
                .filter(|k| tac_gate(*k as f64 * 100.0, 0.0, window))
                .count()
        };
        assert_eq!(slots_in(300.0 - 1e-9), 3);
        assert_eq!(slots_in(400.0 - 1e-9), 4);
    }

    #[test]
    fn transport_thins_by_stage_product() {
        let mut r = rng(5);
        assert_eq!(transport(100, &[1.0, 1.0], &mut r).unwrap(), 100);
        assert_eq!(transport(100, &[0.0], &mut r).unwrap(), 0);
        let n = 10_000_000u32;
        let mut survived = 0u64;
        for _ in 0..n / 100 {
            survived += transport(100, &[0.60, 0.562], &mut r).unwrap() as u64;
        }
        let p = 0.60 * 0.562;
        let freq = survived as f64 / n as f64;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!(
            (freq - p).abs() <= 3.0 * sigma,
            "survival {freq} vs {p} (sigma {sigma})"
        );
        assert!(transport(10, &[1.2], &mut r).is_err());
    }

    #[test]
    fn gated_detection_honors_arming_window() {
        let det = DetectorModel::triggered(1.0, 0.0, 0.0, 0.0, 50.0, 100.0);
        let mut state = DetectorState::new();
        let mut r = rng(6);
        // Arrival inside [trigger+50, trigger+150] clicks; outside does not.
        let click = detect_in_gate(&[1080.0], &det, &mut r, 1000.0, &mut state, DetectorId::Apd1, 100.0)
            .unwrap();
        assert!(click.is_some());
        let miss = detect_in_gate(&[1180.0], &det, &mut r, 1000.0, &mut state, DetectorId::Apd1, 100.0)
            .unwrap();
        assert!(miss.is_none());
        // Free-running models are rejected here and vice versa.
        let free = DetectorModel::free_running(1.0, 0.0, 0.0, 0.0);
        assert!(
            detect_in_gate(&[0.0], &free, &mut r, 0.0, &mut state, DetectorId::Apd1, 100.0)
                .is_err()
        );
        assert!(detect(&[0.0], &det, &mut r, 0.0, 1e3, DetectorId::Apd1, 100.0).is_err());
    }

    #[test]
    fn gated_darks_fire_per_gate() {
        let det = DetectorModel::triggered(1.0, 0.02, 0.0, 0.0, 0.0, 200.0);
        let mut state = DetectorState::new();
        let mut r = rng(7);
        let gates = 100_000;
        let mut darks = 0u64;
        for i in 0..gates {
            let trigger = i as f64 * 1e6;
            if let Some(click) =
                detect_in_gate(&[], &det, &mut r, trigger, &mut state, DetectorId::Apd2, 100.0)
                    .unwrap()
            {
                assert!(matches!(click.origin, ClickOrigin::Dark));
                darks += 1;
            }
        }
        let expect = 0.02 * gates as f64;
        let sigma = (expect * 0.98).sqrt();
        assert!(
            (darks as f64 - expect).abs() <= 4.0 * sigma,
            "darks {darks} vs {expect}"
        );
    }

    #[test]
    fn detector_state_is_non_paralyzable() {
        let mut s = DetectorState::new();
        assert!(s.try_click(0.0, 1000.0));
        assert!(!s.try_click(500.0, 1000.0)); // discarded, extends nothing
        assert!(!s.try_click(999.0, 1000.0));
        assert!(s.try_click(1000.0, 1000.0));
        assert!((s.dead_until_ps() - 2000.0).abs() < 1e-12);
    }
}
