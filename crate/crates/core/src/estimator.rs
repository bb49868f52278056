//! Converts raw counting totals into figures of merit: dead-time-corrected
//! rates, heralding efficiency, heralded g²(0) and the inferred mean pair
//! number, each with a first-order Poisson uncertainty.

use serde::{Deserialize, Serialize};

use crate::model::{
    self, Figure, FiguresOfMerit, Measured, ModeStructure, ModelError, PairStatistics,
};
use crate::simkernel::{CountingTotals, SimScenario};

/// Conditional-rate hierarchy guard: above this S2/S1 ratio the closed-form
/// g² relation leaves its validity regime and the estimate carries a warning.
pub const S2_OVER_S1_WARN: f64 = 0.05;

/// Constants the rate equations need: detector efficiencies, dead times and
/// the heralding-chain factors for the mean-pair-number inversion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationConfig {
    pub eta_d: f64,
    pub eta_1: f64,
    pub eta_2: f64,
    pub sspd_dead_time_s: f64,
    pub apd1_dead_time_s: f64,
    pub apd2_dead_time_s: f64,
    pub rep_rate_hz: f64,
    pub gamma: f64,
    /// Heralding-path transmission entering the rate inversion.
    pub t_h: f64,
}

impl EstimationConfig {
    /// Constants consistent with a scenario, closing the loop between what
    /// the engine samples and what the estimator inverts.
    pub fn from_scenario(scenario: &SimScenario) -> Result<Self, ModelError> {
        Ok(EstimationConfig {
            eta_d: scenario.sspd.efficiency,
            eta_1: scenario.apd1.efficiency,
            eta_2: scenario.apd2.efficiency,
            sspd_dead_time_s: scenario.sspd.dead_time_s,
            apd1_dead_time_s: scenario.apd1.dead_time_s,
            apd2_dead_time_s: scenario.apd2.dead_time_s,
            rep_rate_hz: scenario.source.rep_rate_hz,
            gamma: scenario.source.gamma,
            t_h: scenario.source.signal_transmission()?,
        })
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, v) in [
            ("eta_d", self.eta_d),
            ("eta_1", self.eta_1),
            ("eta_2", self.eta_2),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(ModelError::InvalidConfig(format!(
                    "{name} must lie in (0, 1], got {v}"
                )));
            }
        }
        let rep_ok = self.rep_rate_hz.is_finite() && self.rep_rate_hz > 0.0;
        if !rep_ok {
            return Err(ModelError::InvalidConfig(
                "rep_rate_hz must be > 0".into(),
            ));
        }
        Ok(())
    }
}

/// A dead-time-corrected rate with the uncertainty of its underlying count.
#[derive(Debug, Clone, Copy)]
struct CorrectedRate {
    rate: f64,
    sigma: f64,
}

/// Correct `counts / duration` for a non-paralyzable dead time, propagating
/// the Poisson uncertainty through the correction. A floor of one count
/// keeps the uncertainty meaningful for zero-count channels.
fn corrected_rate(
    counts: u64,
    duration_s: f64,
    dead_time_s: f64,
) -> Result<CorrectedRate, ModelError> {
    let measured = counts as f64 / duration_s;
    let sigma_measured = (counts.max(1) as f64).sqrt() / duration_s;
    let rate = model::dead_time_correct(measured, dead_time_s)?;
    // d/dm [m / (1 - m tau)] = 1 / (1 - m tau)^2.
    let load = measured * dead_time_s;
    let sigma = sigma_measured / ((1.0 - load) * (1.0 - load));
    Ok(CorrectedRate { rate, sigma })
}

/// Estimate the figures of merit of one run.
///
/// Rates are corrected per detector before entering the closed forms.
/// Figures whose denominators have no counts come back tagged undefined
/// rather than as NaN.
pub fn estimate(
    totals: &CountingTotals,
    cfg: &EstimationConfig,
) -> Result<FiguresOfMerit, ModelError> {
    cfg.validate()?;
    let duration_ok = totals.duration_s.is_finite() && totals.duration_s > 0.0;
    if !duration_ok {
        return Err(ModelError::InvalidConfig(
            "totals cover no simulated time".into(),
        ));
    }
    let duration = totals.duration_s;
    let r_h = corrected_rate(totals.heralds, duration, cfg.sspd_dead_time_s)?;
    let s1 = corrected_rate(totals.s1_counts, duration, cfg.apd1_dead_time_s)?;
    // The second stage only gates after a first-stage click, so its observed
    // rate is thinned by the live fractions of BOTH triggered detectors.
    let s1_live = 1.0 - (totals.s1_counts as f64 / duration) * cfg.apd1_dead_time_s;
    if s1_live <= 0.0 {
        return Err(ModelError::DeadTimeSaturated {
            rate_hz: totals.s1_counts as f64 / duration,
            dead_time_s: cfg.apd1_dead_time_s,
        });
    }
    let s2 = {
        let own = corrected_rate(totals.s2_counts, duration, cfg.apd2_dead_time_s)?;
        CorrectedRate {
            rate: own.rate / s1_live,
            sigma: own.sigma / s1_live,
        }
    };

    let mut warnings = Vec::new();
    if totals.s1_counts > 0 && s2.rate / s1.rate > S2_OVER_S1_WARN {
        warnings.push(format!(
            "S2/S1 = {:.3} strains the S2 << S1 regime of the g2 relation",
            s2.rate / s1.rate
        ));
    }

    let p1 = if totals.heralds == 0 {
        Figure::undefined("no heralds: P1 denominator is zero")
    } else {
        let value = model::heralding_efficiency(s1.rate, r_h.rate, cfg.eta_1)?;
        let rel = rel_err(s1).hypot(rel_err(r_h));
        Figure::defined(value, value * rel)
    };

    let g2 = if totals.heralds == 0 || totals.s1_counts == 0 {
        Figure::undefined("no conditional counts: g2 denominator is zero")
    } else if totals.s2_counts == 0 {
        // No coincidence observed; bound the uncertainty by one count.
        let one = corrected_rate(1, duration, cfg.apd2_dead_time_s)?;
        let bound =
            model::autocorrelation(r_h.rate, s1.rate, one.rate / s1_live, cfg.eta_1, cfg.eta_2)?;
        Figure::defined(0.0, bound)
    } else {
        let value = model::autocorrelation(r_h.rate, s1.rate, s2.rate, cfg.eta_1, cfg.eta_2)?;
        let rel = (rel_err(r_h).powi(2) + rel_err(s2).powi(2) + 4.0 * rel_err(s1).powi(2)).sqrt();
        Figure::defined(value, value * rel)
    };

    let n_mean = if totals.heralds == 0 {
        Figure::undefined("no heralds: mean pair number not inferable")
    } else {
        let value = model::invert_heralding_rate(
            r_h.rate,
            cfg.rep_rate_hz,
            cfg.gamma,
            cfg.t_h,
            cfg.eta_d,
        )?;
        Figure::defined(value, value * rel_err(r_h))
    };

    Ok(FiguresOfMerit {
        r_h_hz: Measured::new(r_h.rate, r_h.sigma),
        s1_hz: Measured::new(s1.rate, s1.sigma),
        s2_hz: Measured::new(s2.rate, s2.sigma),
        p1,
        g2,
        n_mean,
        warnings,
    })
}

/// Single-mode theory value at the figures' inferred mean pair number, and
/// the measured-minus-theory residual.
pub fn theory_overlay(
    figures: &FiguresOfMerit,
    _modes: &ModeStructure,
    statistics: PairStatistics,
) -> Result<(f64, Figure), ModelError> {
    let mu = figures.n_mean.value().unwrap_or(0.0);
    let theory = model::single_mode_g2_theory(mu, statistics)?;
    let residual = match &figures.g2 {
        Figure::Defined { value, sigma } => Figure::defined(value - theory, *sigma),
        Figure::Undefined { reason } => Figure::undefined(reason.clone()),
    };
    Ok((theory, residual))
}

fn rel_err(r: CorrectedRate) -> f64 {
    if r.rate > 0.0 {
        r.sigma / r.rate
    } else {
        0.0
    }
}

/// Convenience wrapper: a full estimate of one scenario's totals using the
/// scenario's own constants.
pub type Estimate = FiguresOfMerit;

pub fn estimate_scenario(
    totals: &CountingTotals,
    scenario: &SimScenario,
) -> Result<FiguresOfMerit, ModelError> {
    estimate(totals, &EstimationConfig::from_scenario(scenario)?)
}
