//! Domain types and closed-form relations for a pulsed heralded single-photon
//! source: pump chain, heralding-rate algebra, dead-time arithmetic, mode
//! counting and the single-mode heralded-g²(0) theory curve.
//!
//! Everything here is a pure function of its inputs; no sampling, no shared
//! state.

use serde::{Deserialize, Serialize};

/// FWHM of a Gaussian in units of its standard deviation, 2·√(2·ln 2).
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3;

/// Default truncation for the heralded-g² enumeration. Overkill for the
/// mean-pair numbers this models (μ ≲ 0.1) and still cheap.
pub const G2_ENUMERATION_CUTOFF: u32 = 40;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("{name} must be finite, got {value}")]
    NonFinite { name: &'static str, value: f64 },
    #[error("{name} must be >= 0, got {value}")]
    Negative { name: &'static str, value: f64 },
    #[error("{name} must be > 0, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("{name} must lie in [0, 1], got {value}")]
    NotAProbability { name: &'static str, value: f64 },
    #[error("zero denominator in {context}")]
    ZeroDenominator { context: &'static str },
    #[error("measured rate {rate_hz} Hz saturates a {dead_time_s} s dead time (rate x dead time >= 1)")]
    DeadTimeSaturated { rate_hz: f64, dead_time_s: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

fn require_finite(name: &'static str, value: f64) -> Result<f64, ModelError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(ModelError::NonFinite { name, value })
    }
}

fn require_non_negative(name: &'static str, value: f64) -> Result<f64, ModelError> {
    require_finite(name, value)?;
    if value >= 0.0 {
        Ok(value)
    } else {
        Err(ModelError::Negative { name, value })
    }
}

fn require_positive(name: &'static str, value: f64) -> Result<f64, ModelError> {
    require_finite(name, value)?;
    if value > 0.0 {
        Ok(value)
    } else {
        Err(ModelError::NonPositive { name, value })
    }
}

fn require_probability(name: &'static str, value: f64) -> Result<f64, ModelError> {
    require_finite(name, value)?;
    if (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(ModelError::NotAProbability { name, value })
    }
}

/// Photon-pair number law of a single spectral mode per pump pulse.
///
/// A single down-conversion mode is thermal (Bose-Einstein); sums over many
/// modes approach Poissonian. Both are supported so either limit can be
/// simulated and compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairStatistics {
    Thermal,
    Poissonian,
}

impl std::fmt::Display for PairStatistics {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PairStatistics::Thermal => write!(f, "thermal"),
            PairStatistics::Poissonian => write!(f, "poissonian"),
        }
    }
}

/// Full experimental parameter set for the source: pump laser, frequency
/// doubler, down-conversion stage, filters, coupling and path losses.
///
/// Losses are split into data-sheet insertion losses (`*_loss_db`, >= 0) and
/// excess calibration offsets (`*_excess_loss_db`). The reference component
/// values are internally inconsistent at the percent level: the quoted path
/// losses do not quite reproduce the quoted operating point (heralding rate
/// 2.1 MHz at 0.005 pairs/pulse with heralding efficiency 0.42). The excess
/// fields absorb that difference; on the idler path the offset comes out
/// negative (the path transmits better than its data-sheet loss implies).
/// Setting both excess fields to zero recovers the literal data-sheet reading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceConfig {
    /// Pump pulse repetition rate f (Hz).
    pub rep_rate_hz: f64,
    /// Telecom-band seed laser average power (mW).
    pub laser_power_mw: f64,
    /// Second-harmonic conversion efficiency, fraction in [0, 1].
    pub shg_efficiency: f64,
    /// Power-law exponent of the SHG stage. 1.0 models the conversion as a
    /// fixed linear factor; kept configurable for a future depletion model.
    pub shg_exponent: f64,
    /// Pair-source brightness (pairs / mW / s / GHz).
    pub brightness: f64,
    /// Heralding (signal) filter bandwidth (GHz).
    pub heralding_bw_ghz: f64,
    /// Heralded (idler) filter bandwidth (GHz).
    pub heralded_bw_ghz: f64,
    /// Waveguide-to-fiber coupling efficiency γ, in [0, 1].
    pub gamma: f64,
    /// Heralding-path insertion loss (dB, >= 0).
    pub signal_loss_db: f64,
    /// Heralded-path insertion loss (dB, >= 0).
    pub idler_loss_db: f64,
    /// Calibration loss on the heralding path (dB, >= 0).
    pub signal_excess_loss_db: f64,
    /// Calibration offset on the heralded path (dB, may be negative; the
    /// total idler loss must remain >= 0).
    pub idler_excess_loss_db: f64,
    /// Per-mode pair-number law.
    pub statistics: PairStatistics,
}

impl SourceConfig {
    /// Reference configuration: a 10 GHz telecom-band source calibrated so
    /// that the closed-form chain reproduces the "Nice" operating point of
    /// the bundled comparison catalog: R_H = 2.1 MHz, ⟨n⟩ = 0.005, P₁ = 0.42
    /// (with γ = 0.60 and η_D = 0.17).
    pub fn reference() -> Self {
        // Calibrated total transmissions behind the excess-loss offsets:
        //   signal: T_H = 2.1e6 / (1e10 * 0.005 * 0.60 * 0.17) = 7/17
        //   idler:  T   = P1 / gamma = 0.42 / 0.60 = 0.70, raised 0.45% so
        //   the counting-chain estimate (which pays TAC and arming window
        //   tails) centers on 0.42 while the closed form stays within 1%.
        let signal_total_db = -10.0 * (7.0f64 / 17.0).log10();
        let idler_total_db = -10.0 * (0.70f64 * 1.0045).log10();
        SourceConfig {
            rep_rate_hz: 1.0e10,
            laser_power_mw: 40.0,
            shg_efficiency: 0.20,
            shg_exponent: 1.0,
            brightness: 2.5e5,
            heralding_bw_ghz: 25.0,
            heralded_bw_ghz: 200.0,
            gamma: 0.60,
            signal_loss_db: 2.5,
            idler_loss_db: 1.9,
            signal_excess_loss_db: signal_total_db - 2.5,
            idler_excess_loss_db: idler_total_db - 1.9,
            statistics: PairStatistics::Thermal,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        require_positive("rep_rate_hz", self.rep_rate_hz)?;
        require_non_negative("laser_power_mw", self.laser_power_mw)?;
        require_probability("shg_efficiency", self.shg_efficiency)?;
        require_positive("shg_exponent", self.shg_exponent)?;
        require_non_negative("brightness", self.brightness)?;
        require_positive("heralding_bw_ghz", self.heralding_bw_ghz)?;
        require_positive("heralded_bw_ghz", self.heralded_bw_ghz)?;
        require_probability("gamma", self.gamma)?;
        require_non_negative("signal_loss_db", self.signal_loss_db)?;
        require_non_negative("idler_loss_db", self.idler_loss_db)?;
        require_non_negative("signal_excess_loss_db", self.signal_excess_loss_db)?;
        require_finite("idler_excess_loss_db", self.idler_excess_loss_db)?;
        require_non_negative("total signal loss", self.total_signal_loss_db())?;
        require_non_negative("total idler loss", self.total_idler_loss_db())?;
        Ok(())
    }

    pub fn total_signal_loss_db(&self) -> f64 {
        self.signal_loss_db + self.signal_excess_loss_db
    }

    pub fn total_idler_loss_db(&self) -> f64 {
        self.idler_loss_db + self.idler_excess_loss_db
    }

    /// Transmission of the heralding path, collection fiber to detector.
    pub fn signal_transmission(&self) -> Result<f64, ModelError> {
        db_to_transmission(self.total_signal_loss_db())
    }

    /// Transmission of the heralded path, collection fiber to the HBT input.
    pub fn idler_transmission(&self) -> Result<f64, ModelError> {
        db_to_transmission(self.total_idler_loss_db())
    }

    /// Average pump power delivered to the down-conversion stage (mW).
    pub fn spdc_pump_mw(&self) -> f64 {
        self.shg_efficiency * self.laser_power_mw.powf(self.shg_exponent)
    }

    /// Mean pairs generated per pump pulse within the heralding bandwidth.
    pub fn mean_pairs_per_pulse(&self) -> Result<f64, ModelError> {
        mean_pairs_from_pump(
            self.spdc_pump_mw(),
            self.brightness,
            self.heralding_bw_ghz,
            self.rep_rate_hz,
        )
    }

    /// Closed-form heralding efficiency, P₁ ≃ γ·T.
    pub fn analytic_heralding_efficiency(&self) -> Result<f64, ModelError> {
        Ok(self.gamma * self.idler_transmission()?)
    }

    /// Closed-form heralding rate for a heralding detector of efficiency
    /// `eta_d`.
    pub fn analytic_heralding_rate(&self, eta_d: f64) -> Result<f64, ModelError> {
        heralding_rate(
            self.rep_rate_hz,
            self.mean_pairs_per_pulse()?,
            self.gamma,
            self.signal_transmission()?,
            eta_d,
        )
    }
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self::reference()
    }
}

/// Operating mode of a single-photon detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorMode {
    /// Always armed; dark counts follow a free-running Poisson rate.
    FreeRunning,
    /// Armed by an external trigger; dark counts are per opened gate.
    Triggered,
}

/// Efficiency, noise, timing and recovery model of one detector.
///
/// Exactly one dark-count source is active per mode: `dark_rate_hz` for
/// free-running detectors, `dark_prob_per_gate` for triggered ones. The
/// arming window of a triggered detector spans
/// `[trigger + gate_delay_ps, trigger + gate_delay_ps + gate_window_ps]`;
/// photons arriving outside it cannot fire the detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorModel {
    /// Detection probability per incident photon, in [0, 1].
    pub efficiency: f64,
    /// Free-running dark count rate (Hz). Must be 0 when triggered.
    pub dark_rate_hz: f64,
    /// Dark-count probability per opened gate. Must be 0 when free-running.
    pub dark_prob_per_gate: f64,
    /// Gaussian timing jitter, full width at half maximum (ps).
    pub jitter_fwhm_ps: f64,
    /// Non-paralyzable dead time (s).
    pub dead_time_s: f64,
    pub mode: DetectorMode,
    /// Arming-window start relative to the trigger (ps, triggered mode).
    pub gate_delay_ps: f64,
    /// Arming-window length (ps, triggered mode).
    pub gate_window_ps: f64,
}

impl DetectorModel {
    pub fn free_running(
        efficiency: f64,
        dark_rate_hz: f64,
        jitter_fwhm_ps: f64,
        dead_time_s: f64,
    ) -> Self {
        DetectorModel {
            efficiency,
            dark_rate_hz,
            dark_prob_per_gate: 0.0,
            jitter_fwhm_ps,
            dead_time_s,
            mode: DetectorMode::FreeRunning,
            gate_delay_ps: 0.0,
            gate_window_ps: 0.0,
        }
    }

    pub fn triggered(
        efficiency: f64,
        dark_prob_per_gate: f64,
        jitter_fwhm_ps: f64,
        dead_time_s: f64,
        gate_delay_ps: f64,
        gate_window_ps: f64,
    ) -> Self {
        DetectorModel {
            efficiency,
            dark_rate_hz: 0.0,
            dark_prob_per_gate,
            jitter_fwhm_ps,
            dead_time_s,
            mode: DetectorMode::Triggered,
            gate_delay_ps,
            gate_window_ps,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        require_probability("efficiency", self.efficiency)?;
        require_non_negative("dark_rate_hz", self.dark_rate_hz)?;
        require_probability("dark_prob_per_gate", self.dark_prob_per_gate)?;
        require_non_negative("jitter_fwhm_ps", self.jitter_fwhm_ps)?;
        require_non_negative("dead_time_s", self.dead_time_s)?;
        require_non_negative("gate_delay_ps", self.gate_delay_ps)?;
        require_non_negative("gate_window_ps", self.gate_window_ps)?;
        match self.mode {
            DetectorMode::FreeRunning if self.dark_prob_per_gate != 0.0 => {
                Err(ModelError::InvalidConfig(
                    "free-running detector must use dark_rate_hz, not dark_prob_per_gate".into(),
                ))
            }
            DetectorMode::Triggered if self.dark_rate_hz != 0.0 => Err(ModelError::InvalidConfig(
                "triggered detector must use dark_prob_per_gate, not dark_rate_hz".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Jitter standard deviation (ps), σ = FWHM / (2·√(2·ln 2)).
    pub fn jitter_sigma_ps(&self) -> f64 {
        self.jitter_fwhm_ps / FWHM_PER_SIGMA
    }
}

/// Spectral/temporal mode bookkeeping for the heralded arm.
///
/// The heralded band carries exactly one heralding-correlated mode per pulse
/// (mean `mu_per_mode`, which is therefore also the heralding-band mean ⟨n⟩)
/// plus `n_spectral - 1` uncorrelated modes of mean `noise_mu_per_mode` each.
/// `n_temporal` counts the pulse slots inside a coincidence window; the
/// simulator does not consume it directly (temporal noise emerges from
/// neighboring pulses), it is carried for reporting and for the multimode
/// heralding limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeStructure {
    /// Spectral mode count N_f in the heralded band (>= 1).
    pub n_spectral: u32,
    /// Temporal slot count N_t inside the coincidence window (>= 1).
    pub n_temporal: u32,
    /// Mean pairs per pump pulse in the heralding-correlated mode (= ⟨n⟩).
    pub mu_per_mode: f64,
    /// Mean pairs per pump pulse in each uncorrelated spectral mode.
    pub noise_mu_per_mode: f64,
}

impl ModeStructure {
    /// Single-mode structure: no uncorrelated spectral modes at all.
    pub fn single_mode(mu: f64) -> Self {
        ModeStructure {
            n_spectral: 1,
            n_temporal: 1,
            mu_per_mode: mu,
            noise_mu_per_mode: 0.0,
        }
    }

    /// Multimode structure with every uncorrelated mode as bright as the
    /// correlated one (flat spectral brightness).
    pub fn equal_brightness(n_spectral: u32, n_temporal: u32, mu: f64) -> Self {
        ModeStructure {
            n_spectral,
            n_temporal,
            mu_per_mode: mu,
            noise_mu_per_mode: mu,
        }
    }

    /// Multimode structure with uncorrelated-mode brightness scaled by
    /// `noise_ratio` relative to the correlated mode.
    pub fn with_noise_ratio(n_spectral: u32, n_temporal: u32, mu: f64, noise_ratio: f64) -> Self {
        ModeStructure {
            n_spectral,
            n_temporal,
            mu_per_mode: mu,
            noise_mu_per_mode: mu * noise_ratio,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.n_spectral < 1 {
            return Err(ModelError::InvalidConfig("n_spectral must be >= 1".into()));
        }
        if self.n_temporal < 1 {
            return Err(ModelError::InvalidConfig("n_temporal must be >= 1".into()));
        }
        require_non_negative("mu_per_mode", self.mu_per_mode)?;
        require_non_negative("noise_mu_per_mode", self.noise_mu_per_mode)?;
        Ok(())
    }
}

/// A value with a one-standard-deviation statistical uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measured {
    pub value: f64,
    pub sigma: f64,
}

impl Measured {
    pub fn new(value: f64, sigma: f64) -> Self {
        Measured { value, sigma }
    }

    /// True when `other` lies within `k` combined standard deviations.
    pub fn consistent_with(&self, other: f64, k: f64) -> bool {
        (self.value - other).abs() <= k * self.sigma
    }
}

/// A derived figure that may be undefined (e.g. a ratio with zero counts in
/// its denominator). Undefined figures carry the reason instead of leaking
/// NaN into downstream arithmetic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Figure {
    Defined { value: f64, sigma: f64 },
    Undefined { reason: String },
}

impl Figure {
    pub fn defined(value: f64, sigma: f64) -> Self {
        Figure::Defined { value, sigma }
    }

    pub fn undefined(reason: impl Into<String>) -> Self {
        Figure::Undefined {
            reason: reason.into(),
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Figure::Defined { value, .. } => Some(*value),
            Figure::Undefined { .. } => None,
        }
    }

    pub fn sigma(&self) -> Option<f64> {
        match self {
            Figure::Defined { sigma, .. } => Some(*sigma),
            Figure::Undefined { .. } => None,
        }
    }

    pub fn measured(&self) -> Option<Measured> {
        match self {
            Figure::Defined { value, sigma } => Some(Measured::new(*value, *sigma)),
            Figure::Undefined { .. } => None,
        }
    }
}

/// Derived figures of merit of one run or one analytic evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiguresOfMerit {
    /// Heralding detection rate (Hz), dead-time corrected.
    pub r_h_hz: Measured,
    /// Conditional detection rate of the first HBT detector (Hz), corrected.
    pub s1_hz: Measured,
    /// Coincidence rate of the second HBT detector (Hz), corrected.
    pub s2_hz: Measured,
    /// Heralding efficiency.
    pub p1: Figure,
    /// Heralded autocorrelation at zero delay.
    pub g2: Figure,
    /// Inferred mean pairs per pulse in the heralding band.
    pub n_mean: Figure,
    /// Validity notes (e.g. the conditional-rate hierarchy being strained).
    pub warnings: Vec<String>,
}

// ---------------------------------------------------------------------------
// Closed-form operations
// ---------------------------------------------------------------------------

/// Convert a power insertion loss in dB to a linear transmission in (0, 1].
pub fn db_to_transmission(loss_db: f64) -> Result<f64, ModelError> {
    require_non_negative("loss_db", loss_db)?;
    Ok(10.0_f64.powf(-loss_db / 10.0))
}

/// Convert a linear transmission in (0, 1] to a power loss in dB.
pub fn transmission_to_db(transmission: f64) -> Result<f64, ModelError> {
    require_finite("transmission", transmission)?;
    if transmission <= 0.0 || transmission > 1.0 {
        return Err(ModelError::InvalidConfig(format!(
            "transmission must lie in (0, 1], got {transmission}"
        )));
    }
    Ok(-10.0 * transmission.log10())
}

/// Mean photon pairs per pump pulse produced in `bandwidth_ghz` by a source
/// of the given brightness pumped with `spdc_pump_mw`.
pub fn mean_pairs_from_pump(
    spdc_pump_mw: f64,
    brightness: f64,
    bandwidth_ghz: f64,
    rep_rate_hz: f64,
) -> Result<f64, ModelError> {
    require_non_negative("spdc_pump_mw", spdc_pump_mw)?;
    require_non_negative("brightness", brightness)?;
    require_non_negative("bandwidth_ghz", bandwidth_ghz)?;
    require_positive("rep_rate_hz", rep_rate_hz)?;
    Ok(brightness * spdc_pump_mw * bandwidth_ghz / rep_rate_hz)
}

/// Pump power delivered to the down-conversion stage by a fixed-efficiency
/// frequency doubler.
pub fn shg_pump(laser_power_mw: f64, shg_efficiency: f64) -> Result<f64, ModelError> {
    require_non_negative("laser_power_mw", laser_power_mw)?;
    require_probability("shg_efficiency", shg_efficiency)?;
    Ok(laser_power_mw * shg_efficiency)
}

/// Heralding detection rate R_H = f · ⟨n⟩ · γ · T_H · η_D.
pub fn heralding_rate(
    rep_rate_hz: f64,
    n_mean: f64,
    gamma: f64,
    t_h: f64,
    eta_d: f64,
) -> Result<f64, ModelError> {
    require_positive("rep_rate_hz", rep_rate_hz)?;
    require_non_negative("n_mean", n_mean)?;
    require_probability("gamma", gamma)?;
    require_probability("t_h", t_h)?;
    require_probability("eta_d", eta_d)?;
    Ok(rep_rate_hz * n_mean * gamma * t_h * eta_d)
}

/// Exact algebraic inverse of [`heralding_rate`]: the mean pair number that
/// produces the given heralding rate.
pub fn invert_heralding_rate(
    r_h_hz: f64,
    rep_rate_hz: f64,
    gamma: f64,
    t_h: f64,
    eta_d: f64,
) -> Result<f64, ModelError> {
    require_non_negative("r_h_hz", r_h_hz)?;
    require_positive("rep_rate_hz", rep_rate_hz)?;
    require_probability("gamma", gamma)?;
    require_probability("t_h", t_h)?;
    require_probability("eta_d", eta_d)?;
    let denom = rep_rate_hz * gamma * t_h * eta_d;
    if denom == 0.0 {
        return Err(ModelError::ZeroDenominator {
            context: "invert_heralding_rate",
        });
    }
    Ok(r_h_hz / denom)
}

/// Heralding efficiency from dead-time-corrected rates, P₁ ≃ 2·S₁/(R_H·η₁).
pub fn heralding_efficiency(s1_hz: f64, r_h_hz: f64, eta_1: f64) -> Result<f64, ModelError> {
    require_non_negative("s1_hz", s1_hz)?;
    require_non_negative("r_h_hz", r_h_hz)?;
    require_probability("eta_1", eta_1)?;
    let denom = r_h_hz * eta_1;
    if denom == 0.0 {
        return Err(ModelError::ZeroDenominator {
            context: "heralding_efficiency",
        });
    }
    Ok(2.0 * s1_hz / denom)
}

/// Heralded autocorrelation at zero delay from dead-time-corrected rates,
/// g²(0) ≃ R_H·S₂·η₁ / (S₁²·η₂). Valid in the regime S₂ ≪ S₁.
pub fn autocorrelation(
    r_h_hz: f64,
    s1_hz: f64,
    s2_hz: f64,
    eta_1: f64,
    eta_2: f64,
) -> Result<f64, ModelError> {
    require_non_negative("r_h_hz", r_h_hz)?;
    require_non_negative("s1_hz", s1_hz)?;
    require_non_negative("s2_hz", s2_hz)?;
    require_probability("eta_1", eta_1)?;
    require_probability("eta_2", eta_2)?;
    let denom = s1_hz * s1_hz * eta_2;
    if denom == 0.0 {
        return Err(ModelError::ZeroDenominator {
            context: "autocorrelation",
        });
    }
    Ok(r_h_hz * s2_hz * eta_1 / denom)
}

/// Recover the true event rate from a rate measured behind a non-paralyzable
/// dead time: true = measured / (1 − measured·τ).
pub fn dead_time_correct(measured_rate_hz: f64, dead_time_s: f64) -> Result<f64, ModelError> {
    require_non_negative("measured_rate_hz", measured_rate_hz)?;
    require_non_negative("dead_time_s", dead_time_s)?;
    let load = measured_rate_hz * dead_time_s;
    if load >= 1.0 {
        return Err(ModelError::DeadTimeSaturated {
            rate_hz: measured_rate_hz,
            dead_time_s,
        });
    }
    Ok(measured_rate_hz / (1.0 - load))
}

/// Inverse of [`dead_time_correct`]: the rate a non-paralyzable detector
/// reports when driven at `true_rate_hz`, observed = true / (1 + true·τ).
pub fn observed_rate(true_rate_hz: f64, dead_time_s: f64) -> Result<f64, ModelError> {
    require_non_negative("true_rate_hz", true_rate_hz)?;
    require_non_negative("dead_time_s", dead_time_s)?;
    Ok(true_rate_hz / (1.0 + true_rate_hz * dead_time_s))
}

/// Spurious-mode counts: spectral modes from the bandwidth ratio, temporal
/// slots from the window-to-period ratio. Both round to nearest and floor
/// at 1.
pub fn mode_counts(
    heralded_bw_ghz: f64,
    heralding_bw_ghz: f64,
    window_ps: f64,
    pulse_period_ps: f64,
) -> Result<(u32, u32), ModelError> {
    require_positive("heralded_bw_ghz", heralded_bw_ghz)?;
    require_positive("heralding_bw_ghz", heralding_bw_ghz)?;
    require_positive("window_ps", window_ps)?;
    require_positive("pulse_period_ps", pulse_period_ps)?;
    let n_f = (heralded_bw_ghz / heralding_bw_ghz).round().max(1.0) as u32;
    let n_t = (window_ps / pulse_period_ps).round().max(1.0) as u32;
    Ok((n_f, n_t))
}

/// Maximum heralding-band mean pair number that keeps the total mean photon
/// number over all N_f·N_t modes below `multi_photon_cap`.
pub fn multimode_heralding_limit(
    n_f: u32,
    n_t: u32,
    multi_photon_cap: f64,
) -> Result<f64, ModelError> {
    if n_f < 1 || n_t < 1 {
        return Err(ModelError::InvalidConfig(
            "mode counts must be >= 1".into(),
        ));
    }
    require_finite("multi_photon_cap", multi_photon_cap)?;
    if multi_photon_cap <= 0.0 || multi_photon_cap >= 1.0 {
        return Err(ModelError::InvalidConfig(format!(
            "multi_photon_cap must lie in (0, 1), got {multi_photon_cap}"
        )));
    }
    Ok(multi_photon_cap / (n_f as f64 * n_t as f64))
}

/// Exact heralded g²(0) of a single mode under lossless heralding in the
/// low-efficiency limit.
///
/// The herald conditions the pair-number law on its size-biased version
/// Q(n) ∝ n·P(n), and g² = Σ n(n−1)Q(n) / (Σ nQ(n))², evaluated by truncated
/// enumeration with the default cutoff.
pub fn single_mode_g2_theory(mu: f64, statistics: PairStatistics) -> Result<f64, ModelError> {
    single_mode_g2_theory_with_cutoff(mu, statistics, G2_ENUMERATION_CUTOFF)
}

/// [`single_mode_g2_theory`] with an explicit enumeration cutoff.
pub fn single_mode_g2_theory_with_cutoff(
    mu: f64,
    statistics: PairStatistics,
    n_max: u32,
) -> Result<f64, ModelError> {
    require_non_negative("mu", mu)?;
    if mu == 0.0 {
        return Ok(0.0);
    }

    // Walk the pmf iteratively; powers/factorials would overflow first.
    let mut pmf = match statistics {
        PairStatistics::Thermal => 1.0 / (1.0 + mu),
        PairStatistics::Poissonian => (-mu).exp(),
    };
    let mut norm = 0.0;
    let mut first = 0.0;
    let mut second = 0.0;
    for n in 1..=n_max {
        pmf *= match statistics {
            PairStatistics::Thermal => mu / (1.0 + mu),
            PairStatistics::Poissonian => mu / n as f64,
        };
        let n = n as f64;
        let w = n * pmf;
        norm += w;
        first += n * w;
        second += n * (n - 1.0) * w;
    }
    if norm == 0.0 {
        // All size-biased weight underflowed; the vacuum-adjacent limit.
        return Ok(0.0);
    }
    Ok(second * norm / (first * first))
}
