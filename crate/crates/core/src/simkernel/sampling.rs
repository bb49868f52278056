//! Pair-number sampling and the event-skipping primitives of the engine.
//!
//! A single down-conversion mode emits a thermal (Bose-Einstein) pair number
//! per pulse; the Poissonian alternative covers the many-mode limit. Both
//! laws are closed under Bernoulli thinning and have closed-form posteriors
//! under "a detector fired" / "no detector fired" conditioning, which is what
//! makes skipping straight to detection events exact.

use rand::Rng;

use crate::model::{ModeStructure, PairStatistics};
use crate::simkernel::SimError;

/// Pair counts drawn for a single pump pulse: one heralding-correlated mode
/// plus the uncorrelated idler-band modes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PulsePairs {
    pub correlated: u32,
    pub uncorrelated: Vec<u32>,
}

impl PulsePairs {
    pub fn total_idler(&self) -> u32 {
        self.correlated + self.uncorrelated.iter().sum::<u32>()
    }
}

/// Draw the pair counts of one pump pulse: the correlated mode and
/// `n_spectral - 1` independent uncorrelated modes, each from the configured
/// law.
pub fn sample_pulse<R: Rng + ?Sized>(
    rng: &mut R,
    modes: &ModeStructure,
    statistics: PairStatistics,
) -> PulsePairs {
    let correlated = sample_law(rng, statistics, modes.mu_per_mode);
    let uncorrelated = (1..modes.n_spectral)
        .map(|_| sample_law(rng, statistics, modes.noise_mu_per_mode))
        .collect();
    PulsePairs {
        correlated,
        uncorrelated,
    }
}

/// Pulse-index gap to the next event when each pulse is an independent
/// Bernoulli trial with probability `p`. Geometrically distributed with
/// support {1, 2, ...}; iterating pulses one by one and drawing per-pulse
/// Bernoulli trials produces the same event-pulse distribution.
pub fn skip_to_next_event<R: Rng + ?Sized>(rng: &mut R, p: f64) -> Result<u64, SimError> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(SimError::InvalidScenario(format!(
            "per-pulse event probability must lie in (0, 1], got {p}"
        )));
    }
    if p == 1.0 {
        return Ok(1);
    }
    // u in (0, 1]; gap = 1 + floor(ln u / ln(1-p)).
    let u = 1.0 - rng.random::<f64>();
    let gap = (u.ln() / (1.0 - p).ln()).floor();
    Ok(1 + if gap < 9.0e18 { gap as u64 } else { 9_000_000_000_000_000_000 })
}

/// Draw one pair count from the configured law with the given mean.
pub fn sample_law<R: Rng + ?Sized>(rng: &mut R, statistics: PairStatistics, mean: f64) -> u32 {
    if mean <= 0.0 {
        return 0;
    }
    match statistics {
        PairStatistics::Thermal => sample_thermal(rng, mean),
        PairStatistics::Poissonian => sample_poisson(rng, mean),
    }
}

fn sample_thermal<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u32 {
    // P(n >= k) = q^k with q = mean / (1 + mean).
    let q = mean / (1.0 + mean);
    let u = 1.0 - rng.random::<f64>();
    let n = (u.ln() / q.ln()).floor();
    if n < u32::MAX as f64 {
        n as u32
    } else {
        u32::MAX
    }
}

fn sample_poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> u32 {
    // Knuth's product-of-uniforms walk; the means here are far below 1.
    let limit = (-mean).exp();
    let mut k = 0u32;
    let mut prod = rng.random::<f64>();
    while prod > limit {
        k += 1;
        prod *= rng.random::<f64>();
    }
    k
}

/// Precomputed sampler for one pair-number law, including its zero-truncated
/// variant and the probability of a non-zero draw.
#[derive(Debug, Clone)]
pub struct LawSampler {
    statistics: PairStatistics,
    mean: f64,
    /// P(n >= 1).
    pub p_nonzero: f64,
    ln_ratio: f64, // thermal: ln(mean / (1 + mean))
    exp_neg: f64,  // poisson: exp(-mean)
}

impl LawSampler {
    pub fn new(statistics: PairStatistics, mean: f64) -> Self {
        let (p_nonzero, ln_ratio, exp_neg) = if mean <= 0.0 {
            (0.0, f64::NEG_INFINITY, 1.0)
        } else {
            match statistics {
                PairStatistics::Thermal => {
                    let q = mean / (1.0 + mean);
                    (q, q.ln(), 1.0)
                }
                PairStatistics::Poissonian => {
                    let e = (-mean).exp();
                    (1.0 - e, 0.0, e)
                }
            }
        };
        LawSampler {
            statistics,
            mean,
            p_nonzero,
            ln_ratio,
            exp_neg,
        }
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        if self.mean <= 0.0 {
            return 0;
        }
        match self.statistics {
            PairStatistics::Thermal => {
                let u = 1.0 - rng.random::<f64>();
                let n = (u.ln() / self.ln_ratio).floor();
                if n < u32::MAX as f64 {
                    n as u32
                } else {
                    u32::MAX
                }
            }
            PairStatistics::Poissonian => {
                let mut k = 0u32;
                let mut prod = rng.random::<f64>();
                while prod > self.exp_neg {
                    k += 1;
                    prod *= rng.random::<f64>();
                }
                k
            }
        }
    }

    /// Draw from the law conditioned on n >= 1.
    pub fn sample_zero_truncated<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        debug_assert!(self.mean > 0.0);
        match self.statistics {
            PairStatistics::Thermal => {
                // Conditioned on n >= 1 the tail restarts: 1 + the same law.
                let u = 1.0 - rng.random::<f64>();
                let n = (u.ln() / self.ln_ratio).floor();
                1 + if n < u32::MAX as f64 { n as u32 } else { u32::MAX - 1 }
            }
            PairStatistics::Poissonian => {
                // CDF inversion over k = 1, 2, ... of the truncated pmf.
                let u = rng.random::<f64>() * self.p_nonzero;
                let mut k = 1u32;
                let mut pmf = self.mean * self.exp_neg;
                let mut cdf = pmf;
                while u > cdf && k < 10_000 {
                    k += 1;
                    pmf *= self.mean / k as f64;
                    cdf += pmf;
                }
                k
            }
        }
    }
}

/// Posterior over the correlated-mode pair count of a pulse that produced at
/// least one heralding-detector click candidate, together with the law of the
/// number of clicking signal photons.
///
/// `p_signal` is the per-pair probability that its signal photon survives the
/// heralding path and fires the detector. The posterior is
/// P(m | click) ∝ P(m)·(1 − (1 − p_signal)^m), tabulated up to `n_max`.
#[derive(Debug, Clone)]
pub struct HeraldPosterior {
    p_signal: f64,
    /// Per-pulse probability of at least one click candidate.
    pub p_click: f64,
    cdf: Vec<f64>, // P(m <= k | click), k = 1..
}

impl HeraldPosterior {
    pub fn new(statistics: PairStatistics, mu: f64, p_signal: f64, n_max: u32) -> Self {
        assert!((0.0..=1.0).contains(&p_signal));
        if mu <= 0.0 || p_signal == 0.0 {
            return HeraldPosterior {
                p_signal,
                p_click: 0.0,
                cdf: Vec::new(),
            };
        }
        // Closed-form click probability from the thinning closure of each law.
        let p_click = match statistics {
            PairStatistics::Thermal => mu * p_signal / (1.0 + mu * p_signal),
            PairStatistics::Poissonian => -(-mu * p_signal).exp_m1(),
        };
        let mut pmf = match statistics {
            PairStatistics::Thermal => 1.0 / (1.0 + mu),
            PairStatistics::Poissonian => (-mu).exp(),
        };
        let mut weights = Vec::with_capacity(n_max as usize);
        let mut total = 0.0;
        for m in 1..=n_max {
            pmf *= match statistics {
                PairStatistics::Thermal => mu / (1.0 + mu),
                PairStatistics::Poissonian => mu / m as f64,
            };
            let w = pmf * (1.0 - (1.0 - p_signal).powi(m as i32));
            total += w;
            weights.push(total);
        }
        for w in &mut weights {
            *w /= total;
        }
        HeraldPosterior {
            p_signal,
            p_click,
            cdf: weights,
        }
    }

    /// Draw (pair count m, clicking-photon count d >= 1) for a heralding
    /// pulse.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (u32, u32) {
        let u = rng.random::<f64>();
        let mut m = self.cdf.len() as u32; // fall through to the tail bin
        for (i, c) in self.cdf.iter().enumerate() {
            if u <= *c {
                m = i as u32 + 1;
                break;
            }
        }
        (m, self.sample_click_count(rng, m))
    }

    /// Binomial(m, p_signal) conditioned on >= 1 success.
    fn sample_click_count<R: Rng + ?Sized>(&self, rng: &mut R, m: u32) -> u32 {
        if m == 1 {
            return 1;
        }
        let p = self.p_signal;
        let q = 1.0 - p;
        let norm = 1.0 - q.powi(m as i32);
        let u = rng.random::<f64>() * norm;
        // pmf walk from d = 1.
        let mut pmf = m as f64 * p * q.powi(m as i32 - 1);
        let mut cdf = pmf;
        let mut d = 1u32;
        while u > cdf && d < m {
            pmf *= (m - d) as f64 / (d + 1) as f64 * (p / q);
            d += 1;
            cdf += pmf;
        }
        d
    }
}

/// Mean of the correlated-mode pair number conditioned on the pulse having
/// produced no heralding click candidate.
pub fn no_click_mean(statistics: PairStatistics, mu: f64, p_signal: f64) -> f64 {
    match statistics {
        PairStatistics::Thermal => mu * (1.0 - p_signal) / (1.0 + mu * p_signal),
        PairStatistics::Poissonian => mu * (1.0 - p_signal),
    }
}
