//! Per-block event loop.
//!
//! A block simulates pulses `[start, end)` plus a warm-up margin replayed
//! before `start` to converge detector dead-time state and gate content at
//! the boundary. Events are counted by click time inside the block window
//! only. All times inside a block are picoseconds relative to the warm-up
//! origin, so magnitudes stay small regardless of run length; pulse slots are
//! block-local indices.
//!
//! Event flow per herald candidate (geometric skip at the exact per-pulse
//! click probability):
//!   herald click -> APD1 arming window + TAC1 post-selection ->
//!   accepted click -> APD2 arming window + TAC2 post-selection.
//! Idler-band content of every pulse a gate can reach is sampled lazily from
//! the exact conditional law (herald-conditioned for click-candidate pulses,
//! no-click-conditioned otherwise) and memoized in a ring so overlapping
//! gates see one consistent reality.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::simkernel::detector::{sample_jitter, tac_gate, DetectorState, JITTER_CLAMP_SIGMA};
use crate::simkernel::sampling::{no_click_mean, HeraldPosterior, LawSampler};
use crate::simkernel::{block_rng, ClickOrigin, CountingTotals, SimError, SimScenario};

const POSTERIOR_CUTOFF: u32 = 40;

#[derive(Debug, Clone)]
struct GateParams {
    efficiency: f64,
    jitter_sigma_ps: f64,
    dead_ps: f64,
    dark_prob: f64,
    /// Arming-window start relative to the trigger (ps).
    arm_delay_ps: f64,
    /// Arming-window length (ps).
    arm_window_ps: f64,
    /// TAC post-selection window (ps).
    tac_window_ps: f64,
}

#[derive(Debug)]
pub(crate) struct EngineParams {
    period_ps: f64,
    // Heralding chain.
    posterior: HeraldPosterior,
    sspd_sigma_ps: f64,
    sspd_dead_ps: f64,
    sspd_dark_per_ps: f64,
    // Idler chain.
    idler_t: f64,
    corr_noclick: LawSampler,
    noise: LawSampler,
    n_noise_modes: u32,
    p_noise_nonzero: f64,
    idler_delay_ps: f64,
    apd2_delay_ps: f64,
    apd1: GateParams,
    apd2: GateParams,
    inherits_jitter: bool,
    // Pulse slots a gate can reach around its herald.
    reach_lo: i64,
    reach_hi: i64,
    warmup_pulses: u64,
}

impl EngineParams {
    pub(crate) fn build(scenario: &SimScenario) -> Result<EngineParams, SimError> {
        let src = &scenario.source;
        let period_ps = scenario.period_ps();
        let t_signal = src.signal_transmission()?;
        let t_idler = src.idler_transmission()?;
        let p_signal = src.gamma * t_signal * scenario.sspd.efficiency;
        let mu = scenario.modes.mu_per_mode;
        let statistics = src.statistics;

        let posterior = HeraldPosterior::new(statistics, mu, p_signal, POSTERIOR_CUTOFF);
        let corr_noclick = LawSampler::new(statistics, no_click_mean(statistics, mu, p_signal));
        let noise = LawSampler::new(statistics, scenario.modes.noise_mu_per_mode);
        let n_noise_modes = scenario.modes.n_spectral - 1;
        let p_noise_nonzero = 1.0 - (1.0 - noise.p_nonzero).powi(n_noise_modes as i32);

        let apd1 = GateParams {
            efficiency: scenario.apd1.efficiency,
            jitter_sigma_ps: scenario.apd1.jitter_sigma_ps(),
            dead_ps: scenario.apd1.dead_time_s * 1e12,
            dark_prob: scenario.apd1.dark_prob_per_gate,
            arm_delay_ps: scenario.apd1.gate_delay_ps,
            arm_window_ps: scenario.apd1.gate_window_ps,
            tac_window_ps: scenario.tac1_window_ps,
        };
        let apd2 = GateParams {
            efficiency: scenario.apd2.efficiency,
            jitter_sigma_ps: scenario.apd2.jitter_sigma_ps(),
            dead_ps: scenario.apd2.dead_time_s * 1e12,
            dark_prob: scenario.apd2.dark_prob_per_gate,
            arm_delay_ps: scenario.apd2.gate_delay_ps,
            arm_window_ps: scenario.apd2.gate_window_ps,
            tac_window_ps: scenario.tac2_window_ps,
        };

        // Slot reach of the two arming windows around a herald, with jitter
        // clamped the slot sets are exact. Triggers sit anywhere from
        // -J_herald (jittered photon click) to one period (dark click inside
        // a slot).
        let j_herald = JITTER_CLAMP_SIGMA * scenario.sspd.jitter_sigma_ps();
        let j1 = JITTER_CLAMP_SIGMA * apd1.jitter_sigma_ps;
        let trig_lo = -j_herald;
        let trig_hi = j_herald.max(period_ps);
        let d1 = scenario.idler_delay_ps;
        let d2 = scenario.apd2_delay_ps;
        let g1_lo = ((apd1.arm_delay_ps - d1 + trig_lo) / period_ps).ceil() as i64;
        let g1_hi = ((apd1.arm_delay_ps + apd1.arm_window_ps - d1 + trig_hi) / period_ps).floor()
            as i64;
        let jt2 = if scenario.apd2_gate_inherits_jitter { j1 } else { 0.0 };
        let g2_lo =
            ((apd2.arm_delay_ps - d2 + g1_lo as f64 * period_ps - jt2) / period_ps).ceil() as i64;
        let g2_hi = ((apd2.arm_delay_ps + apd2.arm_window_ps - d2 + g1_hi as f64 * period_ps
            + jt2)
            / period_ps)
            .floor() as i64;
        let reach_lo = g1_lo.min(g2_lo).min(0);
        let reach_hi = g1_hi.max(g2_hi).max(0);

        let max_dead_ps = (scenario.sspd.dead_time_s * 1e12)
            .max(apd1.dead_ps)
            .max(apd2.dead_ps);
        let warmup_pulses = (max_dead_ps / period_ps).ceil() as u64
            + (reach_hi - reach_lo) as u64
            + 64;

        Ok(EngineParams {
            period_ps,
            posterior,
            sspd_sigma_ps: scenario.sspd.jitter_sigma_ps(),
            sspd_dead_ps: scenario.sspd.dead_time_s * 1e12,
            sspd_dark_per_ps: scenario.sspd.dark_rate_hz * 1e-12,
            idler_t: src.gamma * t_idler,
            corr_noclick,
            noise,
            n_noise_modes,
            p_noise_nonzero,
            idler_delay_ps: scenario.idler_delay_ps,
            apd2_delay_ps: scenario.apd2_delay_ps,
            apd1,
            apd2,
            inherits_jitter: scenario.apd2_gate_inherits_jitter,
            reach_lo,
            reach_hi,
            warmup_pulses,
        })
    }
}

/// One transported idler photon waiting in the ring, with its detector-side
/// randomness pre-rolled so repeated gate passes see a single reality.
#[derive(Debug, Clone)]
struct IdlerPhoton {
    arrival_ps: f64,
    click_ps: f64,
    detects: bool,
    route_apd2: bool,
    correlated: bool,
    consumed: bool,
}

/// Memoized per-slot idler content over a sliding window of pulse slots.
#[derive(Debug, Default)]
struct Ring {
    base: i64,
    slots: VecDeque<Option<Vec<IdlerPhoton>>>,
}

impl Ring {
    fn ensure_range(&mut self, lo: i64, hi: i64) {
        if self.slots.is_empty() {
            self.base = lo;
        }
        while self.base > lo {
            self.slots.push_front(None);
            self.base -= 1;
        }
        while self.base + self.slots.len() as i64 <= hi {
            self.slots.push_back(None);
        }
    }

    fn entry(&mut self, slot: i64) -> &mut Option<Vec<IdlerPhoton>> {
        debug_assert!(slot >= self.base && slot < self.base + self.slots.len() as i64);
        &mut self.slots[(slot - self.base) as usize]
    }

    fn prune_below(&mut self, limit: i64) {
        while self.base < limit && !self.slots.is_empty() {
            self.slots.pop_front();
            self.base += 1;
        }
        if self.slots.is_empty() {
            self.base = limit;
        }
    }
}

struct PendingGate {
    trigger_ps: f64,
    herald_slot: i64,
    from_dark: bool,
}

enum StageOutcome {
    NoAvalanche,
    Avalanche {
        click_ps: f64,
        arrival_ps: f64,
        origin: ClickOrigin,
        tac_accepted: bool,
    },
}

struct BlockState<'p> {
    p: &'p EngineParams,
    rng: ChaCha8Rng,
    ring: Ring,
    sspd: DetectorState,
    apd1: DetectorState,
    apd2: DetectorState,
    totals: CountingTotals,
    start_ps: f64,
    end_ps: f64,
    scratch: Vec<(f64, f64, ClickOrigin)>,
}

impl<'p> BlockState<'p> {
    fn in_window(&self, t_ps: f64) -> bool {
        t_ps >= self.start_ps && t_ps < self.end_ps
    }

    /// Busy span (s) a click contributes inside the counting window.
    fn clipped_busy_s(&self, click_ps: f64, dead_ps: f64) -> f64 {
        let a = click_ps.max(self.start_ps);
        let b = (click_ps + dead_ps).min(self.end_ps);
        (b - a).max(0.0) * 1e-12
    }

    fn make_photons(&mut self, slot: i64, correlated_pairs: u32) -> Vec<IdlerPhoton> {
        let p = self.p;
        let mut photons = Vec::new();
        for _ in 0..correlated_pairs {
            if self.rng.random::<f64>() < p.idler_t {
                photons.push(self.make_photon(slot, true));
            }
        }
        if p.n_noise_modes > 0
            && p.p_noise_nonzero > 0.0
            && self.rng.random::<f64>() < p.p_noise_nonzero
        {
            // At least one uncorrelated mode fired; walk the first-firing
            // mode index, then sample the rest unconditioned.
            let q = p.noise.p_nonzero;
            let u = self.rng.random::<f64>() * p.p_noise_nonzero;
            let mut index = 0;
            let mut pi = q;
            let mut cum = q;
            while u > cum && index + 1 < p.n_noise_modes {
                pi *= 1.0 - q;
                cum += pi;
                index += 1;
            }
            let mut pairs = p.noise.sample_zero_truncated(&mut self.rng);
            for _ in index + 1..p.n_noise_modes {
                pairs += p.noise.sample(&mut self.rng);
            }
            for _ in 0..pairs {
                if self.rng.random::<f64>() < p.idler_t {
                    photons.push(self.make_photon(slot, false));
                }
            }
        }
        photons
    }

    fn make_photon(&mut self, slot: i64, correlated: bool) -> IdlerPhoton {
        let p = self.p;
        let route_apd2 = self.rng.random::<f64>() < 0.5;
        let gate = if route_apd2 { &p.apd2 } else { &p.apd1 };
        let arrival_ps = slot as f64 * p.period_ps
            + p.idler_delay_ps
            + if route_apd2 { p.apd2_delay_ps } else { 0.0 };
        let detects = self.rng.random::<f64>() < gate.efficiency;
        let click_ps = arrival_ps + sample_jitter(&mut self.rng, gate.jitter_sigma_ps);
        IdlerPhoton {
            arrival_ps,
            click_ps,
            detects,
            route_apd2,
            correlated,
            consumed: false,
        }
    }

    /// Fill every slot a gate around `herald_slot` can reach.
    fn fill_reach(&mut self, herald_slot: i64) {
        let lo = herald_slot + self.p.reach_lo;
        let hi = herald_slot + self.p.reach_hi;
        self.ring.ensure_range(lo, hi);
        for slot in lo..=hi {
            if self.ring.entry(slot).is_none() {
                let content = if slot < 0 {
                    Vec::new() // before the warm-up origin; unobserved
                } else {
                    let pairs = self.p.corr_noclick.sample(&mut self.rng);
                    self.make_photons(slot, pairs)
                };
                *self.ring.entry(slot) = Some(content);
            }
        }
    }

    /// Run one arming window + TAC stage on one detector. The first live
    /// avalanche is the TAC stop; whether it falls inside the TAC window
    /// decides acceptance.
    fn stage(
        &mut self,
        which_apd2: bool,
        trigger_ps: f64,
        herald_slot: i64,
        from_dark: bool,
    ) -> StageOutcome {
        let gate = if which_apd2 { &self.p.apd2 } else { &self.p.apd1 };
        let (dead_ps, dark_prob, tac_window) = (gate.dead_ps, gate.dark_prob, gate.tac_window_ps);
        let arm_lo = trigger_ps + gate.arm_delay_ps;
        let arm_hi = arm_lo + gate.arm_window_ps;

        let mut scratch = std::mem::take(&mut self.scratch);
        scratch.clear();
        let lo = herald_slot + self.p.reach_lo;
        let hi = herald_slot + self.p.reach_hi;
        for slot in lo..=hi {
            let photons = self
                .ring
                .entry(slot)
                .as_mut()
                .expect("reach pre-filled before stage");
            for ph in photons.iter_mut() {
                if ph.route_apd2 != which_apd2 || ph.consumed {
                    continue;
                }
                if ph.arrival_ps >= arm_lo && ph.arrival_ps <= arm_hi {
                    // Absorbed by the armed diode whether or not it fires.
                    ph.consumed = true;
                    if ph.detects {
                        let origin = if ph.correlated && slot == herald_slot && !from_dark {
                            ClickOrigin::PhotonCorrelated
                        } else {
                            ClickOrigin::PhotonUncorrelated
                        };
                        scratch.push((ph.click_ps, ph.arrival_ps, origin));
                    }
                }
            }
        }
        if dark_prob > 0.0 && self.rng.random::<f64>() < dark_prob {
            let t = arm_lo + self.rng.random::<f64>() * gate.arm_window_ps;
            scratch.push((t, t, ClickOrigin::Dark));
        }
        scratch.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut outcome = StageOutcome::NoAvalanche;
        for &(click, arrival, origin) in scratch.iter() {
            let state = if which_apd2 {
                &mut self.apd2
            } else {
                &mut self.apd1
            };
            if state.try_click(click, dead_ps) {
                let busy = self.clipped_busy_s(click, dead_ps);
                if which_apd2 {
                    self.totals.apd2_busy_s += busy;
                } else {
                    self.totals.apd1_busy_s += busy;
                }
                outcome = StageOutcome::Avalanche {
                    click_ps: click,
                    arrival_ps: arrival,
                    origin,
                    tac_accepted: tac_gate(click, trigger_ps, tac_window),
                };
                break;
            }
        }
        self.scratch = scratch;
        outcome
    }

    fn evaluate_gate(&mut self, gate: &PendingGate) {
        self.fill_reach(gate.herald_slot);
        let first = self.stage(false, gate.trigger_ps, gate.herald_slot, gate.from_dark);
        let StageOutcome::Avalanche {
            click_ps,
            arrival_ps,
            origin,
            tac_accepted: true,
        } = first
        else {
            return;
        };
        if self.in_window(click_ps) {
            self.totals.s1_counts += 1;
            self.totals.s1_origins.add(origin);
        }
        if click_ps >= self.end_ps {
            // Anything downstream clicks even later; the next block replays it.
            return;
        }
        let trigger2 = if self.p.inherits_jitter {
            click_ps
        } else {
            arrival_ps
        };
        let second = self.stage(true, trigger2, gate.herald_slot, gate.from_dark);
        if let StageOutcome::Avalanche {
            click_ps: click2,
            origin: origin2,
            tac_accepted: true,
            ..
        } = second
        {
            if self.in_window(click2) {
                self.totals.s2_counts += 1;
                self.totals.s2_origins.add(origin2);
            }
        }
    }
}

fn geometric_gap<R: Rng + ?Sized>(rng: &mut R, p: f64) -> i64 {
    debug_assert!(p > 0.0 && p <= 1.0);
    if p >= 1.0 {
        return 1;
    }
    let u = 1.0 - rng.random::<f64>();
    let gap = (u.ln() / (1.0 - p).ln()).floor();
    1 + if gap < 4.0e18 { gap as i64 } else { 4_000_000_000_000_000_000 }
}

pub(crate) fn run_block(
    params: &EngineParams,
    seed: u64,
    block_index: u64,
    start_pulse: u64,
    end_pulse: u64,
) -> CountingTotals {
    let period = params.period_ps;
    let warmup = params.warmup_pulses.min(start_pulse);
    let origin = start_pulse - warmup;
    let span_pulses = (end_pulse - origin) as i64;
    let block_pulses = end_pulse - start_pulse;

    let mut st = BlockState {
        p: params,
        rng: block_rng(seed, block_index),
        ring: Ring::default(),
        sspd: DetectorState::new(),
        apd1: DetectorState::new(),
        apd2: DetectorState::new(),
        totals: CountingTotals {
            pulses: block_pulses,
            duration_s: block_pulses as f64 * period * 1e-12,
            ..CountingTotals::default()
        },
        start_ps: warmup as f64 * period,
        end_ps: span_pulses as f64 * period,
        scratch: Vec::new(),
    };

    // Slots the candidate stream must cover so every gate of an in-window
    // herald sees fully resolved candidate status.
    let last_needed = span_pulses + params.reach_hi + 2;

    let p_click = params.posterior.p_click;
    let mut next_cand: i64 = if p_click > 0.0 {
        -1 + geometric_gap(&mut st.rng, p_click)
    } else {
        i64::MAX
    };
    let mut next_dark_ps = if params.sspd_dark_per_ps > 0.0 {
        let u = 1.0 - st.rng.random::<f64>();
        -u.ln() / params.sspd_dark_per_ps
    } else {
        f64::INFINITY
    };
    let mut pending: VecDeque<PendingGate> = VecDeque::new();

    loop {
        // Gates are safe to evaluate once the candidate frontier has passed
        // their reach; they run in trigger order.
        while let Some(gate) = pending.front() {
            if next_cand > gate.herald_slot + params.reach_hi {
                let gate = pending.pop_front().unwrap();
                st.evaluate_gate(&gate);
                let keep = pending
                    .front()
                    .map(|g| g.herald_slot)
                    .unwrap_or_else(|| next_cand.min(last_needed))
                    + params.reach_lo;
                st.ring.prune_below(keep);
            } else {
                break;
            }
        }

        let cand_active = next_cand <= last_needed;
        let dark_active = next_dark_ps < st.end_ps;
        if !cand_active && !dark_active {
            debug_assert!(pending.is_empty());
            break;
        }

        let cand_time = if cand_active {
            next_cand as f64 * period
        } else {
            f64::INFINITY
        };
        if cand_time <= next_dark_ps {
            // A pulse with at least one would-be heralding click.
            let (pairs, clicking) = params.posterior.sample(&mut st.rng);
            st.ring.ensure_range(next_cand, next_cand);
            debug_assert!(st.ring.entry(next_cand).is_none());
            let content = st.make_photons(next_cand, pairs);
            *st.ring.entry(next_cand) = Some(content);

            let mut jitter = sample_jitter(&mut st.rng, params.sspd_sigma_ps);
            for _ in 1..clicking {
                jitter = jitter.min(sample_jitter(&mut st.rng, params.sspd_sigma_ps));
            }
            let t_click = cand_time + jitter;
            if st.sspd.try_click(t_click, params.sspd_dead_ps) {
                if st.in_window(t_click) {
                    st.totals.heralds += 1;
                    st.totals.herald_origins.add(ClickOrigin::PhotonCorrelated);
                }
                if t_click < st.end_ps {
                    pending.push_back(PendingGate {
                        trigger_ps: t_click,
                        herald_slot: next_cand,
                        from_dark: false,
                    });
                }
            }
            next_cand = next_cand.saturating_add(geometric_gap(&mut st.rng, p_click));
        } else {
            let t = next_dark_ps;
            if st.sspd.try_click(t, params.sspd_dead_ps) {
                if st.in_window(t) {
                    st.totals.heralds += 1;
                    st.totals.herald_origins.add(ClickOrigin::Dark);
                }
                if t < st.end_ps {
                    pending.push_back(PendingGate {
                        trigger_ps: t,
                        herald_slot: (t / period).floor() as i64,
                        from_dark: true,
                    });
                }
            }
            let u = 1.0 - st.rng.random::<f64>();
            next_dark_ps = t + -u.ln() / params.sspd_dark_per_ps;
        }
    }

    st.totals
}
