//! Sectioned key-value configuration files.
//!
//! The format is flat `key = value` lines under `[section]` headers, with
//! `#` comments. Every key carries its unit in its name. Unset keys fall
//! back to the reference scenario; unknown sections or keys are errors with
//! line diagnostics.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use hsps_core::model::PairStatistics;
use hsps_core::simkernel::{SimScenario, REFERENCE_NOISE_RATIO};

/// A structured configuration error pointing at the offending line/field.
#[derive(Debug)]
pub struct ConfigError {
    pub message: String,
}

impl ConfigError {
    fn new(msg: impl Into<String>) -> Self {
        ConfigError {
            message: msg.into(),
        }
    }
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for ConfigError {}

const SECTIONS: &[(&str, &[&str])] = &[
    ("laser", &["rep_rate_ghz", "power_mw"]),
    ("shg", &["efficiency", "exponent"]),
    ("spdc", &["brightness_pairs_per_mw_s_ghz", "statistics"]),
    ("filters", &["heralding_bw_ghz", "heralded_bw_ghz"]),
    (
        "losses",
        &[
            "gamma",
            "signal_db",
            "idler_db",
            "signal_excess_db",
            "idler_excess_db",
        ],
    ),
    (
        "sspd",
        &["efficiency", "dark_rate_hz", "jitter_fwhm_ps", "dead_time_ns"],
    ),
    (
        "apd1",
        &[
            "efficiency",
            "dark_prob_per_gate",
            "jitter_fwhm_ps",
            "dead_time_us",
            "gate_delay_ps",
            "gate_window_ps",
        ],
    ),
    (
        "apd2",
        &[
            "efficiency",
            "dark_prob_per_gate",
            "jitter_fwhm_ps",
            "dead_time_us",
            "gate_delay_ps",
            "gate_window_ps",
        ],
    ),
    (
        "tac",
        &[
            "window1_ps",
            "window2_ps",
            "idler_delay_ps",
            "apd2_delay_ps",
            "apd2_gate_inherits_jitter",
        ],
    ),
    (
        "modes",
        &["n_spectral", "n_temporal", "noise_brightness_ratio"],
    ),
    ("run", &["duration", "seed", "block_size_pulses"]),
];

fn key_known(section: &str, key: &str) -> bool {
    SECTIONS
        .iter()
        .any(|(s, keys)| *s == section && keys.contains(&key))
}

fn section_known(section: &str) -> bool {
    SECTIONS.iter().any(|(s, _)| *s == section)
}

/// Raw parsed file: (section, key) -> (value, line number).
#[derive(Debug, Default, Clone)]
pub struct ConfigFile {
    values: BTreeMap<(String, String), (String, usize)>,
}

impl ConfigFile {
    pub fn parse(text: &str, origin: &str) -> Result<ConfigFile, ConfigError> {
        let mut values = BTreeMap::new();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let lineno = lineno + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| {
                        ConfigError::new(format!("{origin}:{lineno}: unterminated section header"))
                    })?
                    .trim()
                    .to_string();
                if !section_known(&name) {
                    return Err(ConfigError::new(format!(
                        "{origin}:{lineno}: unknown section [{name}]"
                    )));
                }
                section = name;
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::new(format!(
                    "{origin}:{lineno}: expected 'key = value', got '{line}'"
                )));
            };
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if section.is_empty() {
                return Err(ConfigError::new(format!(
                    "{origin}:{lineno}: key '{key}' appears before any [section]"
                )));
            }
            if !key_known(&section, &key) {
                return Err(ConfigError::new(format!(
                    "{origin}:{lineno}: unknown key '{key}' in [{section}]"
                )));
            }
            values.insert((section.clone(), key), (value, lineno));
        }
        Ok(ConfigFile { values })
    }

    pub fn load(path: &Path) -> Result<ConfigFile, LoadError> {
        let text = std::fs::read_to_string(path).map_err(LoadError::Io)?;
        ConfigFile::parse(&text, &path.display().to_string()).map_err(LoadError::Config)
    }

    fn get(&self, section: &str, key: &str) -> Option<&(String, usize)> {
        self.values.get(&(section.to_string(), key.to_string()))
    }

    fn f64(&self, section: &str, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.get(section, key) {
            None => Ok(None),
            Some((v, line)) => v.parse::<f64>().map(Some).map_err(|_| {
                ConfigError::new(format!(
                    "line {line}: [{section}] {key}: '{v}' is not a number"
                ))
            }),
        }
    }

    fn u64(&self, section: &str, key: &str) -> Result<Option<u64>, ConfigError> {
        match self.get(section, key) {
            None => Ok(None),
            Some((v, line)) => v.parse::<u64>().map(Some).map_err(|_| {
                ConfigError::new(format!(
                    "line {line}: [{section}] {key}: '{v}' is not a non-negative integer"
                ))
            }),
        }
    }

    fn bool(&self, section: &str, key: &str) -> Result<Option<bool>, ConfigError> {
        match self.get(section, key) {
            None => Ok(None),
            Some((v, line)) => match v.as_str() {
                "true" => Ok(Some(true)),
                "false" => Ok(Some(false)),
                _ => Err(ConfigError::new(format!(
                    "line {line}: [{section}] {key}: expected true/false, got '{v}'"
                ))),
            },
        }
    }

    /// Resolve the file over the reference scenario. Returns the scenario
    /// and the uncorrelated-mode brightness ratio it encodes.
    pub fn resolve(&self) -> Result<(SimScenario, f64), ConfigError> {
        let mut sc = SimScenario::reference();
        let set = |target: &mut f64, v: Option<f64>| {
            if let Some(x) = v {
                *target = x;
            }
        };

        if let Some(ghz) = self.f64("laser", "rep_rate_ghz")? {
            sc.source.rep_rate_hz = ghz * 1e9;
        }
        set(&mut sc.source.laser_power_mw, self.f64("laser", "power_mw")?);
        set(&mut sc.source.shg_efficiency, self.f64("shg", "efficiency")?);
        set(&mut sc.source.shg_exponent, self.f64("shg", "exponent")?);
        set(
            &mut sc.source.brightness,
            self.f64("spdc", "brightness_pairs_per_mw_s_ghz")?,
        );
        if let Some((v, line)) = self.get("spdc", "statistics") {
            sc.source.statistics = match v.as_str() {
                "thermal" => PairStatistics::Thermal,
                "poissonian" => PairStatistics::Poissonian,
                _ => {
                    return Err(ConfigError::new(format!(
                        "line {line}: [spdc] statistics: expected thermal or poissonian, got '{v}'"
                    )))
                }
            };
        }
        set(
            &mut sc.source.heralding_bw_ghz,
            self.f64("filters", "heralding_bw_ghz")?,
        );
        set(
            &mut sc.source.heralded_bw_ghz,
            self.f64("filters", "heralded_bw_ghz")?,
        );
        set(&mut sc.source.gamma, self.f64("losses", "gamma")?);
        set(&mut sc.source.signal_loss_db, self.f64("losses", "signal_db")?);
        set(&mut sc.source.idler_loss_db, self.f64("losses", "idler_db")?);
        set(
            &mut sc.source.signal_excess_loss_db,
            self.f64("losses", "signal_excess_db")?,
        );
        set(
            &mut sc.source.idler_excess_loss_db,
            self.f64("losses", "idler_excess_db")?,
        );

        set(&mut sc.sspd.efficiency, self.f64("sspd", "efficiency")?);
        set(&mut sc.sspd.dark_rate_hz, self.f64("sspd", "dark_rate_hz")?);
        set(&mut sc.sspd.jitter_fwhm_ps, self.f64("sspd", "jitter_fwhm_ps")?);
        if let Some(ns) = self.f64("sspd", "dead_time_ns")? {
            sc.sspd.dead_time_s = ns / 1e9;
        }
        for (name, det) in [("apd1", &mut sc.apd1), ("apd2", &mut sc.apd2)] {
            set(&mut det.efficiency, self.f64(name, "efficiency")?);
            set(
                &mut det.dark_prob_per_gate,
                self.f64(name, "dark_prob_per_gate")?,
            );
            set(&mut det.jitter_fwhm_ps, self.f64(name, "jitter_fwhm_ps")?);
            if let Some(us) = self.f64(name, "dead_time_us")? {
                det.dead_time_s = us / 1e6;
            }
            set(&mut det.gate_delay_ps, self.f64(name, "gate_delay_ps")?);
            set(&mut det.gate_window_ps, self.f64(name, "gate_window_ps")?);
        }

        set(&mut sc.tac1_window_ps, self.f64("tac", "window1_ps")?);
        set(&mut sc.tac2_window_ps, self.f64("tac", "window2_ps")?);
        set(&mut sc.idler_delay_ps, self.f64("tac", "idler_delay_ps")?);
        set(&mut sc.apd2_delay_ps, self.f64("tac", "apd2_delay_ps")?);
        if let Some(b) = self.bool("tac", "apd2_gate_inherits_jitter")? {
            sc.apd2_gate_inherits_jitter = b;
        }

        if let Some(n) = self.u64("modes", "n_spectral")? {
            sc.modes.n_spectral = n as u32;
        }
        if let Some(n) = self.u64("modes", "n_temporal")? {
            sc.modes.n_temporal = n as u32;
        }
        let noise_ratio = self
            .f64("modes", "noise_brightness_ratio")?
            .unwrap_or(REFERENCE_NOISE_RATIO);

        if let Some((v, line)) = self.get("run", "duration") {
            sc.duration_s = parse_duration(v).map_err(|e| {
                ConfigError::new(format!("line {line}: [run] duration: {e}"))
            })?;
        }
        if let Some(seed) = self.u64("run", "seed")? {
            sc.seed = seed;
        }
        if let Some(b) = self.u64("run", "block_size_pulses")? {
            sc.block_size_pulses = b;
        }

        // Derive the mode means from the resolved pump chain.
        let mu = sc.source.mean_pairs_per_pulse().map_err(|e| {
            ConfigError::new(format!("pump chain does not resolve: {e}"))
        })?;
        sc.modes.mu_per_mode = mu;
        sc.modes.noise_mu_per_mode = mu * noise_ratio;
        Ok((sc, noise_ratio))
    }
}

#[derive(Debug)]
pub enum LoadError {
    Io(std::io::Error),
    Config(ConfigError),
}

/// Serialize a resolved scenario back into the config format. Parsing the
/// output resolves to the identical scenario (floats print in shortest
/// round-trip form).
pub fn serialize(scenario: &SimScenario, noise_ratio: f64) -> String {
    let mut s = String::new();
    let w = &mut s;
    let _ = writeln!(w, "[laser]");
    let _ = writeln!(w, "rep_rate_ghz = {}", mul_preimage(scenario.source.rep_rate_hz, 1e9));
    let _ = writeln!(w, "power_mw = {}", scenario.source.laser_power_mw);
    let _ = writeln!(w, "\n[shg]");
    let _ = writeln!(w, "efficiency = {}", scenario.source.shg_efficiency);
    let _ = writeln!(w, "exponent = {}", scenario.source.shg_exponent);
    let _ = writeln!(w, "\n[spdc]");
    let _ = writeln!(
        w,
        "brightness_pairs_per_mw_s_ghz = {}",
        scenario.source.brightness
    );
    let _ = writeln!(w, "statistics = {}", scenario.source.statistics);
    let _ = writeln!(w, "\n[filters]");
    let _ = writeln!(w, "heralding_bw_ghz = {}", scenario.source.heralding_bw_ghz);
    let _ = writeln!(w, "heralded_bw_ghz = {}", scenario.source.heralded_bw_ghz);
    let _ = writeln!(w, "\n[losses]");
    let _ = writeln!(w, "gamma = {}", scenario.source.gamma);
    let _ = writeln!(w, "signal_db = {}", scenario.source.signal_loss_db);
    let _ = writeln!(w, "idler_db = {}", scenario.source.idler_loss_db);
    let _ = writeln!(
        w,
        "signal_excess_db = {}",
        scenario.source.signal_excess_loss_db
    );
    let _ = writeln!(
        w,
        "idler_excess_db = {}",
        scenario.source.idler_excess_loss_db
    );
    let _ = writeln!(w, "\n[sspd]");
    let _ = writeln!(w, "efficiency = {}", scenario.sspd.efficiency);
    let _ = writeln!(w, "dark_rate_hz = {}", scenario.sspd.dark_rate_hz);
    let _ = writeln!(w, "jitter_fwhm_ps = {}", scenario.sspd.jitter_fwhm_ps);
    let _ = writeln!(w, "dead_time_ns = {}", div_preimage(scenario.sspd.dead_time_s, 1e9));
    for (name, det) in [("apd1", &scenario.apd1), ("apd2", &scenario.apd2)] {
        let _ = writeln!(w, "\n[{name}]");
        let _ = writeln!(w, "efficiency = {}", det.efficiency);
        let _ = writeln!(w, "dark_prob_per_gate = {}", det.dark_prob_per_gate);
        let _ = writeln!(w, "jitter_fwhm_ps = {}", det.jitter_fwhm_ps);
        let _ = writeln!(w, "dead_time_us = {}", div_preimage(det.dead_time_s, 1e6));
        let _ = writeln!(w, "gate_delay_ps = {}", det.gate_delay_ps);
        let _ = writeln!(w, "gate_window_ps = {}", det.gate_window_ps);
    }
    let _ = writeln!(w, "\n[tac]");
    let _ = writeln!(w, "window1_ps = {}", scenario.tac1_window_ps);
    let _ = writeln!(w, "window2_ps = {}", scenario.tac2_window_ps);
    let _ = writeln!(w, "idler_delay_ps = {}", scenario.idler_delay_ps);
    let _ = writeln!(w, "apd2_delay_ps = {}", scenario.apd2_delay_ps);
    let _ = writeln!(
        w,
        "apd2_gate_inherits_jitter = {}",
        scenario.apd2_gate_inherits_jitter
    );
    let _ = writeln!(w, "\n[modes]");
    let _ = writeln!(w, "n_spectral = {}", scenario.modes.n_spectral);
    let _ = writeln!(w, "n_temporal = {}", scenario.modes.n_temporal);
    let _ = writeln!(w, "noise_brightness_ratio = {}", noise_ratio);
    let _ = writeln!(w, "\n[run]");
    let _ = writeln!(w, "duration = {}s", scenario.duration_s);
    let _ = writeln!(w, "seed = {}", scenario.seed);
    let _ = writeln!(w, "block_size_pulses = {}", scenario.block_size_pulses);
    s
}

/// Parse a duration literal with an ns/us/ms/s suffix; a bare number reads
/// as seconds. Conversions divide by exact powers of ten so that round
/// decimal literals land on round binary values.
pub fn parse_duration(text: &str) -> Result<f64, String> {
    let t = text.trim();
    let (num, per_second) = if let Some(v) = t.strip_suffix("ns") {
        (v, 1e9)
    } else if let Some(v) = t.strip_suffix("us") {
        (v, 1e6)
    } else if let Some(v) = t.strip_suffix("ms") {
        (v, 1e3)
    } else if let Some(v) = t.strip_suffix('s') {
        (v, 1.0)
    } else {
        (t, 1.0)
    };
    let value: f64 = num
        .trim()
        .parse()
        .map_err(|_| format!("'{text}' is not a duration (expected e.g. 10ms, 2s)"))?;
    if !(value.is_finite() && value > 0.0) {
        return Err(format!("duration must be positive, got '{text}'"));
    }
    Ok(value / per_second)
}

/// Serializer-side inverse of a parse-side division: the value `u` with
/// `u / per == target`, nudged by ulps when the naive product misses.
fn div_preimage(target: f64, per: f64) -> f64 {
    let mut u = target * per;
    for _ in 0..8 {
        let back = u / per;
        if back == target {
            return u;
        }
        u = if back < target { u.next_up() } else { u.next_down() };
    }
    target * per
}

/// Serializer-side inverse of a parse-side multiplication: the value `g`
/// with `g * mul == target`.
fn mul_preimage(target: f64, mul: f64) -> f64 {
    let mut g = target / mul;
    for _ in 0..8 {
        let back = g * mul;
        if back == target {
            return g;
        }
        g = if back < target { g.next_up() } else { g.next_down() };
    }
    target / mul
}
