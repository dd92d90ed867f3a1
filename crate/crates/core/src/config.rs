//! Experiment description files.
//!
//! Line-oriented `[section]` / `key = value` text with `#` comments. Units
//! are part of the key names. Parsing is strict: unknown sections or keys are
//! errors, omitted optional keys take defaults, and [`serialize`] writes the
//! fully defaulted canonical form.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::detection::{AnalyzerSetting, DetectorConfig, ExperimentKind};
use crate::polarization::PolUnitary;
use crate::sagnac::{compensation_offsets, LoopConfig};
use crate::source::{check_energy_conservation, ChannelPlan, PlanKind, PumpConfig, SourceParams, PUMP_BAND_NM};

pub const FORMAT_VERSION: u64 = 1;

pub const SECTIONS: [&str; 7] = ["pump", "channels", "source", "loop", "detectors", "experiment", "sweep"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCode {
    Syntax,
    UnknownSection,
    UnknownKey,
    DuplicateSection,
    DuplicateKey,
    MissingSection,
    MissingKey,
    InvalidValue,
    OutOfRange,
    Inconsistent,
    UnsupportedVersion,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 11] = [
        ErrorCode::Syntax,
        ErrorCode::UnknownSection,
        ErrorCode::UnknownKey,
        ErrorCode::DuplicateSection,
        ErrorCode::DuplicateKey,
        ErrorCode::MissingSection,
        ErrorCode::MissingKey,
        ErrorCode::InvalidValue,
        ErrorCode::OutOfRange,
        ErrorCode::Inconsistent,
        ErrorCode::UnsupportedVersion,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::Syntax => "SYNTAX",
            ErrorCode::UnknownSection => "UNKNOWN_SECTION",
            ErrorCode::UnknownKey => "UNKNOWN_KEY",
            ErrorCode::DuplicateSection => "DUPLICATE_SECTION",
            ErrorCode::DuplicateKey => "DUPLICATE_KEY",
            ErrorCode::MissingSection => "MISSING_SECTION",
            ErrorCode::MissingKey => "MISSING_KEY",
            ErrorCode::InvalidValue => "INVALID_VALUE",
            ErrorCode::OutOfRange => "OUT_OF_RANGE",
            ErrorCode::Inconsistent => "INCONSISTENT",
            ErrorCode::UnsupportedVersion => "UNSUPPORTED_VERSION",
        }
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// 1-based position in the source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Location {
    pub line: usize,
    pub column: usize,
}

impl Location {
    const START: Location = Location { line: 1, column: 1 };
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize)]
#[error("{}:{}: {code}: {message}", location.line, location.column)]
pub struct ConfigError {
    pub code: ErrorCode,
    pub location: Location,
    pub message: String,
}

fn err<T>(code: ErrorCode, location: Location, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError { code, location, message: message.into() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum WarningCode {
    AngleNormalized,
    PhaseMatchSuboptimal,
    EnergyMismatch,
}

impl WarningCode {
    pub fn as_str(self) -> &'static str {
        match self {
            WarningCode::AngleNormalized => "ANGLE_NORMALIZED",
            WarningCode::PhaseMatchSuboptimal => "PHASE_MATCH_SUBOPTIMAL",
            WarningCode::EnergyMismatch => "ENERGY_MISMATCH",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Warning {
    pub code: WarningCode,
    pub location: Location,
    pub message: String,
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: warning {}: {}", self.location.line, self.location.column, self.code.as_str(), self.message)
    }
}

/// Angle stored as whole micro-degrees in `[0, 360°)`, so that the six
/// decimal text form round-trips exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Angle(i64);

const MICRO_PER_TURN: i64 = 360_000_000;

impl Angle {
    /// Rounds to micro-degrees and reduces mod 360; the flag is set when the
    /// reduction changed the value.
    pub fn from_degrees(deg: f64) -> Option<(Angle, bool)> {
        if !deg.is_finite() || deg.abs() > 1e12 {
            return None;
        }
        let micro = (deg * 1e6).round() as i64;
        let reduced = micro.rem_euclid(MICRO_PER_TURN);
        Some((Angle(reduced), reduced != micro))
    }

    pub fn from_micro(micro: i64) -> Angle {
        Angle(micro.rem_euclid(MICRO_PER_TURN))
    }

    pub fn micro_degrees(self) -> i64 {
        self.0
    }

    pub fn degrees(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn radians(self) -> f64 {
        self.degrees().to_radians()
    }
}

impl fmt::Display for Angle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}", self.0 / 1_000_000, self.0 % 1_000_000)
    }
}

/// Loop settings as written in the file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoopSettings {
    pub hwp1: Angle,
    pub qwp1: Angle,
    pub loop_phase: Angle,
    /// Add the HWP1 angle to both analyzers.
    pub compensation: bool,
    /// Residual error per photon as a retarder: fast-axis angle and retardance.
    pub residual_idler: (Angle, Angle),
    pub residual_signal: (Angle, Angle),
}

impl Default for LoopSettings {
    fn default() -> Self {
        Self {
            hwp1: Angle(22_500_000),
            qwp1: Angle(0),
            loop_phase: Angle(0),
            compensation: false,
            residual_idler: (Angle(0), Angle(0)),
            residual_signal: (Angle(0), Angle(0)),
        }
    }
}

fn residual_unitary((axis, retardance): (Angle, Angle)) -> PolUnitary {
    if retardance.0 == 0 {
        return PolUnitary::identity();
    }
    let r = PolUnitary::rotation(axis.radians());
    r.then_after(&PolUnitary::retarder(retardance.radians())).then_after(&r.adjoint())
}

impl LoopSettings {
    pub fn loop_config(&self) -> LoopConfig {
        LoopConfig {
            hwp1_angle: self.hwp1.radians(),
            qwp1_angle: self.qwp1.radians(),
            loop_phase: self.loop_phase.radians(),
            residual_idler: residual_unitary(self.residual_idler),
            residual_signal: residual_unitary(self.residual_signal),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    Theta2,
    Power,
}

/// Linear scan of θ₂ (degrees) or pump power (µW), endpoints included.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sweep {
    pub variable: SweepVariable,
    pub start: f64,
    pub stop: f64,
    pub steps: u64,
}

impl Sweep {
    pub fn points(&self) -> Vec<f64> {
        let n = self.steps.max(2);
        (0..n)
            .map(|k| {
                if k == n - 1 {
                    self.stop
                } else {
                    self.start + (self.stop - self.start) * k as f64 / (n - 1) as f64
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub format_version: u64,
    pub pump: PumpConfig,
    /// Second pump of a degenerate plan; equal to the first when absent.
    pub pump2_power_uw: Option<f64>,
    pub channels: ChannelPlan,
    pub source: SourceParams,
    pub noise_polarization: Angle,
    pub loop_settings: LoopSettings,
    pub detectors: DetectorConfig,
    pub kind: ExperimentKind,
    pub theta1: Angle,
    pub theta2: Angle,
    pub sweep: Option<Sweep>,
    pub gates: u64,
    pub seed: u64,
}

/// Per-kind default values.
pub mod defaults {
    pub const CENTER_NM: f64 = 1555.9;
    pub const PULSE_PS: f64 = 5.0;
    pub const REP_RATE_MHZ: f64 = 50.3;
    pub const SIGNAL_NM: f64 = 1550.95;
    pub const IDLER_NM: f64 = 1561.0;
    pub const FWHM_NM: f64 = 1.0;
    pub const DEGENERATE_PUMPS_NM: (f64, f64) = (1550.95, 1560.01);
    pub const DEGENERATE_FWHM_NM: f64 = 0.8;
    /// 0.08 pairs per pulse at 96 µW.
    pub const KAPPA: f64 = 0.08 / (96.0 * 96.0);
    /// 0.12 pairs per pulse at 288 µW per pump.
    pub const DEGENERATE_KAPPA: f64 = 0.12 / (288.0 * 288.0);
    pub const RAMAN_PER_UW: f64 = 1e-5;
    pub const DEGENERATE_RAMAN_PER_UW: f64 = 1e-6;
    pub const ASE_FLOOR: f64 = 0.0;
    pub const DEGENERATE_ASE_FLOOR: f64 = 3e-4;
    pub const ETA_SIGNAL: f64 = 0.007;
    pub const ETA_IDLER: f64 = 0.008;
    pub const DARK_PROB: f64 = 5e-6;
    pub const GATE_RATE_KHZ: f64 = 780.0;
    pub const GATES: u64 = 10_000_000;
    pub const SEED: u64 = 1;
}

impl ExperimentPlan {
    /// Fully defaulted plan of the given kind at `avg_power_uw` per pump.
    pub fn defaults(kind: PlanKind, avg_power_uw: f64) -> Self {
        use defaults::*;
        let degenerate = kind == PlanKind::Degenerate;
        let channels = if degenerate {
            ChannelPlan {
                kind,
                pump_wavelengths_nm: vec![DEGENERATE_PUMPS_NM.0, DEGENERATE_PUMPS_NM.1],
                signal_wavelength_nm: CENTER_NM,
                idler_wavelength_nm: CENTER_NM,
                signal_fwhm_nm: DEGENERATE_FWHM_NM,
                idler_fwhm_nm: DEGENERATE_FWHM_NM,
            }
        } else {
            ChannelPlan {
                kind,
                pump_wavelengths_nm: vec![CENTER_NM],
                signal_wavelength_nm: SIGNAL_NM,
                idler_wavelength_nm: IDLER_NM,
                signal_fwhm_nm: FWHM_NM,
                idler_fwhm_nm: FWHM_NM,
            }
        };
        Self {
            format_version: FORMAT_VERSION,
            pump: PumpConfig {
                center_wavelength_nm: CENTER_NM,
                pulse_duration_ps: PULSE_PS,
                rep_rate_mhz: REP_RATE_MHZ,
                avg_power_uw,
            },
            pump2_power_uw: None,
            channels,
            source: SourceParams {
                kappa: if degenerate { DEGENERATE_KAPPA } else { KAPPA },
                raman_coeff: if degenerate { DEGENERATE_RAMAN_PER_UW } else { RAMAN_PER_UW },
                ase_floor: if degenerate { DEGENERATE_ASE_FLOOR } else { ASE_FLOOR },
                noise_polarized_fraction: 0.0,
            },
            noise_polarization: Angle(0),
            loop_settings: LoopSettings::default(),
            detectors: DetectorConfig {
                eta_signal: ETA_SIGNAL,
                eta_idler: ETA_IDLER,
                dark_prob: DARK_PROB,
                gate_rate_khz: GATE_RATE_KHZ,
            },
            kind: if degenerate { ExperimentKind::DegeneratePostselected } else { ExperimentKind::SignalIdler },
            theta1: Angle(0),
            theta2: Angle(0),
            sweep: None,
            gates: GATES,
            seed: SEED,
        }
    }

    /// Pump powers `(P₁, P₂)`; a non-degenerate plan has a single pump.
    pub fn pump_powers(&self) -> (f64, f64) {
        (self.pump.avg_power_uw, self.pump2_power_uw.unwrap_or(self.pump.avg_power_uw))
    }

    pub fn loop_config(&self) -> LoopConfig {
        self.loop_settings.loop_config()
    }

    pub fn analyzers(&self) -> AnalyzerSetting {
        let offset = if self.loop_settings.compensation {
            compensation_offsets(self.loop_settings.hwp1.radians())
        } else {
            0.0
        };
        AnalyzerSetting { theta1: self.theta1.radians(), theta2: self.theta2.radians(), compensation_offset: offset }
    }

    /// Checks every invariant that [`parse`] enforces after defaults are filled in.
    pub fn validate(&self) -> Result<(), ConfigError> {
        check_semantics(self, &BTreeMap::new()).map(|_| ())
    }
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self::defaults(PlanKind::NonDegenerate, 96.0)
    }
}

/// A parsed plan with the warnings raised while reading it.
#[derive(Debug, Clone, PartialEq)]
pub struct Parsed {
    pub plan: ExperimentPlan,
    pub warnings: Vec<Warning>,
}

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Number(String),
    Str(String),
    Ident(String),
}

#[derive(Debug, Clone)]
struct Entry {
    key_at: Location,
    value_at: Location,
    value: Value,
}

#[derive(Debug, Clone)]
struct Section {
    header: Location,
    entries: BTreeMap<String, Entry>,
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// Splits the text into sections, rejecting malformed lines, unknown or
/// repeated sections and repeated keys.
fn read_sections(text: &str) -> Result<BTreeMap<String, Section>, ConfigError> {
    let mut sections: BTreeMap<String, Section> = BTreeMap::new();
    let mut current: Option<String> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let chars: Vec<char> = raw.chars().collect();
        let at = |i: usize| Location { line, column: i + 1 };
        let mut i = 0;
        let skip_ws = |i: &mut usize| {
            while *i < chars.len() && (chars[*i] == ' ' || chars[*i] == '\t') {
                *i += 1;
            }
        };
        let read_ident = |i: &mut usize| -> String {
            let start = *i;
            while *i < chars.len() && is_ident_char(chars[*i]) {
                *i += 1;
            }
            chars[start..*i].iter().collect()
        };
        // Only whitespace or a comment may follow a complete line.
        let expect_end = |i: usize| -> Result<(), ConfigError> {
            let mut j = i;
            while j < chars.len() && (chars[j] == ' ' || chars[j] == '\t') {
                j += 1;
            }
            if j < chars.len() && chars[j] != '#' {
                return err(ErrorCode::Syntax, at(j), format!("unexpected '{}'", chars[j]));
            }
            Ok(())
        };

        skip_ws(&mut i);
        if i == chars.len() || chars[i] == '#' {
            continue;
        }
        if chars[i] == '[' {
            let open = i;
            i += 1;
            if i >= chars.len() || !is_ident_start(chars[i]) {
                return err(ErrorCode::Syntax, at(i), "expected section name after '['");
            }
            let name_at = at(i);
            let name = read_ident(&mut i);
            if i >= chars.len() || chars[i] != ']' {
                return err(ErrorCode::Syntax, at(i), "expected ']'");
            }
            expect_end(i + 1)?;
            if !SECTIONS.contains(&name.as_str()) {
                return err(ErrorCode::UnknownSection, name_at, format!("unknown section [{name}]"));
            }
            if sections.contains_key(&name) {
                return err(ErrorCode::DuplicateSection, at(open), format!("section [{name}] appears twice"));
            }
            sections.insert(name.clone(), Section { header: at(open), entries: BTreeMap::new() });
            current = Some(name);
            continue;
        }

        if !is_ident_start(chars[i]) {
            return err(ErrorCode::Syntax, at(i), format!("expected a key, found '{}'", chars[i]));
        }
        let key_at = at(i);
        let key = read_ident(&mut i);
        skip_ws(&mut i);
        if i >= chars.len() || chars[i] != '=' {
            return err(ErrorCode::Syntax, at(i), "expected '=' after key");
        }
        i += 1;
        skip_ws(&mut i);
        if i >= chars.len() || chars[i] == '#' {
            return err(ErrorCode::Syntax, at(i), "missing value");
        }
        let value_at = at(i);
        let value = if chars[i] == '"' {
            let start = i + 1;
            let Some(len) = chars[start..].iter().position(|&c| c == '"') else {
                return err(ErrorCode::Syntax, at(i), "unterminated string");
            };
            i = start + len + 1;
            Value::Str(chars[start..start + len].iter().collect())
        } else if is_ident_start(chars[i]) {
            Value::Ident(read_ident(&mut i))
        } else if chars[i].is_ascii_digit() || matches!(chars[i], '+' | '-' | '.') {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || matches!(chars[i], '+' | '-' | '.')) {
                i += 1;
            }
            Value::Number(chars[start..i].iter().collect())
        } else {
            return err(ErrorCode::Syntax, at(i), format!("unexpected '{}' in value", chars[i]));
        };
        expect_end(i)?;

        let Some(name) = &current else {
            return err(ErrorCode::Syntax, key_at, format!("key '{key}' outside any section"));
        };
        let section = sections.get_mut(name).expect("current section exists");
        if section.entries.contains_key(&key) {
            return err(ErrorCode::DuplicateKey, key_at, format!("key '{key}' repeated in [{name}]"));
        }
        section.entries.insert(key, Entry { key_at, value_at, value });
    }
    Ok(sections)
}

/// Typed access to one section; records which keys were consumed.
struct Reader<'a> {
    name: &'static str,
    section: Option<&'a Section>,
    warnings: &'a mut Vec<Warning>,
}

impl Reader<'_> {
    fn entry(&self, key: &str) -> Option<&Entry> {
        self.section.and_then(|s| s.entries.get(key))
    }

    fn header(&self) -> Location {
        self.section.map_or(Location::START, |s| s.header)
    }

    fn has(&self, key: &str) -> bool {
        self.entry(key).is_some()
    }

    fn location(&self, key: &str) -> Location {
        self.entry(key).map_or(self.header(), |e| e.key_at)
    }

    fn reject_unknown(&self, allowed: &[&str]) -> Result<(), ConfigError> {
        if let Some(s) = self.section {
            // Report the first unknown key in file order.
            let mut unknown: Vec<(&String, &Entry)> =
                s.entries.iter().filter(|(k, _)| !allowed.contains(&k.as_str())).collect();
            unknown.sort_by_key(|(_, e)| (e.key_at.line, e.key_at.column));
            if let Some((k, e)) = unknown.first() {
                return err(ErrorCode::UnknownKey, e.key_at, format!("unknown key '{k}' in [{}]", self.name));
            }
        }
        Ok(())
    }

    fn f64_opt(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        let Some(e) = self.entry(key) else { return Ok(None) };
        match &e.value {
            Value::Number(s) => match s.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(Some(v)),
                _ => err(ErrorCode::InvalidValue, e.value_at, format!("'{s}' is not a finite number")),
            },
            other => err(ErrorCode::InvalidValue, e.value_at, format!("{key} expects a number, got {other:?}")),
        }
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64, ConfigError> {
        Ok(self.f64_opt(key)?.unwrap_or(default))
    }

    fn u64_or(&self, key: &str, default: u64) -> Result<u64, ConfigError> {
        let Some(e) = self.entry(key) else { return Ok(default) };
        let bad = || err(ErrorCode::InvalidValue, e.value_at, format!("{key} expects a non-negative integer"));
        match &e.value {
            Value::Number(s) => {
                if let Ok(v) = s.parse::<u64>() {
                    return Ok(v);
                }
                // Scientific notation for exact integers up to 2^53.
                match s.parse::<f64>() {
                    Ok(v) if v.is_finite() && v.fract() == 0.0 && (0.0..=9_007_199_254_740_992.0).contains(&v) => {
                        Ok(v as u64)
                    }
                    Ok(v) if v.is_finite() && v < 0.0 => {
                        err(ErrorCode::OutOfRange, e.value_at, format!("{key} must be >= 0"))
                    }
                    _ => bad(),
                }
            }
            _ => bad(),
        }
    }

    fn ident_opt(&self, key: &str) -> Result<Option<(&str, Location)>, ConfigError> {
        let Some(e) = self.entry(key) else { return Ok(None) };
        match &e.value {
            Value::Ident(s) | Value::Str(s) => Ok(Some((s.as_str(), e.value_at))),
            Value::Number(s) => err(ErrorCode::InvalidValue, e.value_at, format!("{key} expects a name, got '{s}'")),
        }
    }

    fn bool_or(&self, key: &str, default: bool) -> Result<bool, ConfigError> {
        match self.ident_opt(key)? {
            None => Ok(default),
            Some(("true", _)) => Ok(true),
            Some(("false", _)) => Ok(false),
            Some((s, at)) => err(ErrorCode::InvalidValue, at, format!("{key} expects true or false, got '{s}'")),
        }
    }

    fn angle_or(&mut self, key: &str, default: Angle) -> Result<Angle, ConfigError> {
        let Some(deg) = self.f64_opt(key)? else { return Ok(default) };
        let e = self.entry(key).expect("present");
        let (at, value_at) = (e.key_at, e.value_at);
        let Some((angle, changed)) = Angle::from_degrees(deg) else {
            return err(ErrorCode::OutOfRange, value_at, format!("{key} = {deg} is too large"));
        };
        if changed {
            self.warnings.push(Warning {
                code: WarningCode::AngleNormalized,
                location: at,
                message: format!("{key} = {deg} reduced to {angle}"),
            });
        }
        Ok(angle)
    }

    fn positive(&self, key: &str, v: f64) -> Result<f64, ConfigError> {
        if v > 0.0 {
            Ok(v)
        } else {
            err(ErrorCode::OutOfRange, self.value_location(key), format!("{key} must be > 0, got {v}"))
        }
    }

    fn non_negative(&self, key: &str, v: f64) -> Result<f64, ConfigError> {
        if v >= 0.0 {
            Ok(v)
        } else {
            err(ErrorCode::OutOfRange, self.value_location(key), format!("{key} must be >= 0, got {v}"))
        }
    }

    fn probability(&self, key: &str, v: f64) -> Result<f64, ConfigError> {
        if (0.0..=1.0).contains(&v) {
            Ok(v)
        } else {
            err(ErrorCode::OutOfRange, self.value_location(key), format!("{key} must be in [0, 1], got {v}"))
        }
    }

    fn in_pump_band(&self, key: &str, v: f64) -> Result<f64, ConfigError> {
        let (lo, hi) = PUMP_BAND_NM;
        if (lo..=hi).contains(&v) {
            Ok(v)
        } else {
            err(ErrorCode::OutOfRange, self.value_location(key), format!("{key} = {v} outside [{lo}, {hi}] nm"))
        }
    }

    fn value_location(&self, key: &str) -> Location {
        self.entry(key).map_or(self.header(), |e| e.value_at)
    }
}

const PUMP_KEYS: [&str; 5] = ["avg_power_uw", "center_nm", "pulse_ps", "rep_rate_mhz", "pump2_power_uw"];
const CHANNEL_KEYS: [&str; 7] =
    ["kind", "signal_nm", "idler_nm", "signal_fwhm_nm", "idler_fwhm_nm", "pump1_nm", "pump2_nm"];
const SOURCE_KEYS: [&str; 5] =
    ["kappa_per_uw2", "raman_per_uw", "ase_floor", "noise_polarized_fraction", "noise_polarization_deg"];
const LOOP_KEYS: [&str; 8] = [
    "hwp1_deg",
    "qwp1_deg",
    "loop_phase_deg",
    "compensation",
    "residual_idler_axis_deg",
    "residual_idler_retardance_deg",
    "residual_signal_axis_deg",
    "residual_signal_retardance_deg",
];
const DETECTOR_KEYS: [&str; 4] = ["eta_signal", "eta_idler", "dark_prob", "gate_rate_khz"];
const EXPERIMENT_KEYS: [&str; 6] = ["kind", "theta1_deg", "theta2_deg", "gates", "seed", "format_version"];
const SWEEP_KEYS: [&str; 4] = ["variable", "start", "stop", "steps"];

fn kind_name(kind: ExperimentKind) -> &'static str {
    match kind {
        ExperimentKind::SignalIdler => "signal_idler",
        ExperimentKind::SignalSplit => "signal_split",
        ExperimentKind::IdlerSplit => "idler_split",
        ExperimentKind::DegeneratePostselected => "degenerate_postselected",
    }
}

fn plan_kind_name(kind: PlanKind) -> &'static str {
    match kind {
        PlanKind::NonDegenerate => "nondegenerate",
        PlanKind::Degenerate => "degenerate",
    }
}

/// Parses and validates an experiment description.
pub fn parse(text: &str) -> Result<Parsed, ConfigError> {
    let sections = read_sections(text)?;
    let Some(pump_sec) = sections.get("pump") else {
        return err(ErrorCode::MissingSection, Location::START, "required section [pump] is missing");
    };
    let mut warnings = Vec::new();
    let mut locs: BTreeMap<&'static str, Location> = BTreeMap::new();

    macro_rules! reader {
        ($name:literal, $keys:expr) => {{
            let r = Reader { name: $name, section: sections.get($name), warnings: &mut warnings };
            r.reject_unknown(&$keys)?;
            r
        }};
    }

    // [experiment] first: the format version gates everything else.
    let version = {
        let r = reader!("experiment", EXPERIMENT_KEYS);
        let v = r.u64_or("format_version", FORMAT_VERSION)?;
        if v != FORMAT_VERSION {
            return err(
                ErrorCode::UnsupportedVersion,
                r.value_location("format_version"),
                format!("format_version {v} is not supported (expected {FORMAT_VERSION})"),
            );
        }
        v
    };

    let plan_kind = {
        let r = reader!("channels", CHANNEL_KEYS);
        match r.ident_opt("kind")? {
            None | Some(("nondegenerate", _)) => PlanKind::NonDegenerate,
            Some(("degenerate", _)) => PlanKind::Degenerate,
            Some((s, at)) => {
                return err(ErrorCode::InvalidValue, at, format!("channel kind must be nondegenerate or degenerate, got '{s}'"))
            }
        }
    };

    let pump_header = pump_sec.header;
    let r = reader!("pump", PUMP_KEYS);
    let Some(power) = r.f64_opt("avg_power_uw")? else {
        return err(ErrorCode::MissingKey, pump_header, "[pump] requires avg_power_uw");
    };
    let mut plan = ExperimentPlan::defaults(plan_kind, r.positive("avg_power_uw", power)?);
    plan.format_version = version;
    let d = plan.clone();
    plan.pump.center_wavelength_nm = r.in_pump_band("center_nm", r.f64_or("center_nm", d.pump.center_wavelength_nm)?)?;
    plan.pump.pulse_duration_ps = r.positive("pulse_ps", r.f64_or("pulse_ps", d.pump.pulse_duration_ps)?)?;
    plan.pump.rep_rate_mhz = r.positive("rep_rate_mhz", r.f64_or("rep_rate_mhz", d.pump.rep_rate_mhz)?)?;
    if let Some(p2) = r.f64_opt("pump2_power_uw")? {
        plan.pump2_power_uw = Some(r.positive("pump2_power_uw", p2)?);
        locs.insert("pump2_power_uw", r.location("pump2_power_uw"));
    }

    let r = reader!("channels", CHANNEL_KEYS);
    locs.insert("channels", r.header());
    let ch = &mut plan.channels;
    ch.signal_wavelength_nm = r.positive("signal_nm", r.f64_or("signal_nm", ch.signal_wavelength_nm)?)?;
    ch.idler_wavelength_nm = r.positive("idler_nm", r.f64_or("idler_nm", ch.idler_wavelength_nm)?)?;
    ch.signal_fwhm_nm = r.positive("signal_fwhm_nm", r.f64_or("signal_fwhm_nm", ch.signal_fwhm_nm)?)?;
    ch.idler_fwhm_nm = r.positive("idler_fwhm_nm", r.f64_or("idler_fwhm_nm", ch.idler_fwhm_nm)?)?;
    match plan_kind {
        PlanKind::Degenerate => {
            let p1 = r.in_pump_band("pump1_nm", r.f64_or("pump1_nm", ch.pump_wavelengths_nm[0])?)?;
            let p2 = r.in_pump_band("pump2_nm", r.f64_or("pump2_nm", ch.pump_wavelengths_nm[1])?)?;
            ch.pump_wavelengths_nm = vec![p1, p2];
        }
        PlanKind::NonDegenerate => {
            for key in ["pump1_nm", "pump2_nm"] {
                if r.has(key) {
                    return err(ErrorCode::Inconsistent, r.location(key), format!("{key} needs kind = degenerate"));
                }
            }
            ch.pump_wavelengths_nm = vec![plan.pump.center_wavelength_nm];
        }
    }

    let mut r = reader!("source", SOURCE_KEYS);
    let s = &mut plan.source;
    s.kappa = r.non_negative("kappa_per_uw2", r.f64_or("kappa_per_uw2", s.kappa)?)?;
    s.raman_coeff = r.non_negative("raman_per_uw", r.f64_or("raman_per_uw", s.raman_coeff)?)?;
    s.ase_floor = r.non_negative("ase_floor", r.f64_or("ase_floor", s.ase_floor)?)?;
    s.noise_polarized_fraction =
        r.probability("noise_polarized_fraction", r.f64_or("noise_polarized_fraction", s.noise_polarized_fraction)?)?;
    plan.noise_polarization = r.angle_or("noise_polarization_deg", d.noise_polarization)?;

    let mut r = reader!("loop", LOOP_KEYS);
    let l = &mut plan.loop_settings;
    l.hwp1 = r.angle_or("hwp1_deg", l.hwp1)?;
    l.qwp1 = r.angle_or("qwp1_deg", l.qwp1)?;
    l.loop_phase = r.angle_or("loop_phase_deg", l.loop_phase)?;
    l.compensation = r.bool_or("compensation", l.compensation)?;
    l.residual_idler = (
        r.angle_or("residual_idler_axis_deg", l.residual_idler.0)?,
        r.angle_or("residual_idler_retardance_deg", l.residual_idler.1)?,
    );
    l.residual_signal = (
        r.angle_or("residual_signal_axis_deg", l.residual_signal.0)?,
        r.angle_or("residual_signal_retardance_deg", l.residual_signal.1)?,
    );

    let r = reader!("detectors", DETECTOR_KEYS);
    let det = &mut plan.detectors;
    det.eta_signal = r.probability("eta_signal", r.f64_or("eta_signal", det.eta_signal)?)?;
    det.eta_idler = r.probability("eta_idler", r.f64_or("eta_idler", det.eta_idler)?)?;
    det.dark_prob = r.probability("dark_prob", r.f64_or("dark_prob", det.dark_prob)?)?;
    det.gate_rate_khz = r.positive("gate_rate_khz", r.f64_or("gate_rate_khz", det.gate_rate_khz)?)?;

    let mut r = reader!("experiment", EXPERIMENT_KEYS);
    if let Some((name, at)) = r.ident_opt("kind")? {
        plan.kind = match name {
            "signal_idler" => ExperimentKind::SignalIdler,
            "signal_split" => ExperimentKind::SignalSplit,
            "idler_split" => ExperimentKind::IdlerSplit,
            "degenerate_postselected" => ExperimentKind::DegeneratePostselected,
            other => return err(ErrorCode::InvalidValue, at, format!("unknown experiment kind '{other}'")),
        };
        locs.insert("kind", r.location("kind"));
    }
    plan.theta1 = r.angle_or("theta1_deg", d.theta1)?;
    plan.theta2 = r.angle_or("theta2_deg", d.theta2)?;
    plan.gates = r.u64_or("gates", d.gates)?;
    if plan.gates == 0 {
        return err(ErrorCode::OutOfRange, r.value_location("gates"), "gates must be >= 1");
    }
    plan.seed = r.u64_or("seed", d.seed)?;

    let r = reader!("sweep", SWEEP_KEYS);
    if let Some(sec) = r.section {
        let variable = match r.ident_opt("variable")? {
            Some(("theta2", _)) => SweepVariable::Theta2,
            Some(("power", _)) => SweepVariable::Power,
            Some((s, at)) => return err(ErrorCode::InvalidValue, at, format!("sweep variable must be theta2 or power, got '{s}'")),
            None => return err(ErrorCode::MissingKey, sec.header, "[sweep] requires variable"),
        };
        let get = |key: &str| -> Result<f64, ConfigError> {
            r.f64_opt(key)?.ok_or_else(|| ConfigError {
                code: ErrorCode::MissingKey,
                location: sec.header,
                message: format!("[sweep] requires {key}"),
            })
        };
        let (start, stop) = (get("start")?, get("stop")?);
        if !r.has("steps") {
            return err(ErrorCode::MissingKey, sec.header, "[sweep] requires steps");
        }
        let steps = r.u64_or("steps", 0)?;
        if steps < 2 {
            return err(ErrorCode::OutOfRange, r.value_location("steps"), "sweep steps must be >= 2");
        }
        if variable == SweepVariable::Power {
            r.positive("start", start)?;
        }
        locs.insert("sweep", sec.header);
        plan.sweep = Some(Sweep { variable, start, stop, steps });
    }

    warnings.extend(check_semantics(&plan, &locs)?);
    Ok(Parsed { plan, warnings })
}

/// Cross-field checks shared by [`parse`] and [`ExperimentPlan::validate`].
fn check_semantics(plan: &ExperimentPlan, locs: &BTreeMap<&'static str, Location>) -> Result<Vec<Warning>, ConfigError> {
    let loc = |k: &str| locs.get(k).copied().unwrap_or(Location::START);
    let mut warnings = Vec::new();
    let degenerate = plan.channels.kind == PlanKind::Degenerate;

    if plan.format_version != FORMAT_VERSION {
        return err(ErrorCode::UnsupportedVersion, loc("format_version"), "unsupported format_version");
    }
    if let Err(e) = plan.pump.validate() {
        return err(ErrorCode::OutOfRange, Location::START, e.to_string());
    }
    if let Err(e) = plan.channels.validate() {
        return err(ErrorCode::Inconsistent, loc("channels"), e.to_string());
    }
    if let Err(e) = plan.source.validate() {
        return err(ErrorCode::OutOfRange, Location::START, e.to_string());
    }
    if let Err(e) = plan.detectors.validate() {
        return err(ErrorCode::OutOfRange, Location::START, e.to_string());
    }
    if plan.gates == 0 {
        return err(ErrorCode::OutOfRange, Location::START, "gates must be >= 1");
    }
    if plan.channels.kind == PlanKind::NonDegenerate
        && plan.channels.pump_wavelengths_nm != [plan.pump.center_wavelength_nm]
    {
        return err(ErrorCode::Inconsistent, loc("channels"), "non-degenerate pump wavelength must equal center_nm");
    }
    match plan.pump2_power_uw {
        Some(_) if !degenerate => {
            return err(ErrorCode::Inconsistent, loc("pump2_power_uw"), "pump2_power_uw needs [channels] kind = degenerate");
        }
        Some(p2) if !(p2.is_finite() && p2 > 0.0) => {
            return err(ErrorCode::OutOfRange, loc("pump2_power_uw"), "pump2_power_uw must be > 0");
        }
        Some(p2) if p2 != plan.pump.avg_power_uw => warnings.push(Warning {
            code: WarningCode::PhaseMatchSuboptimal,
            location: loc("pump2_power_uw"),
            message: format!(
                "degenerate pumps at {} and {p2} µW; equal powers optimize phase matching",
                plan.pump.avg_power_uw
            ),
        }),
        _ => {}
    }
    if degenerate != (plan.kind == ExperimentKind::DegeneratePostselected) {
        return err(
            ErrorCode::Inconsistent,
            loc("kind"),
            format!(
                "experiment kind {} does not match channel kind {}",
                kind_name(plan.kind),
                plan_kind_name(plan.channels.kind)
            ),
        );
    }
    if let Some(sw) = &plan.sweep {
        if sw.steps < 2 {
            return err(ErrorCode::OutOfRange, loc("sweep"), "sweep steps must be >= 2");
        }
        if !(sw.start.is_finite() && sw.stop.is_finite() && sw.stop > sw.start) {
            return err(ErrorCode::Inconsistent, loc("sweep"), "sweep stop must exceed start");
        }
        if sw.variable == SweepVariable::Power && sw.start <= 0.0 {
            return err(ErrorCode::OutOfRange, loc("sweep"), "power sweep must start above 0 µW");
        }
    }
    let energy = check_energy_conservation(&plan.channels).map_err(|e| ConfigError {
        code: ErrorCode::Inconsistent,
        location: loc("channels"),
        message: e.to_string(),
    })?;
    if !energy.passed {
        warnings.push(Warning {
            code: WarningCode::EnergyMismatch,
            location: loc("channels"),
            message: format!(
                "fractional energy mismatch {:.3e} exceeds filter tolerance {:.3e}",
                energy.detuning, energy.tolerance
            ),
        });
    }
    Ok(warnings)
}

/// Canonical text: fixed section order, sorted keys, every key written.
pub fn serialize(plan: &ExperimentPlan) -> String {
    let mut out = String::new();
    let mut section = |name: &str, mut pairs: Vec<(&str, String)>| {
        pairs.sort_by(|a, b| a.0.cmp(b.0));
        if !out.is_empty() {
            out.push('\n');
        }
        out.push_str(&format!("[{name}]\n"));
        for (k, v) in pairs {
            out.push_str(&format!("{k} = {v}\n"));
        }
    };
    let num = |v: f64| format!("{v}");

    let mut pump = vec![
        ("avg_power_uw", num(plan.pump.avg_power_uw)),
        ("center_nm", num(plan.pump.center_wavelength_nm)),
        ("pulse_ps", num(plan.pump.pulse_duration_ps)),
        ("rep_rate_mhz", num(plan.pump.rep_rate_mhz)),
    ];
    if let Some(p2) = plan.pump2_power_uw {
        pump.push(("pump2_power_uw", num(p2)));
    }
    section("pump", pump);

    let ch = &plan.channels;
    let mut channels = vec![
        ("kind", plan_kind_name(ch.kind).to_string()),
        ("signal_nm", num(ch.signal_wavelength_nm)),
        ("idler_nm", num(ch.idler_wavelength_nm)),
        ("signal_fwhm_nm", num(ch.signal_fwhm_nm)),
        ("idler_fwhm_nm", num(ch.idler_fwhm_nm)),
    ];
    if ch.kind == PlanKind::Degenerate {
        channels.push(("pump1_nm", num(ch.pump_wavelengths_nm[0])));
        channels.push(("pump2_nm", num(ch.pump_wavelengths_nm[1])));
    }
    section("channels", channels);

    let s = &plan.source;
    section(
        "source",
        vec![
            ("kappa_per_uw2", num(s.kappa)),
            ("raman_per_uw", num(s.raman_coeff)),
            ("ase_floor", num(s.ase_floor)),
            ("noise_polarized_fraction", num(s.noise_polarized_fraction)),
            ("noise_polarization_deg", plan.noise_polarization.to_string()),
        ],
    );

    let l = &plan.loop_settings;
    section(
        "loop",
        vec![
            ("hwp1_deg", l.hwp1.to_string()),
            ("qwp1_deg", l.qwp1.to_string()),
            ("loop_phase_deg", l.loop_phase.to_string()),
            ("compensation", l.compensation.to_string()),
            ("residual_idler_axis_deg", l.residual_idler.0.to_string()),
            ("residual_idler_retardance_deg", l.residual_idler.1.to_string()),
            ("residual_signal_axis_deg", l.residual_signal.0.to_string()),
            ("residual_signal_retardance_deg", l.residual_signal.1.to_string()),
        ],
    );

    let det = &plan.detectors;
    section(
        "detectors",
        vec![
            ("eta_signal", num(det.eta_signal)),
            ("eta_idler", num(det.eta_idler)),
            ("dark_prob", num(det.dark_prob)),
            ("gate_rate_khz", num(det.gate_rate_khz)),
        ],
    );

    section(
        "experiment",
        vec![
            ("format_version", plan.format_version.to_string()),
            ("kind", kind_name(plan.kind).to_string()),
            ("theta1_deg", plan.theta1.to_string()),
            ("theta2_deg", plan.theta2.to_string()),
            ("gates", plan.gates.to_string()),
            ("seed", plan.seed.to_string()),
        ],
    );

    if let Some(sw) = &plan.sweep {
        let variable = match sw.variable {
            SweepVariable::Theta2 => "theta2",
            SweepVariable::Power => "power",
        };
        section(
            "sweep",
            vec![
                ("variable", variable.to_string()),
                ("start", num(sw.start)),
                ("stop", num(sw.stop)),
                ("steps", sw.steps.to_string()),
            ],
        );
    }
    out
}
