//! Run configuration: a TOML file with one table per concern, every field
//! defaulted, overridable from the command line with `section.key=value`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::floquet::SweepOptions;
use crate::model::{cesium_hbar_eff, DriveSchedule, InitialState, ModelError, SystemParams, REFERENCE_PERIOD_US};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{origin}: {message}")]
    Parse { origin: String, message: String },
    #[error("{origin}: `{key}` {message}")]
    Invalid { origin: String, key: String, message: String },
    #[error("override `{0}` is not of the form section.key=value")]
    BadOverride(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemSection {
    pub kick_strength: f64,
    /// Base period in microseconds; sets `kbar` unless `hbar_eff` is given.
    pub period_us: f64,
    pub hbar_eff: Option<f64>,
    pub quasimomentum: f64,
    pub half_width: usize,
    /// Kick duration as a fraction of the period; 0 = delta kicks.
    pub pulse_width: f64,
    pub pulse_substeps: usize,
}

impl Default for SystemSection {
    fn default() -> Self {
        Self {
            kick_strength: 10.0,
            period_us: REFERENCE_PERIOD_US,
            hbar_eff: None,
            quasimomentum: 0.0,
            half_width: 256,
            pulse_width: 0.0,
            pulse_substeps: 8,
        }
    }
}

impl SystemSection {
    pub fn resolved_hbar_eff(&self) -> f64 {
        self.hbar_eff.unwrap_or_else(|| cesium_hbar_eff(self.period_us))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriveSection {
    pub ratio: f64,
    pub lambda0: f64,
    pub periods: usize,
}

impl Default for DriveSection {
    fn default() -> Self {
        Self { ratio: 1.0, lambda0: 0.5, periods: 100 }
    }
}

/// Evenly spaced points from `min` to `max` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl GridSpec {
    pub fn points(&self) -> Vec<f64> {
        let n = self.count;
        (0..n).map(|i| self.min + (self.max - self.min) * i as f64 / (n - 1) as f64).collect()
    }
}

/// Union of the segments' points, sorted, with duplicates (to 1e-12) removed.
pub fn composite_grid(segments: &[GridSpec]) -> Vec<f64> {
    let mut all: Vec<f64> = segments.iter().flat_map(GridSpec::points).collect();
    all.sort_by(f64::total_cmp);
    all.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    all
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanSection {
    /// The ratio grid is the union of these segments.
    pub segments: Vec<GridSpec>,
    pub lambda0_ensemble: usize,
    /// Quasimomenta averaged with the phases; empty uses `system.quasimomentum`.
    pub quasimomenta: Vec<f64>,
    pub p0_window: usize,
    /// Half-width in `r - 1` of the cusp comparison; defaults to the FWHM.
    pub cusp_half_width: Option<f64>,
}

impl Default for ScanSection {
    fn default() -> Self {
        Self {
            segments: vec![
                GridSpec { min: 0.98, max: 1.02, count: 41 },
                GridSpec { min: 0.999, max: 1.001, count: 101 },
            ],
            lambda0_ensemble: 16,
            quasimomenta: Vec::new(),
            p0_window: 2,
            cusp_half_width: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LevelsSection {
    pub lambda: GridSpec,
    pub half_width: usize,
    pub thin_weight: f64,
    pub thick_weight: f64,
    pub min_overlap: f64,
    pub step_floor: f64,
    pub refine_weight: f64,
    /// Crossings with a grid gap below this are re-measured locally.
    pub refine_gap: f64,
    /// Only crossings whose heavier state carries at least this weight are
    /// kept; 0 keeps all of them, which can be tens of thousands at K = 10.
    pub crossing_weight: f64,
}

impl Default for LevelsSection {
    fn default() -> Self {
        let s = SweepOptions::default();
        Self {
            lambda: GridSpec { min: 0.0, max: 1.0, count: 201 },
            half_width: 64,
            thin_weight: s.thin_weight,
            thick_weight: s.thick_weight,
            min_overlap: s.min_overlap,
            step_floor: s.step_floor,
            refine_weight: s.refine_weight,
            refine_gap: 0.1,
            crossing_weight: s.thick_weight,
        }
    }
}

impl LevelsSection {
    pub fn sweep_options(&self) -> SweepOptions {
        SweepOptions {
            thin_weight: self.thin_weight,
            thick_weight: self.thick_weight,
            min_overlap: self.min_overlap,
            step_floor: self.step_floor,
            refine_weight: self.refine_weight,
            ..SweepOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassicalSection {
    pub ensemble_size: usize,
    /// Momentum band counted as the zero-momentum class, in units of `p`;
    /// defaults to the lattice sites within `scan.p0_window`.
    pub p0_band: Option<f64>,
}

impl Default for ClassicalSection {
    fn default() -> Self {
        Self { ensemble_size: crate::classical::DEFAULT_ENSEMBLE, p0_band: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub output: PathBuf,
    pub seed: u64,
    /// Worker threads; 0 uses the `SUBFOURIER_WORKERS` variable or all cores.
    pub workers: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { output: PathBuf::from("out"), seed: 1, workers: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub system: SystemSection,
    pub drive: DriveSection,
    pub initial: InitialState,
    pub scan: ScanSection,
    pub levels: LevelsSection,
    pub classical: ClassicalSection,
    pub run: RunSection,
}

impl RunConfig {
    /// Reads `path` (or the defaults when `None`) and applies `overrides`.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let (origin, text) = match path {
            Some(p) => (
                p.display().to_string(),
                std::fs::read_to_string(p).map_err(|source| ConfigError::Io { path: p.to_path_buf(), source })?,
            ),
            None => ("<defaults>".to_string(), String::new()),
        };
        Self::from_str_with(&origin, &text, overrides)
    }

    pub fn from_str_with(origin: &str, text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let config: RunConfig = if overrides.is_empty() {
            toml::from_str(text).map_err(|e| parse_error(origin, text, &e))?
        } else {
            let mut table: toml::Table = toml::from_str(text).map_err(|e| parse_error(origin, text, &e))?;
            for o in overrides {
                apply_override(&mut table, o)?;
            }
            table.try_into().map_err(|e: toml::de::Error| ConfigError::Parse {
                origin: format!("{origin} with --set overrides"),
                message: e.message().to_string(),
            })?
        };
        config.validate().map_err(|(key, message)| {
            let overridden = overrides.iter().any(|o| o.split_once('=').is_some_and(|(k, _)| k.trim() == key));
            let origin = if overridden {
                "--set".to_string()
            } else {
                match locate(text, &key) {
                    Some(line) => format!("{origin}:{line}"),
                    None => origin.to_string(),
                }
            };
            ConfigError::Invalid { origin, key, message }
        })?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn system_params(&self) -> Result<SystemParams, ModelError> {
        let s = &self.system;
        SystemParams::new(s.kick_strength, s.resolved_hbar_eff(), s.quasimomentum, s.half_width)?
            .with_pulse(s.pulse_width, s.pulse_substeps)
    }

    pub fn schedule(&self) -> Result<DriveSchedule, ModelError> {
        DriveSchedule::new(self.drive.ratio, self.drive.lambda0, self.drive.periods)
    }

    /// Checks every field, returning the dotted key and the complaint.
    pub fn validate(&self) -> Result<(), (String, String)> {
        let bad = |key: &str, msg: String| Err((key.to_string(), msg));
        if let Err(ModelError::InvalidParameter { name, reason, value }) = self.system_params() {
            let key = match name {
                "substeps" => "system.pulse_substeps".to_string(),
                n => format!("system.{n}"),
            };
            return bad(&key, format!("{reason} (got {value})"));
        }
        if !(self.system.period_us > 0.0) {
            return bad("system.period_us", format!("must be > 0 (got {})", self.system.period_us));
        }
        if let Err(ModelError::InvalidParameter { name, reason, value }) = self.schedule() {
            return bad(&format!("drive.{name}"), format!("{reason} (got {value})"));
        }
        if let InitialState::Gaussian { width } = self.initial {
            if !(width > 0.0 && width.is_finite()) {
                return bad("initial.width", format!("must be > 0 (got {width})"));
            }
        }
        if self.scan.segments.is_empty() {
            return bad("scan.segments", "must contain at least one grid".into());
        }
        for g in &self.scan.segments {
            check_grid("scan.segments", g, true)?;
        }
        if self.scan.lambda0_ensemble == 0 {
            return bad("scan.lambda0_ensemble", "must be >= 1".into());
        }
        if let Some(b) = self.scan.quasimomenta.iter().find(|b| !(0.0..1.0).contains(*b)) {
            return bad("scan.quasimomenta", format!("entries must lie in [0, 1) (got {b})"));
        }
        if let Some(h) = self.scan.cusp_half_width {
            if !(h > 0.0) {
                return bad("scan.cusp_half_width", format!("must be > 0 (got {h})"));
            }
        }
        check_grid("levels.lambda", &self.levels.lambda, false)?;
        if self.levels.half_width < 8 {
            return bad("levels.half_width", format!("must be >= 8 (got {})", self.levels.half_width));
        }
        let l = &self.levels;
        for (key, v) in [
            ("levels.thin_weight", l.thin_weight),
            ("levels.thick_weight", l.thick_weight),
            ("levels.min_overlap", l.min_overlap),
            ("levels.step_floor", l.step_floor),
            ("levels.refine_gap", l.refine_gap),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(key, format!("must be > 0 (got {v})"));
            }
        }
        for (key, v) in [("levels.refine_weight", l.refine_weight), ("levels.crossing_weight", l.crossing_weight)] {
            if !(v >= 0.0) {
                return bad(key, format!("must be >= 0 (got {v})"));
            }
        }
        if self.classical.ensemble_size < crate::classical::MIN_ENSEMBLE {
            return bad(
                "classical.ensemble_size",
                format!("must be >= {} (got {})", crate::classical::MIN_ENSEMBLE, self.classical.ensemble_size),
            );
        }
        if let Some(b) = self.classical.p0_band {
            if !(b > 0.0) {
                return bad("classical.p0_band", format!("must be > 0 (got {b})"));
            }
        }
        if self.run.output.as_os_str().is_empty() {
            return bad("run.output", "must not be empty".into());
        }
        Ok(())
    }
}

fn check_grid(key: &str, g: &GridSpec, positive: bool) -> Result<(), (String, String)> {
    if g.count < 2 {
        return Err((key.into(), format!("count must be >= 2 (got {})", g.count)));
    }
    if !(g.min.is_finite() && g.max.is_finite() && g.max > g.min) {
        return Err((key.into(), format!("needs finite min < max (got {}..{})", g.min, g.max)));
    }
    if positive && !(g.min > 0.0) {
        return Err((key.into(), format!("ratios must be > 0 (got min = {})", g.min)));
    }
    Ok(())
}

fn parse_error(origin: &str, text: &str, e: &toml::de::Error) -> ConfigError {
    let origin = match e.span() {
        Some(span) => format!("{origin}:{}", 1 + text[..span.start.min(text.len())].matches('\n').count()),
        None => origin.to_string(),
    };
    ConfigError::Parse { origin, message: e.message().to_string() }
}

/// Line (1-based) of `key = ...` inside its `[section]`, if written out.
fn locate(text: &str, dotted: &str) -> Option<usize> {
    let (section, key) = dotted.split_once('.')?;
    let mut current = String::new();
    let mut section_line = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            if current == section {
                section_line.get_or_insert(i + 1);
            }
            continue;
        }
        if current == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    section_line
}

fn apply_override(table: &mut toml::Table, item: &str) -> Result<(), ConfigError> {
    let bad = || ConfigError::BadOverride(item.to_string());
    let (path, raw) = item.split_once('=').ok_or_else(bad)?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.len() < 2 || keys.iter().any(|k| k.is_empty()) {
        return Err(bad());
    }
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut t = table;
    for k in &keys[..keys.len() - 1] {
        t = t
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(bad)?;
    }
    t.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}
