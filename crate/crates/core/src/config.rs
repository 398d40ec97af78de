//! Scenario configuration and experiment selection.
//!
//! Configuration files are JSON objects. Every key is optional; missing keys
//! take the reference-scenario defaults. Unknown keys are rejected. Power and
//! path-loss values may be given either as plain numbers (linear units) or as
//! strings with a unit suffix (`"10dBm"`, `"-30dBW"`, `"5mW"`, `"-10dB"`);
//! everything is converted to linear SI units at parse time.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::channel::Direction;
use crate::comm::Constellation;
use crate::error::{Error, Result};
use crate::orchestrator::SchemeKind;

/// Speed of light, rounded so that 2.4 GHz maps to exactly 0.125 m.
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

/// A uniformly sampled angle axis, stored in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridAxis {
    pub start: f64,
    pub end: f64,
    pub count: usize,
}

impl GridAxis {
    pub fn from_degrees(start: f64, end: f64, count: usize) -> Self {
        Self {
            start: start.to_radians(),
            end: end.to_radians(),
            count,
        }
    }

    pub fn values(&self) -> Vec<f64> {
        match self.count {
            0 => Vec::new(),
            1 => vec![self.start],
            n => {
                let step = (self.end - self.start) / (n - 1) as f64;
                (0..n).map(|i| self.start + step * i as f64).collect()
            }
        }
    }

    pub fn contains(&self, angle: f64) -> bool {
        let (lo, hi) = if self.start <= self.end {
            (self.start, self.end)
        } else {
            (self.end, self.start)
        };
        angle >= lo - 1e-12 && angle <= hi + 1e-12
    }
}

/// All scenario constants, in linear SI units.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemConfig {
    /// BS antenna count M.
    pub antennas: usize,
    /// fRIS element count N.
    pub elements: usize,
    /// User count K.
    pub users: usize,
    pub wavelength: f64,
    /// Transmit power budget in watts.
    pub transmit_power: f64,
    /// Receiver noise power in watts.
    pub noise_power: f64,
    /// Sensing weight; `1 - alpha` weights communication.
    pub alpha: f64,
    /// Side length of the square movement region, meters.
    pub region_size: f64,
    /// Minimum inter-element spacing, meters.
    pub min_spacing: f64,
    /// Path-loss coefficient (linear), gain = coefficient / dist^2.
    pub path_loss: f64,
    pub bs_position: [f64; 3],
    pub fris_position: [f64; 3],
    pub user_center: [f64; 3],
    pub user_radius: f64,
    /// Fixed user positions; when absent users are dropped in the disc.
    pub user_positions: Option<Vec<[f64; 3]>>,
    /// Target directions as seen from the fRIS.
    pub targets: Vec<Direction>,
    pub azimuth_grid: GridAxis,
    pub elevation_grid: GridAxis,
    /// Width of each rectangular mainlobe of the ideal beampattern, radians.
    pub mainlobe_width: f64,
    /// Outer-loop stopping threshold on |delta epsilon|.
    pub am_tol: f64,
    /// ALM feasibility threshold relative to the transmit power.
    pub alm_tol_rel: f64,
    pub max_outer_iterations: usize,
    pub sensing_restarts: usize,
    /// Grid spacing of the discrete-position benchmark, meters.
    pub dps_spacing: f64,
    pub shuffle_element_order: bool,
    pub seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        let wavelength = SPEED_OF_LIGHT / 2.4e9;
        Self {
            antennas: 8,
            elements: 16,
            users: 4,
            wavelength,
            transmit_power: dbm_to_watts(10.0),
            noise_power: dbm_to_watts(-60.0),
            alpha: 0.5,
            region_size: 4.0 * wavelength,
            min_spacing: 0.5 * wavelength,
            path_loss: db_to_linear(-10.0),
            bs_position: [3.0, 0.0, 0.0],
            fris_position: [0.0, 3.0, 3.0],
            user_center: [30.0, 100.0, 0.0],
            user_radius: 10.0,
            user_positions: None,
            targets: vec![
                Direction::from_degrees(-60.0, 0.0),
                Direction::from_degrees(10.0, 0.0),
                Direction::from_degrees(55.0, 0.0),
            ],
            azimuth_grid: GridAxis::from_degrees(-90.0, 90.0, 181),
            elevation_grid: GridAxis::from_degrees(-60.0, 60.0, 13),
            mainlobe_width: 10f64.to_radians(),
            am_tol: 1e-5,
            alm_tol_rel: 1e-5,
            max_outer_iterations: 200,
            sensing_restarts: 4,
            dps_spacing: 0.25 * wavelength,
            shuffle_element_order: false,
            seed: 1,
        }
    }
}

impl SystemConfig {
    /// Target count T.
    pub fn target_count(&self) -> usize {
        self.targets.len()
    }

    /// Absolute ALM feasibility threshold in watts.
    pub fn alm_tol(&self) -> f64 {
        self.alm_tol_rel * self.transmit_power
    }

    /// Checks every invariant; the first violation is reported by key.
    pub fn validate(&self) -> Result<()> {
        let positive = |key: &str, v: f64| -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(key, format!("must be finite and > 0, got {v}")))
            }
        };
        if self.antennas < 1 {
            return Err(Error::config("antennas", "must be >= 1"));
        }
        if self.elements < 1 {
            return Err(Error::config("elements", "must be >= 1"));
        }
        if self.users < 1 {
            return Err(Error::config("users", "must be >= 1"));
        }
        positive("wavelength_m", self.wavelength)?;
        positive("transmit_power", self.transmit_power)?;
        positive("noise_power", self.noise_power)?;
        positive("path_loss", self.path_loss)?;
        positive("region_size_wavelengths", self.region_size)?;
        positive("min_spacing_wavelengths", self.min_spacing)?;
        positive("am_tol", self.am_tol)?;
        positive("alm_tol_rel", self.alm_tol_rel)?;
        positive("dps_spacing_wavelengths", self.dps_spacing)?;
        positive("mainlobe_width_deg", self.mainlobe_width)?;
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::config(
                "alpha",
                format!("must lie in [0, 1], got {}", self.alpha),
            ));
        }
        if self.min_spacing > self.region_size {
            return Err(Error::config(
                "min_spacing_wavelengths",
                "minimum spacing exceeds the region size",
            ));
        }
        if self.dps_spacing > self.region_size {
            return Err(Error::config(
                "dps_spacing_wavelengths",
                "grid spacing must lie in (0, region size]",
            ));
        }
        if !crate::position_opt::packing_feasible(self.elements, self.region_size, self.min_spacing) {
            return Err(Error::config(
                "elements",
                format!(
                    "{} elements cannot be packed at spacing {} m in a {} m region",
                    self.elements, self.min_spacing, self.region_size
                ),
            ));
        }
        if !(self.user_radius.is_finite() && self.user_radius >= 0.0) {
            return Err(Error::config("user_radius", "must be finite and >= 0"));
        }
        if let Some(users) = &self.user_positions {
            if users.len() != self.users {
                return Err(Error::config(
                    "user_positions",
                    format!("expected {} positions, got {}", self.users, users.len()),
                ));
            }
        }
        if self.azimuth_grid.count < 1 {
            return Err(Error::config("azimuth_grid_deg.count", "must be >= 1"));
        }
        if self.elevation_grid.count < 1 {
            return Err(Error::config("elevation_grid_deg.count", "must be >= 1"));
        }
        for (i, t) in self.targets.iter().enumerate() {
            if !self.azimuth_grid.contains(t.azimuth) || !self.elevation_grid.contains(t.elevation) {
                return Err(Error::config(
                    format!("targets_deg[{i}]"),
                    "target lies outside the angle grid",
                ));
            }
        }
        if self.max_outer_iterations < 1 {
            return Err(Error::config("max_outer_iterations", "must be >= 1"));
        }
        Ok(())
    }
}

/// Which figure-style experiment the CLI runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ExperimentKind {
    Convergence,
    NSweep,
    Beampattern,
    Ber,
    RegionSweep,
    Table1,
}

impl ExperimentKind {
    pub fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "convergence" => Self::Convergence,
            "n-sweep" => Self::NSweep,
            "beampattern" => Self::Beampattern,
            "ber" => Self::Ber,
            "region-sweep" => Self::RegionSweep,
            "table1" => Self::Table1,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Convergence => "convergence",
            Self::NSweep => "n-sweep",
            Self::Beampattern => "beampattern",
            Self::Ber => "ber",
            Self::RegionSweep => "region-sweep",
            Self::Table1 => "table1",
        }
    }

    /// Sweep values used when the config gives none.
    pub fn default_sweep(self) -> Vec<f64> {
        match self {
            Self::Convergence => vec![],
            Self::NSweep => vec![16.0, 25.0, 36.0, 49.0, 64.0],
            Self::Beampattern => vec![0.1, 0.5, 0.9],
            Self::Ber => vec![-80.0, -70.0, -60.0, -50.0, -40.0],
            Self::RegionSweep => vec![2.0, 3.0, 4.0, 5.0, 6.0],
            Self::Table1 => vec![25.0, 49.0, 64.0],
        }
    }
}

/// What to run and where to write it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub schemes: Vec<SchemeKind>,
    /// Element counts, alphas, noise levels (dBm) or region sizes (A/lambda),
    /// depending on `kind`.
    pub sweep: Vec<f64>,
    pub trials: usize,
    pub output: PathBuf,
    /// BER only: constellations to evaluate.
    pub modulations: Vec<Constellation>,
    /// BER only: sensing weights to evaluate.
    pub alphas: Vec<f64>,
    /// BER only: noise realizations per solved trial.
    pub frames_per_trial: usize,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            kind: ExperimentKind::Convergence,
            schemes: SchemeKind::ALL.to_vec(),
            sweep: Vec::new(),
            trials: 20,
            output: PathBuf::from("out"),
            modulations: vec![Constellation::Qpsk, Constellation::Qam16],
            alphas: vec![0.1, 0.5, 0.9],
            frames_per_trial: 1250,
        }
    }
}

impl ExperimentSpec {
    /// Sweep values after defaulting.
    pub fn sweep_values(&self) -> Vec<f64> {
        if self.sweep.is_empty() {
            self.kind.default_sweep()
        } else {
            self.sweep.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::config("experiment.trials", "must be >= 1"));
        }
        if self.schemes.is_empty() {
            return Err(Error::config("experiment.schemes", "must not be empty"));
        }
        let sweep = self.sweep_values();
        if self.kind != ExperimentKind::Convergence && sweep.is_empty() {
            return Err(Error::config("experiment.sweep", "must not be empty"));
        }
        if sweep.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::config(
                "experiment.sweep",
                "values must be finite and strictly increasing",
            ));
        }
        if sweep.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("experiment.sweep", "values must be finite"));
        }
        match self.kind {
            ExperimentKind::NSweep | ExperimentKind::Table1 => {
                if sweep.iter().any(|v| *v < 1.0 || v.fract() != 0.0) {
                    return Err(Error::config(
                        "experiment.sweep",
                        "element counts must be positive integers",
                    ));
                }
            }
            ExperimentKind::Beampattern => {
                if sweep.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(Error::config("experiment.sweep", "alphas must lie in [0, 1]"));
                }
            }
            ExperimentKind::RegionSweep => {
                if sweep.iter().any(|v| *v <= 0.0) {
                    return Err(Error::config("experiment.sweep", "region sizes must be > 0"));
                }
            }
            ExperimentKind::Ber => {
                if self.modulations.is_empty() {
                    return Err(Error::config("experiment.modulations", "must not be empty"));
                }
                if self.alphas.is_empty() || self.alphas.iter().any(|a| !(0.0..=1.0).contains(a)) {
                    return Err(Error::config(
                        "experiment.alphas",
                        "must be a non-empty list of values in [0, 1]",
                    ));
                }
                if self.frames_per_trial < 1 {
                    return Err(Error::config("experiment.frames_per_trial", "must be >= 1"));
                }
            }
            ExperimentKind::Convergence => {}
        }
        Ok(())
    }
}

/// Stable hash of the full configuration, hex encoded.
pub fn config_hash(config: &SystemConfig, spec: &ExperimentSpec) -> String {
    let payload = serde_json::to_vec(&(config, spec)).expect("config serializes");
    let digest = Sha256::digest(&payload);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Parses a power: a bare number is watts, otherwise a `dBm`, `dBW`, `mW`
/// or `W` suffix is required.
pub fn parse_power(key: &str, value: &Value) -> Result<f64> {
    let watts = match value {
        Value::Number(n) => n.as_f64().unwrap_or(f64::NAN),
        Value::String(s) => {
            let s = s.trim();
            let (num, unit) = split_unit(s);
            let x: f64 = num
                .trim()
                .parse()
                .map_err(|_| Error::config(key, format!("cannot parse power `{s}`")))?;
            match unit.to_ascii_lowercase().as_str() {
                "dbm" => dbm_to_watts(x),
                "dbw" => db_to_linear(x),
                "mw" => x * 1e-3,
                "w" => x,
                _ => {
                    return Err(Error::config(
                        key,
                        format!("unknown power unit `{unit}` (expected dBm, dBW, mW or W)"),
                    ))
                }
            }
        }
        other => {
            return Err(Error::config(
                key,
                format!("expected a number or a string with unit, got {}", type_name(other)),
            ))
        }
    };
    if !(watts.is_finite() && watts > 0.0) {
        return Err(Error::config(key, format!("power must be > 0, got {watts}")));
    }
    Ok(watts)
}

/// Parses a dimensionless gain: a bare number is linear, `"<x>dB"` is decibels.
pub fn parse_gain(key: &str, value: &Value) -> Result<f64> {
    let gain = match value {
        Value::Number(n) => n.as_f64().unwrap_or(f64::NAN),
        Value::String(s) => {
            let s = s.trim();
            let (num, unit) = split_unit(s);
            let x: f64 = num
                .trim()
                .parse()
                .map_err(|_| Error::config(key, format!("cannot parse gain `{s}`")))?;
            match unit.to_ascii_lowercase().as_str() {
                "db" => db_to_linear(x),
                "" => x,
                _ => return Err(Error::config(key, format!("unknown gain unit `{unit}`"))),
            }
        }
        other => {
            return Err(Error::config(
                key,
                format!("expected a number or a dB string, got {}", type_name(other)),
            ))
        }
    };
    if !(gain.is_finite() && gain > 0.0) {
        return Err(Error::config(key, format!("gain must be > 0, got {gain}")));
    }
    Ok(gain)
}

fn split_unit(s: &str) -> (&str, &str) {
    let idx = s.trim_end_matches(|c: char| c.is_ascii_alphabetic()).len();
    (&s[..idx], &s[idx..])
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(_) => "number",
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

/// Key-by-key reader over a JSON object that remembers which keys were used.
struct Fields<'a> {
    map: &'a Map<String, Value>,
    prefix: &'static str,
    used: BTreeSet<&'a str>,
}

impl<'a> Fields<'a> {
    fn new(map: &'a Map<String, Value>, prefix: &'static str) -> Self {
        Self {
            map,
            prefix,
            used: BTreeSet::new(),
        }
    }

    fn key(&self, k: &str) -> String {
        format!("{}{}", self.prefix, k)
    }

    fn get(&mut self, k: &'a str) -> Option<&'a Value> {
        let v = self.map.get(k);
        if v.is_some() {
            self.used.insert(k);
        }
        v
    }

    fn f64(&mut self, k: &'a str) -> Result<Option<f64>> {
        match self.get(k) {
            None => Ok(None),
            Some(Value::Number(n)) => Ok(n.as_f64()),
            Some(other) => Err(Error::config(
                self.key(k),
                format!("expected a number, got {}", type_name(other)),
            )),
        }
    }

    fn usize(&mut self, k: &'a str) -> Result<Option<usize>> {
        match self.get(k) {
            None => Ok(None),
            Some(Value::Number(n)) => n
                .as_u64()
                .map(|v| Some(v as usize))
                .ok_or_else(|| Error::config(self.key(k), format!("expected a non-negative integer, got {n}"))),
            Some(other) => Err(Error::config(
                self.key(k),
                format!("expected a non-negative integer, got {}", type_name(other)),
            )),
        }
    }

    fn bool(&mut self, k: &'a str) -> Result<Option<bool>> {
        match self.get(k) {
            None => Ok(None),
            Some(Value::Bool(b)) => Ok(Some(*b)),
            Some(other) => Err(Error::config(
                self.key(k),
                format!("expected a boolean, got {}", type_name(other)),
            )),
        }
    }

    fn string(&mut self, k: &'a str) -> Result<Option<&'a str>> {
        match self.get(k) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.as_str())),
            Some(other) => Err(Error::config(
                self.key(k),
                format!("expected a string, got {}", type_name(other)),
            )),
        }
    }

    fn array(&mut self, k: &'a str) -> Result<Option<&'a Vec<Value>>> {
        match self.get(k) {
            None => Ok(None),
            Some(Value::Array(a)) => Ok(Some(a)),
            Some(other) => Err(Error::config(
                self.key(k),
                format!("expected an array, got {}", type_name(other)),
            )),
        }
    }

    fn f64_list(&mut self, k: &'a str) -> Result<Option<Vec<f64>>> {
        let Some(items) = self.array(k)? else {
            return Ok(None);
        };
        items
            .iter()
            .enumerate()
            .map(|(i, v)| {
                v.as_f64().ok_or_else(|| {
                    Error::config(
                        format!("{}[{i}]", self.key(k)),
                        format!("expected a number, got {}", type_name(v)),
                    )
                })
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    fn point3(&mut self, k: &'a str) -> Result<Option<[f64; 3]>> {
        let key = self.key(k);
        match self.f64_list(k)? {
            None => Ok(None),
            Some(v) if v.len() == 3 => Ok(Some([v[0], v[1], v[2]])),
            Some(v) => Err(Error::config(key, format!("expected 3 coordinates, got {}", v.len()))),
        }
    }

    fn finish(self) -> Result<()> {
        for k in self.map.keys() {
            if !self.used.contains(k.as_str()) {
                return Err(Error::config(self.key(k), "unknown key"));
            }
        }
        Ok(())
    }
}

fn parse_point_list(key: &str, items: &[Value]) -> Result<Vec<[f64; 3]>> {
    items
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let coords = v
                .as_array()
                .filter(|a| a.len() == 3)
                .ok_or_else(|| Error::config(format!("{key}[{i}]"), "expected an array of 3 numbers"))?;
            let mut p = [0.0; 3];
            for (j, c) in coords.iter().enumerate() {
                p[j] = c
                    .as_f64()
                    .ok_or_else(|| Error::config(format!("{key}[{i}][{j}]"), "expected a number"))?;
            }
            Ok(p)
        })
        .collect()
}

fn parse_grid(key: &str, value: &Value) -> Result<GridAxis> {
    let map = value
        .as_object()
        .ok_or_else(|| Error::config(key, format!("expected an object, got {}", type_name(value))))?;
    let mut start = None;
    let mut end = None;
    let mut count = None;
    for (k, v) in map {
        let sub = format!("{key}.{k}");
        match k.as_str() {
            "start" => start = Some(v.as_f64().ok_or_else(|| Error::config(&sub, "expected a number"))?),
            "end" => end = Some(v.as_f64().ok_or_else(|| Error::config(&sub, "expected a number"))?),
            "count" => {
                count = Some(
                    v.as_u64()
                        .ok_or_else(|| Error::config(&sub, "expected a positive integer"))?
                        as usize,
                )
            }
            _ => return Err(Error::config(sub, "unknown key")),
        }
    }
    let start = start.ok_or_else(|| Error::config(format!("{key}.start"), "missing"))?;
    let end = end.unwrap_or(start);
    let count = count.unwrap_or(if start == end { 1 } else { 2 });
    Ok(GridAxis::from_degrees(start, end, count))
}

fn parse_experiment(value: &Value) -> Result<ExperimentSpec> {
    let map = value
        .as_object()
        .ok_or_else(|| Error::config("experiment", format!("expected an object, got {}", type_name(value))))?;
    let mut f = Fields::new(map, "experiment.");
    let mut spec = ExperimentSpec::default();
    if let Some(kind) = f.string("kind")? {
        spec.kind = ExperimentKind::parse(kind)
            .ok_or_else(|| Error::config("experiment.kind", format!("unknown experiment `{kind}`")))?;
    }
    if let Some(items) = f.array("schemes")? {
        spec.schemes = items
            .iter()
            .enumerate()
            .map(|(i, v)| {
                v.as_str().and_then(SchemeKind::parse).ok_or_else(|| {
                    Error::config(
                        format!("experiment.schemes[{i}]"),
                        "expected one of proposed, conven, dps, rand",
                    )
                })
            })
            .collect::<Result<_>>()?;
    }
    if let Some(sweep) = f.f64_list("sweep")? {
        spec.sweep = sweep;
    }
    if let Some(t) = f.usize("trials")? {
        spec.trials = t;
    }
    if let Some(out) = f.string("output")? {
        spec.output = PathBuf::from(out);
    }
    if let Some(items) = f.array("modulations")? {
        spec.modulations = items
            .iter()
            .enumerate()
            .map(|(i, v)| {
                v.as_str()
                    .and_then(Constellation::parse)
                    .ok_or_else(|| Error::config(format!("experiment.modulations[{i}]"), "expected qpsk or 16qam"))
            })
            .collect::<Result<_>>()?;
    }
    if let Some(alphas) = f.f64_list("alphas")? {
        spec.alphas = alphas;
    }
    if let Some(frames) = f.usize("frames_per_trial")? {
        spec.frames_per_trial = frames;
    }
    f.finish()?;
    Ok(spec)
}

/// Parses a configuration document. An empty object yields the defaults.
pub fn parse_config_str(text: &str) -> Result<(SystemConfig, ExperimentSpec)> {
    let text = if text.trim().is_empty() { "{}" } else { text };
    let root: Value =
        serde_json::from_str(text).map_err(|e| Error::config("<document>", format!("invalid JSON: {e}")))?;
    let map = root
        .as_object()
        .ok_or_else(|| Error::config("<document>", format!("expected an object, got {}", type_name(&root))))?;

    let mut f = Fields::new(map, "");
    let mut c = SystemConfig::default();

    if let Some(v) = f.usize("antennas")? {
        c.antennas = v;
    }
    if let Some(v) = f.usize("elements")? {
        c.elements = v;
    }
    if let Some(v) = f.usize("users")? {
        c.users = v;
    }
    let freq = f.f64("carrier_frequency_hz")?;
    let wl = f.f64("wavelength_m")?;
    match (freq, wl) {
        (Some(_), Some(_)) => {
            return Err(Error::config(
                "wavelength_m",
                "give either wavelength_m or carrier_frequency_hz, not both",
            ))
        }
        (Some(hz), None) => {
            if !(hz.is_finite() && hz > 0.0) {
                return Err(Error::config("carrier_frequency_hz", "must be > 0"));
            }
            c.wavelength = SPEED_OF_LIGHT / hz;
        }
        (None, Some(m)) => c.wavelength = m,
        (None, None) => {}
    }
    let lambda = c.wavelength;
    if let Some(v) = f.get("transmit_power") {
        c.transmit_power = parse_power("transmit_power", v)?;
    }
    if let Some(v) = f.get("noise_power") {
        c.noise_power = parse_power("noise_power", v)?;
    }
    if let Some(v) = f.get("path_loss") {
        c.path_loss = parse_gain("path_loss", v)?;
    }
    if let Some(v) = f.f64("alpha")? {
        c.alpha = v;
    }
    c.region_size = f.f64("region_size_wavelengths")?.unwrap_or(4.0) * lambda;
    c.min_spacing = f.f64("min_spacing_wavelengths")?.unwrap_or(0.5) * lambda;
    c.dps_spacing = f.f64("dps_spacing_wavelengths")?.unwrap_or(0.25) * lambda;
    if let Some(p) = f.point3("bs_position")? {
        c.bs_position = p;
    }
    if let Some(p) = f.point3("fris_position")? {
        c.fris_position = p;
    }
    if let Some(p) = f.point3("user_center")? {
        c.user_center = p;
    }
    if let Some(r) = f.f64("user_radius")? {
        c.user_radius = r;
    }
    if let Some(items) = f.array("user_positions")? {
        c.user_positions = Some(parse_point_list("user_positions", items)?);
    }
    if let Some(items) = f.array("targets_deg")? {
        c.targets = items
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let pair = v
                    .as_array()
                    .filter(|a| a.len() == 2)
                    .and_then(|a| Some((a[0].as_f64()?, a[1].as_f64()?)))
                    .ok_or_else(|| {
                        Error::config(format!("targets_deg[{i}]"), "expected [azimuth_deg, elevation_deg]")
                    })?;
                Ok(Direction::from_degrees(pair.0, pair.1))
            })
            .collect::<Result<_>>()?;
    }
    if let Some(v) = f.get("azimuth_grid_deg") {
        c.azimuth_grid = parse_grid("azimuth_grid_deg", v)?;
    }
    if let Some(v) = f.get("elevation_grid_deg") {
        c.elevation_grid = parse_grid("elevation_grid_deg", v)?;
    }
    if let Some(v) = f.f64("mainlobe_width_deg")? {
        c.mainlobe_width = v.to_radians();
    }
    if let Some(v) = f.f64("am_tol")? {
        c.am_tol = v;
    }
    if let Some(v) = f.f64("alm_tol_rel")? {
        c.alm_tol_rel = v;
    }
    if let Some(v) = f.usize("max_outer_iterations")? {
        c.max_outer_iterations = v;
    }
    if let Some(v) = f.usize("sensing_restarts")? {
        c.sensing_restarts = v;
    }
    if let Some(v) = f.bool("shuffle_element_order")? {
        c.shuffle_element_order = v;
    }
    if let Some(v) = f.get("seed") {
        c.seed = v
            .as_u64()
            .ok_or_else(|| Error::config("seed", "expected a non-negative integer"))?;
    }
    let spec = match f.get("experiment") {
        Some(v) => parse_experiment(v)?,
        None => ExperimentSpec::default(),
    };
    f.finish()?;

    c.validate()?;
    spec.validate()?;
    Ok((c, spec))
}

/// Reads and parses a configuration file.
pub fn parse_config(path: &Path) -> Result<(SystemConfig, ExperimentSpec)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config("<file>", format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&text)
}
