//! Figure-style experiment drivers, CSV emission and the run manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::channel::{fris_steering, CVector};
use crate::comm::Constellation;
use crate::config::{config_hash, ExperimentKind, ExperimentSpec, SystemConfig};
use crate::error::{Error, Result};
use crate::orchestrator::{ber_experiment, monte_carlo, run_trial, MonteCarloReport, SchemeKind};
use crate::sensing::ideal_beampattern;

/// Floor applied to dB values so that nulls stay finite.
pub const DB_FLOOR: f64 = -100.0;

pub const CONVERGENCE_HEADER: &str = "iteration,epsilon,epsilon_r,epsilon_c,scheme";
pub const N_SWEEP_HEADER: &str = "N,scheme,mean_eps,std_eps,mean_time_s";
pub const BEAMPATTERN_HEADER: &str = "azimuth_deg,gain_db,variant";
pub const BER_HEADER: &str = "noise_dbm,modulation,alpha,mean_ber";
pub const REGION_SWEEP_HEADER: &str = "A_over_lambda,scheme,mean_eps";
pub const TABLE1_HEADER: &str = "scheme,N,mean_eps,time_s";

/// Decimal rendering with 9 significant digits.
pub fn fmt9(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_finite() { "0".to_string() } else { x.to_string() };
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (8 - magnitude).max(0) as usize;
    let s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub experiment: String,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub trials: usize,
    pub schemes: Vec<SchemeKind>,
    pub sweep: Vec<f64>,
    pub outputs: Vec<String>,
    /// Failed trials per sweep point and scheme, as "label: trial message".
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub csv_path: PathBuf,
    pub manifest_path: PathBuf,
    pub csv: String,
    pub manifest: RunManifest,
}

fn with_header(header: &str) -> String {
    let mut s = String::from(header);
    s.push('\n');
    s
}

fn record_failures(failures: &mut Vec<String>, label: &str, report: &MonteCarloReport) -> Result<()> {
    for (trial, msg) in &report.failures {
        failures.push(format!("{label} trial {trial}: {msg}"));
    }
    if report.trials.is_empty() {
        return Err(Error::NonConvergence {
            solver: "monte_carlo",
            iterations: report.failures.len(),
            residual: f64::NAN,
        });
    }
    Ok(())
}

/// Per-iteration mean of epsilon and its terms; trials that stopped early
/// hold their final value.
pub fn convergence_csv(
    config: &SystemConfig,
    schemes: &[SchemeKind],
    trials: usize,
    failures: &mut Vec<String>,
) -> Result<String> {
    let mut csv = with_header(CONVERGENCE_HEADER);
    for &scheme in schemes {
        let report = monte_carlo(config, scheme, trials)?;
        record_failures(failures, scheme.name(), &report)?;
        let longest = report.trials.iter().map(|t| t.trace.len()).max().unwrap_or(0);
        let count = report.trials.len() as f64;
        for it in 0..=longest {
            let (mut e, mut er, mut ec) = (0.0, 0.0, 0.0);
            for t in &report.trials {
                let terms = if it == 0 || t.trace.is_empty() {
                    (t.initial.epsilon, t.initial.epsilon_r_tilde, t.initial.epsilon_c)
                } else {
                    let entry = &t.trace[(it - 1).min(t.trace.len() - 1)];
                    (entry.after_positions, entry.epsilon_r_tilde, entry.epsilon_c)
                };
                e += terms.0;
                er += terms.1;
                ec += terms.2;
            }
            let _ = writeln!(
                csv,
                "{it},{},{},{},{}",
                fmt9(e / count),
                fmt9(er / count),
                fmt9(ec / count),
                scheme.name()
            );
        }
    }
    Ok(csv)
}

fn element_count(v: f64) -> usize {
    v.round() as usize
}

pub fn n_sweep_csv(config: &SystemConfig, spec: &ExperimentSpec, failures: &mut Vec<String>) -> Result<String> {
    let mut csv = with_header(N_SWEEP_HEADER);
    for n in spec.sweep_values().into_iter().map(element_count) {
        let cfg = SystemConfig {
            elements: n,
            ..config.clone()
        };
        cfg.validate()?;
        for &scheme in &spec.schemes {
            let report = monte_carlo(&cfg, scheme, spec.trials)?;
            record_failures(failures, &format!("N={n} {}", scheme.name()), &report)?;
            let _ = writeln!(
                csv,
                "{n},{},{},{},{}",
                scheme.name(),
                fmt9(report.epsilon.mean),
                fmt9(report.epsilon.std),
                fmt9(report.wall_time_s.mean)
            );
        }
    }
    Ok(csv)
}

pub fn table1_csv(config: &SystemConfig, spec: &ExperimentSpec, failures: &mut Vec<String>) -> Result<String> {
    let mut csv = with_header(TABLE1_HEADER);
    for &scheme in &spec.schemes {
        for n in spec.sweep_values().into_iter().map(element_count) {
            let cfg = SystemConfig {
                elements: n,
                ..config.clone()
            };
            cfg.validate()?;
            let report = monte_carlo(&cfg, scheme, spec.trials)?;
            record_failures(failures, &format!("N={n} {}", scheme.name()), &report)?;
            let _ = writeln!(
                csv,
                "{},{n},{},{}",
                scheme.name(),
                fmt9(report.epsilon.mean),
                fmt9(report.wall_time_s.mean)
            );
        }
    }
    Ok(csv)
}

pub fn region_sweep_csv(config: &SystemConfig, spec: &ExperimentSpec, failures: &mut Vec<String>) -> Result<String> {
    let mut csv = with_header(REGION_SWEEP_HEADER);
    for a in spec.sweep_values() {
        let cfg = SystemConfig {
            region_size: a * config.wavelength,
            ..config.clone()
        };
        cfg.validate()?;
        for &scheme in &spec.schemes {
            let report = monte_carlo(&cfg, scheme, spec.trials)?;
            record_failures(failures, &format!("A={a} {}", scheme.name()), &report)?;
            let _ = writeln!(csv, "{},{},{}", fmt9(a), scheme.name(), fmt9(report.epsilon.mean));
        }
    }
    Ok(csv)
}

/// Power pattern |a^H v|^2 of the reflected signal over the azimuth grid at
/// the elevation row nearest the first target.
pub fn azimuth_cut(
    config: &SystemConfig,
    positions: &crate::channel::PositionSet,
    signal: &CVector,
) -> Vec<(f64, f64)> {
    let elevation = target_elevation(config);
    config
        .azimuth_grid
        .values()
        .into_iter()
        .map(|az| {
            let a = fris_steering(
                positions,
                config.wavelength,
                crate::channel::Direction::new(az, elevation),
            );
            (az, a.dotc(signal).norm_sqr())
        })
        .collect()
}

fn target_elevation(config: &SystemConfig) -> f64 {
    let wanted = config.targets.first().map(|t| t.elevation).unwrap_or(0.0);
    config
        .elevation_grid
        .values()
        .into_iter()
        .min_by(|a, b| (a - wanted).abs().total_cmp(&(b - wanted).abs()))
        .unwrap_or(0.0)
}

/// 10 log10(p / max p), floored at [`DB_FLOOR`].
pub fn to_db(pattern: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let peak = pattern.iter().map(|p| p.1).fold(0.0, f64::max);
    pattern
        .iter()
        .map(|&(az, p)| {
            let db = if peak > 0.0 && p > 0.0 {
                10.0 * (p / peak).log10()
            } else {
                DB_FLOOR
            };
            (az, db.max(DB_FLOOR))
        })
        .collect()
}

fn push_pattern(csv: &mut String, pattern: &[(f64, f64)], variant: &str) {
    for (az, db) in to_db(pattern) {
        let _ = writeln!(csv, "{},{},{variant}", fmt9(az.to_degrees()), fmt9(db));
    }
}

/// Ideal pattern, then for each alpha the reference signal and every
/// scheme's reflected signal, all from trial 0.
pub fn beampattern_csv(config: &SystemConfig, spec: &ExperimentSpec) -> Result<String> {
    let mut csv = with_header(BEAMPATTERN_HEADER);
    let grid = crate::sensing::AngleGrid::new(config.azimuth_grid.values(), vec![target_elevation(config)]);
    let ideal = ideal_beampattern(&config.targets, config.mainlobe_width, &grid)?;
    let ideal: Vec<(f64, f64)> = grid
        .azimuths
        .iter()
        .zip(ideal.column(0).iter())
        .map(|(&a, &p)| (a, p))
        .collect();
    push_pattern(&mut csv, &ideal, "ideal");
    for alpha in spec.sweep_values() {
        let cfg = SystemConfig {
            alpha,
            ..config.clone()
        };
        cfg.validate()?;
        for (i, &scheme) in spec.schemes.iter().enumerate() {
            let (_, state, _) = run_trial(&cfg, scheme, 0, Constellation::Qpsk)?;
            if i == 0 {
                let reference = azimuth_cut(&cfg, &state.positions, &state.s_r);
                push_pattern(&mut csv, &reference, &format!("reference_alpha_{}", fmt9(alpha)));
            }
            let v = reflected_signal(&state);
            let pattern = azimuth_cut(&cfg, &state.positions, &v);
            push_pattern(&mut csv, &pattern, &format!("{}_alpha_{}", scheme.name(), fmt9(alpha)));
        }
    }
    Ok(csv)
}

/// v = Theta^H G x.
pub fn reflected_signal(state: &crate::orchestrator::SolverState) -> CVector {
    let gx = &state.channels.g * state.transmit();
    CVector::from_fn(gx.len(), |i, _| state.theta[i].conj() * gx[i])
}

pub fn ber_csv(config: &SystemConfig, spec: &ExperimentSpec, failures: &mut Vec<String>) -> Result<String> {
    let mut csv = with_header(BER_HEADER);
    let scheme = spec.schemes[0];
    let levels = spec.sweep_values();
    for &constellation in &spec.modulations {
        for &alpha in &spec.alphas {
            let cfg = SystemConfig {
                alpha,
                ..config.clone()
            };
            let points = ber_experiment(&cfg, scheme, constellation, &levels, spec.trials, spec.frames_per_trial)?;
            for p in points {
                if p.failures > 0 {
                    failures.push(format!(
                        "{} alpha={} noise={} dBm: {} failed trials",
                        constellation.name(),
                        fmt9(alpha),
                        fmt9(p.noise_dbm),
                        p.failures
                    ));
                }
                let _ = writeln!(
                    csv,
                    "{},{},{},{}",
                    fmt9(p.noise_dbm),
                    constellation.name(),
                    fmt9(alpha),
                    fmt9(p.mean_ber)
                );
            }
        }
    }
    Ok(csv)
}

/// Runs the experiment and writes `<kind>.csv` and `manifest.json` into
/// `out_dir`.
pub fn run_experiment(config: &SystemConfig, spec: &ExperimentSpec, out_dir: &Path) -> Result<ExperimentOutput> {
    config.validate()?;
    spec.validate()?;
    let mut failures = Vec::new();
    let csv = match spec.kind {
        ExperimentKind::Convergence => convergence_csv(config, &spec.schemes, spec.trials, &mut failures)?,
        ExperimentKind::NSweep => n_sweep_csv(config, spec, &mut failures)?,
        ExperimentKind::Beampattern => beampattern_csv(config, spec)?,
        ExperimentKind::Ber => ber_csv(config, spec, &mut failures)?,
        ExperimentKind::RegionSweep => region_sweep_csv(config, spec, &mut failures)?,
        ExperimentKind::Table1 => table1_csv(config, spec, &mut failures)?,
    };
    fs::create_dir_all(out_dir)?;
    let csv_name = format!("{}.csv", spec.kind.name());
    let csv_path = out_dir.join(&csv_name);
    fs::write(&csv_path, &csv)?;
    let manifest = RunManifest {
        experiment: spec.kind.name().to_string(),
        config_hash: config_hash(config, spec),
        seed: config.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        trials: spec.trials,
        schemes: spec.schemes.clone(),
        sweep: spec.sweep_values(),
        outputs: vec![csv_name],
        failures,
    };
    let manifest_path = out_dir.join("manifest.json");
    let text =
        serde_json::to_string_pretty(&manifest).map_err(|e| Error::domain(format!("manifest serialization: {e}")))?;
    fs::write(&manifest_path, text)?;
    Ok(ExperimentOutput {
        csv_path,
        manifest_path,
        csv,
        manifest,
    })
}
