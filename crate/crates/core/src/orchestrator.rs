//! Alternating minimization over (s_r, omega, theta, W, p), the benchmark
//! schemes and Monte Carlo aggregation.

use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::beamformer_opt::{
    alm_optimize_w, build_w_quadratic, effective_channel, matched_filter, unvectorize, vectorize, AlmOptions,
};
use crate::channel::{drop_users, CMatrix, CVector, ChannelSet, LinkGeometry, Point2, PositionSet};
use crate::comm::{
    ber_frames, cascade, comm_mse, generate_symbols, optimal_estimator, BerCount, Constellation, SymbolBlock,
};
use crate::config::{dbm_to_watts, SystemConfig};
use crate::error::{Error, Result};
use crate::numerics::ManifoldOptions;
use crate::phase_opt::{build_phase_quadratic, optimize_phases};
use crate::position_opt::{
    build_position_context, circle_packing_init, f1_value, per_element_params, run_position_pass, PassOptions,
    PositionContext,
};
use crate::sensing::{design_reference_signal, ideal_beampattern, sensing_mse, AngleGrid, DesignOptions, SteeringBank};

/// Relative s_r-refresh increase above which a drift violation is logged.
pub const SR_DRIFT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum SchemeKind {
    Proposed,
    Conven,
    Dps,
    Rand,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 4] = [Self::Proposed, Self::Conven, Self::Dps, Self::Rand];

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "proposed" => Some(Self::Proposed),
            "conven" => Some(Self::Conven),
            "dps" => Some(Self::Dps),
            "rand" => Some(Self::Rand),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Proposed => "proposed",
            Self::Conven => "conven",
            Self::Dps => "dps",
            Self::Rand => "rand",
        }
    }
}

/// Everything fixed during one trial: geometry, pilot and the ideal pattern.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: SystemConfig,
    pub users: Vec<[f64; 3]>,
    pub geometry: LinkGeometry,
    pub pilot: SymbolBlock,
    pub grid: AngleGrid,
    pub ideal: DMatrix<f64>,
}

impl Scenario {
    pub fn new(config: &SystemConfig, users: Vec<[f64; 3]>, pilot: SymbolBlock) -> Result<Self> {
        config.validate()?;
        if pilot.s_c.len() != config.users || users.len() != config.users {
            return Err(Error::domain("pilot and user count disagree with the config"));
        }
        let geometry = LinkGeometry::new(config, &users)?;
        let grid = AngleGrid::new(config.azimuth_grid.values(), config.elevation_grid.values());
        let ideal = ideal_beampattern(&config.targets, config.mainlobe_width, &grid)?;
        Ok(Self {
            config: config.clone(),
            users,
            geometry,
            pilot,
            grid,
            ideal,
        })
    }

    /// Draws users and the pilot block from `rng`.
    pub fn draw<R: Rng + ?Sized>(config: &SystemConfig, constellation: Constellation, rng: &mut R) -> Result<Self> {
        let users = drop_users(config, rng);
        let pilot = generate_symbols(config.users, constellation, rng);
        Self::new(config, users, pilot)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ObjectiveTerms {
    pub epsilon: f64,
    pub epsilon_r_tilde: f64,
    pub epsilon_c: f64,
}

/// Objective after each sub-step of one outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub after_refresh: f64,
    pub after_omega: f64,
    pub after_theta: f64,
    pub after_w: f64,
    pub after_positions: f64,
    pub epsilon_r_tilde: f64,
    pub epsilon_c: f64,
    /// after_refresh minus the previous iteration's final value.
    pub drift: f64,
}

#[derive(Debug, Clone)]
pub struct SolverState {
    pub w: CMatrix,
    pub theta: CVector,
    pub positions: PositionSet,
    pub omega: f64,
    pub s_r: CVector,
    pub s_c: CVector,
    pub channels: ChannelSet,
    pub beta: f64,
    pub epsilon: f64,
    pub epsilon_r_tilde: f64,
    pub epsilon_c: f64,
    pub iteration: usize,
    /// Objective of the initial point.
    pub initial: ObjectiveTerms,
    pub trace: Vec<TraceEntry>,
    pub converged: bool,
    pub drift_violations: usize,
}

impl SolverState {
    /// Transmit signal x = W s_c.
    pub fn transmit(&self) -> CVector {
        &self.w * &self.s_c
    }
}

#[allow(clippy::too_many_arguments)]
fn terms(
    alpha: f64,
    noise: f64,
    ch: &ChannelSet,
    w: &CMatrix,
    theta: &CVector,
    omega: f64,
    s_r: &CVector,
    s_c: &CVector,
) -> ObjectiveTerms {
    let gx = &ch.g * (w * s_c);
    let er = sensing_mse(s_r, theta, &gx);
    let ec = comm_mse(s_c, omega, &ch.h_rc, theta, &gx, noise);
    ObjectiveTerms {
        epsilon: alpha * er + (1.0 - alpha) * ec,
        epsilon_r_tilde: er,
        epsilon_c: ec,
    }
}

/// Recomputes the objective from the state's variables, rebuilding the
/// channels from the positions.
pub fn evaluate_objective(scenario: &Scenario, state: &SolverState) -> ObjectiveTerms {
    let ch = scenario.geometry.channels(&state.positions);
    terms(
        scenario.config.alpha,
        scenario.config.noise_power,
        &ch,
        &state.w,
        &state.theta,
        state.omega,
        &state.s_r,
        &state.s_c,
    )
}

/// Positions drawn uniformly from the feasible set by sequential rejection
/// sampling. When the density is too high for that to terminate, a
/// hard-disk Markov chain started from the packing lattice is used instead.
pub fn random_positions<R: Rng + ?Sized>(config: &SystemConfig, rng: &mut R) -> Result<PositionSet> {
    let (n, a, dd) = (config.elements, config.region_size, config.min_spacing);
    let sample = |rng: &mut R| Point2::new(rng.random_range(0.0..=a), rng.random_range(0.0..=a));
    'restart: for _ in 0..20 {
        let mut points: Vec<Point2> = Vec::with_capacity(n);
        while points.len() < n {
            let mut placed = false;
            for _ in 0..2000 {
                let p = sample(rng);
                if points.iter().all(|q| (p - q).norm() >= dd) {
                    points.push(p);
                    placed = true;
                    break;
                }
            }
            if !placed {
                continue 'restart;
            }
        }
        return Ok(PositionSet::new(points));
    }
    let mut pos = circle_packing_init(n, a, dd)?;
    let step = 0.5 * dd;
    for _ in 0..200 {
        for i in 0..n {
            let p = pos.get(i) + Point2::new(rng.random_range(-step..step), rng.random_range(-step..step));
            let inside = p.x >= 0.0 && p.y >= 0.0 && p.x <= a && p.y <= a;
            if inside && (0..n).all(|j| j == i || (p - pos.get(j)).norm() >= dd) {
                pos.set(i, p);
            }
        }
    }
    Ok(pos)
}

/// Greedy discrete-position pass: each element in turn moves to the grid
/// point with the lowest objective among those keeping the spacing to the
/// others, if that is strictly better than staying. The per-element reduced
/// objective differs from the full one by a constant, so it ranks the
/// candidates identically.
pub fn dps_position_pass(ctx: &PositionContext, positions: &mut PositionSet, config: &SystemConfig) -> usize {
    let spacing = config.dps_spacing;
    let count = (config.region_size / spacing * (1.0 + 1e-12)).floor() as usize + 1;
    let coords: Vec<f64> = (0..count).map(|i| i as f64 * spacing).collect();
    let mut moved = 0;
    for n in 0..positions.len() {
        let params = per_element_params(ctx, n, positions);
        let current = positions.get(n);
        let mut best = (f1_value(&params, &current), current);
        let mut improved = false;
        for &x in &coords {
            for &y in &coords {
                let p = Point2::new(x, y);
                let clear = (0..positions.len()).all(|i| i == n || (p - positions.get(i)).norm() >= config.min_spacing);
                if !clear {
                    continue;
                }
                let v = f1_value(&params, &p);
                if v < best.0 {
                    best = (v, p);
                    improved = true;
                }
            }
        }
        if improved {
            positions.set(n, best.1);
            moved += 1;
        }
    }
    moved
}

fn initial_positions<R: Rng + ?Sized>(scheme: SchemeKind, config: &SystemConfig, rng: &mut R) -> Result<PositionSet> {
    match scheme {
        SchemeKind::Rand => random_positions(config, rng),
        _ => circle_packing_init(config.elements, config.region_size, config.min_spacing),
    }
}

/// Runs the alternating minimization for one scenario and scheme.
pub fn run_am<R: Rng + ?Sized>(scenario: &Scenario, scheme: SchemeKind, rng: &mut R) -> Result<SolverState> {
    let config = &scenario.config;
    let alpha = config.alpha;
    let noise = config.noise_power;
    let power = config.transmit_power;
    let s_c = scenario.pilot.s_c.clone();
    let (m, k, n) = (config.antennas, config.users, config.elements);

    let mut positions = initial_positions(scheme, config, rng)?;
    let mut channels = scenario.geometry.channels(&positions);
    let mut theta = CVector::from_element(n, Complex64::new(1.0, 0.0));
    let mut w = matched_filter(&effective_channel(&channels.g, &theta, &channels.h_rc), power);

    let design_opts = DesignOptions {
        restarts: config.sensing_restarts.max(1),
        ..Default::default()
    };
    let design = |ch: &ChannelSet,
                  positions: &PositionSet,
                  w: &CMatrix,
                  theta: &CVector,
                  warm: Option<&CVector>,
                  rng: &mut R|
     -> Result<(CVector, f64)> {
        let gx = &ch.g * (w * &s_c);
        let v = CVector::from_fn(n, |i, _| theta[i].conj() * gx[i]);
        let bank = SteeringBank::new(&scenario.grid, positions, config.wavelength);
        let r = design_reference_signal(
            &gx,
            &scenario.ideal,
            &bank,
            &config.targets,
            warm,
            Some(&v),
            &design_opts,
            rng,
        )?;
        Ok((r.s_r, r.beta))
    };

    let (mut s_r, mut beta) =
        design(&channels, &positions, &w, &theta, None, rng).map_err(|e| e.at_stage(0, "sensing"))?;
    let gx0 = &channels.g * (&w * &s_c);
    let mut omega =
        optimal_estimator(&s_c, &channels.h_rc, &theta, &gx0, noise).map_err(|e| e.at_stage(0, "estimator"))?;
    let initial = terms(alpha, noise, &channels, &w, &theta, omega, &s_r, &s_c);

    let alm = AlmOptions::with_tol(config.alm_tol());
    let manifold = ManifoldOptions::default();
    let pass = PassOptions {
        region: config.region_size,
        min_spacing: config.min_spacing,
        shuffle: config.shuffle_element_order,
    };
    let mut trace = Vec::new();
    let mut previous = initial.epsilon;
    let mut current = initial;
    let mut converged = false;
    let mut drift_violations = 0;
    let mut iteration = 0;

    while iteration < config.max_outer_iterations {
        iteration += 1;
        let it = iteration;
        let eval = |ch: &ChannelSet, w: &CMatrix, theta: &CVector, omega: f64, s_r: &CVector| {
            terms(alpha, noise, ch, w, theta, omega, s_r, &s_c)
        };

        // (1) reference signal
        let (sr_new, beta_new) =
            design(&channels, &positions, &w, &theta, Some(&s_r), rng).map_err(|e| e.at_stage(it, "sensing"))?;
        s_r = sr_new;
        beta = beta_new;
        let after_refresh = eval(&channels, &w, &theta, omega, &s_r).epsilon;
        let drift = after_refresh - previous;
        if drift > SR_DRIFT_TOL * previous.abs() {
            drift_violations += 1;
        }

        // (2) estimator
        let gx = &channels.g * (&w * &s_c);
        omega = optimal_estimator(&s_c, &channels.h_rc, &theta, &gx, noise).map_err(|e| e.at_stage(it, "estimator"))?;
        let after_omega = eval(&channels, &w, &theta, omega, &s_r).epsilon;

        // (3) phases
        let q1 = build_phase_quadratic(&gx, &channels.h_rc, &s_r, &s_c, omega, alpha);
        theta = optimize_phases(&q1, &theta, &manifold)
            .map_err(|e| e.at_stage(it, "phase"))?
            .theta;
        let after_theta = eval(&channels, &w, &theta, omega, &s_r).epsilon;

        // (4) beamformer
        let q2 = build_w_quadratic(&channels.g, &theta, &channels.h_rc, &s_r, &s_c, omega, alpha, power);
        let w_start = rescale(&vectorize(&w), power);
        let res = alm_optimize_w(&q2, &w_start, &alm).map_err(|e| e.at_stage(it, "beamformer"))?;
        w = unvectorize(&res.w, m, k);
        let after_w = eval(&channels, &w, &theta, omega, &s_r).epsilon;

        // (5) positions
        match scheme {
            SchemeKind::Proposed | SchemeKind::Dps => {
                let x = &w * &s_c;
                let ctx = build_position_context(&scenario.geometry, &x, &theta, &s_r, &s_c, omega, alpha);
                if scheme == SchemeKind::Proposed {
                    run_position_pass(&ctx, &mut positions, &pass, rng).map_err(|e| e.at_stage(it, "positions"))?;
                } else {
                    dps_position_pass(&ctx, &mut positions, config);
                }
                channels = scenario.geometry.channels(&positions);
            }
            SchemeKind::Conven | SchemeKind::Rand => {}
        }
        current = eval(&channels, &w, &theta, omega, &s_r);

        trace.push(TraceEntry {
            iteration: it,
            after_refresh,
            after_omega,
            after_theta,
            after_w,
            after_positions: current.epsilon,
            epsilon_r_tilde: current.epsilon_r_tilde,
            epsilon_c: current.epsilon_c,
            drift,
        });
        let change = (current.epsilon - previous).abs();
        previous = current.epsilon;
        if change < config.am_tol {
            converged = true;
            break;
        }
    }

    Ok(SolverState {
        w,
        theta,
        positions,
        omega,
        s_r,
        s_c,
        channels,
        beta,
        epsilon: current.epsilon,
        epsilon_r_tilde: current.epsilon_r_tilde,
        epsilon_c: current.epsilon_c,
        iteration,
        initial,
        trace,
        converged,
        drift_violations,
    })
}

fn rescale(w: &CVector, power: f64) -> CVector {
    let norm = w.norm();
    if norm > 0.0 {
        w * Complex64::from(power.sqrt() / norm)
    } else {
        CVector::from_element(w.len(), Complex64::from((power / w.len() as f64).sqrt()))
    }
}

/// Per-trial RNG streams: scenario draws and solver randomness are separate
/// so that every scheme sees the same users and pilot for a given trial.
pub fn trial_rngs(seed: u64, trial: usize) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut scenario = ChaCha8Rng::seed_from_u64(seed);
    scenario.set_stream(2 * trial as u64);
    let mut solver = ChaCha8Rng::seed_from_u64(seed);
    solver.set_stream(2 * trial as u64 + 1);
    (scenario, solver)
}

/// Noise stream for link-level evaluation of a trial, disjoint from the
/// streams of [`trial_rngs`].
pub fn noise_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((1u64 << 63) + trial as u64);
    rng
}

/// Runs `job` on a pool capped by FRIS_ISAC_THREADS when set.
pub fn with_thread_cap<T: Send>(job: impl FnOnce() -> T + Send) -> T {
    let cap = std::env::var("FRIS_ISAC_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok());
    match cap {
        Some(threads) if threads > 0 => match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            Ok(pool) => pool.install(job),
            Err(_) => job(),
        },
        _ => job(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialOutcome {
    pub trial: usize,
    pub initial: ObjectiveTerms,
    pub epsilon: f64,
    pub epsilon_r_tilde: f64,
    pub epsilon_c: f64,
    pub iterations: usize,
    pub converged: bool,
    pub drift_violations: usize,
    pub wall_time_s: f64,
    pub trace: Vec<TraceEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloReport {
    pub scheme: SchemeKind,
    pub trials: Vec<TrialOutcome>,
    /// (trial, message) of every failed trial.
    pub failures: Vec<(usize, String)>,
    pub epsilon: Summary,
    pub epsilon_r_tilde: Summary,
    pub epsilon_c: Summary,
    pub wall_time_s: Summary,
    pub iterations: Summary,
}

impl MonteCarloReport {
    pub fn epsilons(&self) -> Vec<f64> {
        self.trials.iter().map(|t| t.epsilon).collect()
    }
}

/// Runs one trial: draws the scenario from the trial's stream and solves.
pub fn run_trial(
    config: &SystemConfig,
    scheme: SchemeKind,
    trial: usize,
    constellation: Constellation,
) -> Result<(Scenario, SolverState, f64)> {
    let (mut scen_rng, mut solver_rng) = trial_rngs(config.seed, trial);
    let scenario = Scenario::draw(config, constellation, &mut scen_rng)?;
    let start = Instant::now();
    let state = run_am(&scenario, scheme, &mut solver_rng)?;
    Ok((scenario, state, start.elapsed().as_secs_f64()))
}

/// Independent seeded trials in parallel, collected in trial order.
pub fn monte_carlo(config: &SystemConfig, scheme: SchemeKind, trials: usize) -> Result<MonteCarloReport> {
    if trials == 0 {
        return Err(Error::domain("monte_carlo needs at least one trial"));
    }
    config.validate()?;
    let results: Vec<std::result::Result<TrialOutcome, (usize, String)>> = with_thread_cap(|| {
        (0..trials)
            .into_par_iter()
            .map(|t| match run_trial(config, scheme, t, Constellation::Qpsk) {
                Ok((_, state, secs)) => Ok(TrialOutcome {
                    trial: t,
                    initial: state.initial,
                    epsilon: state.epsilon,
                    epsilon_r_tilde: state.epsilon_r_tilde,
                    epsilon_c: state.epsilon_c,
                    iterations: state.iteration,
                    converged: state.converged,
                    drift_violations: state.drift_violations,
                    wall_time_s: secs,
                    trace: state.trace,
                }),
                Err(e) => Err((t, e.to_string())),
            })
            .collect()
    });
    let mut outcomes = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(o) => outcomes.push(o),
            Err(f) => failures.push(f),
        }
    }
    let collect = |f: fn(&TrialOutcome) -> f64| Summary::of(&outcomes.iter().map(f).collect::<Vec<_>>());
    Ok(MonteCarloReport {
        scheme,
        epsilon: collect(|t| t.epsilon),
        epsilon_r_tilde: collect(|t| t.epsilon_r_tilde),
        epsilon_c: collect(|t| t.epsilon_c),
        wall_time_s: collect(|t| t.wall_time_s),
        iterations: collect(|t| t.iterations as f64),
        trials: outcomes,
        failures,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BerPoint {
    pub noise_dbm: f64,
    pub constellation: Constellation,
    pub alpha: f64,
    pub count: BerCount,
    /// Mean over successful trials of the per-trial BER.
    pub mean_ber: f64,
    pub failures: usize,
}

/// Link-level bit error rate of the optimized system. The system is solved
/// at each noise level; the trial's symbol block is then sent `frames` times
/// with fresh receiver noise and demapped after the scalar estimator.
pub fn ber_experiment(
    config: &SystemConfig,
    scheme: SchemeKind,
    constellation: Constellation,
    noise_dbm: &[f64],
    trials: usize,
    frames: usize,
) -> Result<Vec<BerPoint>> {
    if trials == 0 {
        return Err(Error::domain("BER needs at least one trial"));
    }
    if frames == 0 {
        return Err(Error::domain("BER needs at least one frame"));
    }
    let mut points = Vec::with_capacity(noise_dbm.len());
    for &level in noise_dbm {
        let cfg = SystemConfig {
            noise_power: dbm_to_watts(level),
            ..config.clone()
        };
        cfg.validate()?;
        let per_trial: Vec<Option<BerCount>> = with_thread_cap(|| {
            (0..trials)
                .into_par_iter()
                .map(|t| {
                    let (scenario, state, _) = run_trial(&cfg, scheme, t, constellation).ok()?;
                    let gx = &state.channels.g * state.transmit();
                    let c = cascade(&state.channels.h_rc, &state.theta, &gx);
                    let mut rng = noise_rng(cfg.seed, t);
                    ber_frames(&scenario.pilot, &c, state.omega, cfg.noise_power, frames, &mut rng).ok()
                })
                .collect()
        });
        let mut count = BerCount::default();
        let mut bers = Vec::new();
        for c in per_trial.iter().flatten() {
            count.merge(*c);
            bers.push(c.ber());
        }
        let failures = per_trial.iter().filter(|c| c.is_none()).count();
        if bers.is_empty() {
            return Err(Error::NonConvergence {
                solver: "ber_experiment",
                iterations: trials,
                residual: f64::NAN,
            });
        }
        points.push(BerPoint {
            noise_dbm: level,
            constellation,
            alpha: cfg.alpha,
            count,
            mean_ber: Summary::of(&bers).mean,
            failures,
        });
    }
    Ok(points)
}
