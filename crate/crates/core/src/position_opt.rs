//! Element-position update: the per-element cosine-sum objective, its
//! derivatives, the quadratic surrogate with linearized spacing constraints,
//! and the circle-packing start.
//!
//! With every other variable fixed, moving element n changes the objective
//! only through
//!
//! ```text
//! f1(p) = -nu cos(xi + k d_r(p))
//!         + sum_k sum_{i != n} nu~_k cos(xi~_{i,k} + k dd_k(p))
//!         - sum_k nu-_k cos(xi-_k + k dd_k(p))
//! ```
//!
//! with k = 2 pi / lambda, d_r(p) = kappa_r . p and dd_k(p) = (kappa_r - kappa_c,k) . p.

use std::f64::consts::PI;

use nalgebra::{DVector, Matrix2};
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::channel::{ula_steering, CVector, LinkGeometry, Point2, PositionSet};
use crate::error::{Error, Result};
use crate::numerics::{active_set_qp, LinearRow, QpProblem};

pub const DELTA_FLOOR: f64 = 1e-6;
pub const MAX_DELTA_DOUBLINGS: usize = 30;
/// Tolerance of the post-step feasibility check, meters.
pub const FEASIBILITY_SLACK: f64 = 1e-12;

/// Position-independent constants of the reduced objective.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionContext {
    pub wavenumber: f64,
    pub alpha: f64,
    pub omega: f64,
    /// Entries g s_r,n^* theta_n^* of the conjugated a~_t, with g = a_t^H x.
    pub a_t_tilde: CVector,
    /// a_t^H x.
    pub gain: Complex64,
    /// |a_t^H x|^2.
    pub c_x: f64,
    /// omega^2 zeta_G c_x.
    pub c0: f64,
    /// S_{n,k} = theta_n^* g s_c,k^* sqrt(zeta_k), N x K.
    pub s: nalgebra::DMatrix<Complex64>,
    pub theta: CVector,
    pub kappa_r: Point2,
    pub kappa_c: Vec<Point2>,
    pub delta_kappa: Vec<Point2>,
    pub zeta_g: f64,
    pub zeta: Vec<f64>,
}

impl PositionContext {
    pub fn elements(&self) -> usize {
        self.theta.len()
    }

    pub fn users(&self) -> usize {
        self.zeta.len()
    }
}

/// Builds the constants from the transmit signal x = W s_c and the fixed
/// variables.
pub fn build_position_context(
    geometry: &LinkGeometry,
    x: &CVector,
    theta: &CVector,
    s_r: &CVector,
    s_c: &CVector,
    omega: f64,
    alpha: f64,
) -> PositionContext {
    let a_t = ula_steering(geometry.departure, geometry.antennas);
    let gain = a_t.dotc(x);
    let c_x = gain.norm_sqr();
    let n = theta.len();
    let k = s_c.len();
    let a_t_tilde = CVector::from_fn(n, |i, _| gain * s_r[i].conj() * theta[i].conj());
    let zeta = geometry.user_gains.clone();
    let s = nalgebra::DMatrix::from_fn(n, k, |i, j| theta[i].conj() * gain * s_c[j].conj() * zeta[j].sqrt());
    let kappa_r = geometry.bs_direction.cosines();
    let kappa_c: Vec<Point2> = geometry.user_directions.iter().map(|d| d.cosines()).collect();
    let delta_kappa = kappa_c.iter().map(|kc| kappa_r - kc).collect();
    PositionContext {
        wavenumber: 2.0 * PI / geometry.wavelength,
        alpha,
        omega,
        a_t_tilde,
        gain,
        c_x,
        c0: omega * omega * geometry.zeta_g * c_x,
        s,
        theta: theta.clone(),
        kappa_r,
        kappa_c,
        delta_kappa,
        zeta_g: geometry.zeta_g,
        zeta,
    }
}

/// The reduced objective over all positions, up to an additive constant.
pub fn f0_value(ctx: &PositionContext, positions: &PositionSet) -> f64 {
    let k0 = ctx.wavenumber;
    let n = ctx.elements();
    let mut value = 0.0;
    for i in 0..n {
        let p = positions.get(i);
        let t = ctx.a_t_tilde[i] * Complex64::from_polar(1.0, k0 * ctx.kappa_r.dot(&p));
        value -= 2.0 * ctx.alpha * ctx.zeta_g.sqrt() * t.re;
    }
    for k in 0..ctx.users() {
        let mut sum = Complex64::new(0.0, 0.0);
        let mut cross = Complex64::new(0.0, 0.0);
        for i in 0..n {
            let ph = Complex64::from_polar(1.0, k0 * ctx.delta_kappa[k].dot(&positions.get(i)));
            sum += ctx.theta[i].conj() * ph;
            cross += ctx.s[(i, k)] * ph;
        }
        value += (1.0 - ctx.alpha) * ctx.c0 * ctx.zeta[k] * sum.norm_sqr();
        value -= 2.0 * (1.0 - ctx.alpha) * ctx.omega * ctx.zeta_g.sqrt() * cross.re;
    }
    value
}

/// Amplitudes and phases of the three cosine families for one element.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateParams {
    pub element: usize,
    pub wavenumber: f64,
    pub nu: f64,
    pub xi: f64,
    pub kappa_r: Point2,
    pub delta_kappa: Vec<Point2>,
    pub nu_tilde: Vec<f64>,
    /// Phases of c~_{i,n,k} = theta_i theta_n^* exp(-j k dd_{k,i}), indexed
    /// [k][i] over the other elements.
    pub xi_tilde: Vec<Vec<f64>>,
    pub nu_bar: Vec<f64>,
    pub xi_bar: Vec<f64>,
}

pub fn per_element_params(ctx: &PositionContext, n: usize, positions: &PositionSet) -> SurrogateParams {
    let k0 = ctx.wavenumber;
    let t = ctx.a_t_tilde[n];
    let k_users = ctx.users();
    let mut xi_tilde = Vec::with_capacity(k_users);
    let mut nu_tilde = Vec::with_capacity(k_users);
    let mut nu_bar = Vec::with_capacity(k_users);
    let mut xi_bar = Vec::with_capacity(k_users);
    for k in 0..k_users {
        nu_tilde.push(2.0 * (1.0 - ctx.alpha) * ctx.c0 * ctx.zeta[k]);
        let phases = (0..ctx.elements())
            .filter(|&i| i != n)
            .map(|i| {
                let dd = ctx.delta_kappa[k].dot(&positions.get(i));
                let c = ctx.theta[i] * ctx.theta[n].conj() * Complex64::from_polar(1.0, -k0 * dd);
                c.arg()
            })
            .collect();
        xi_tilde.push(phases);
        let s = ctx.s[(n, k)];
        nu_bar.push(2.0 * (1.0 - ctx.alpha) * ctx.omega.abs() * ctx.zeta_g.sqrt() * s.norm());
        let shift = if ctx.omega < 0.0 { PI } else { 0.0 };
        xi_bar.push(wrap_phase(s.arg() + shift));
    }
    SurrogateParams {
        element: n,
        wavenumber: k0,
        nu: 2.0 * ctx.alpha * ctx.zeta_g.sqrt() * t.norm(),
        xi: t.arg(),
        kappa_r: ctx.kappa_r,
        delta_kappa: ctx.delta_kappa.clone(),
        nu_tilde,
        xi_tilde,
        nu_bar,
        xi_bar,
    }
}

fn wrap_phase(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}

/// Visits every cosine term as (sign * amplitude, phase, direction cosines).
fn for_each_term(params: &SurrogateParams, mut visit: impl FnMut(f64, f64, Point2)) {
    visit(-params.nu, params.xi, params.kappa_r);
    for (k, dk) in params.delta_kappa.iter().enumerate() {
        for &xi in &params.xi_tilde[k] {
            visit(params.nu_tilde[k], xi, *dk);
        }
        visit(-params.nu_bar[k], params.xi_bar[k], *dk);
    }
}

pub fn f1_value(params: &SurrogateParams, p: &Point2) -> f64 {
    let k0 = params.wavenumber;
    let mut value = 0.0;
    for_each_term(params, |amp, xi, kappa| value += amp * (xi + k0 * kappa.dot(p)).cos());
    value
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F1Derivatives {
    pub gradient: Point2,
    pub hessian: Matrix2<f64>,
    /// max(||hessian||_F, DELTA_FLOOR).
    pub delta: f64,
}

pub fn f1_derivatives(params: &SurrogateParams, p: &Point2) -> F1Derivatives {
    let k0 = params.wavenumber;
    let mut gradient = Point2::zeros();
    let mut hessian = Matrix2::zeros();
    for_each_term(params, |amp, xi, kappa| {
        let arg = xi + k0 * kappa.dot(p);
        gradient -= kappa * (amp * k0 * arg.sin());
        hessian -= kappa * kappa.transpose() * (amp * k0 * k0 * arg.cos());
    });
    F1Derivatives {
        gradient,
        hessian,
        delta: hessian.norm().max(DELTA_FLOOR),
    }
}

/// Global bound on the spectral norm of the Hessian of f1.
pub fn curvature_bound(params: &SurrogateParams) -> f64 {
    let mut bound = 0.0;
    for_each_term(params, |amp, _, kappa| bound += amp.abs() * kappa.norm_squared());
    params.wavenumber * params.wavenumber * bound
}

/// Affine under-estimators of the spacing constraints plus the region box.
pub fn linearize_constraints(
    p_prev: &Point2,
    others: &[Point2],
    min_spacing: f64,
    region: f64,
) -> Result<Vec<LinearRow>> {
    let mut rows = Vec::with_capacity(others.len() + 4);
    for q in others {
        let diff = p_prev - q;
        let dist = diff.norm();
        if dist < 1e-12 {
            return Err(Error::domain("coincident elements in constraint linearization"));
        }
        let normal = diff / dist;
        rows.push(LinearRow::new(
            DVector::from_column_slice(normal.as_slice()),
            min_spacing + normal.dot(q),
        ));
    }
    for axis in 0..2 {
        let mut e = DVector::zeros(2);
        e[axis] = 1.0;
        rows.push(LinearRow::new(e.clone(), 0.0));
        rows.push(LinearRow::new(-e, -region));
    }
    Ok(rows)
}

/// min g.(p - p0) + delta/2 |p - p0|^2 over the rows.
pub fn solve_position_qp(gradient: &Point2, delta: f64, p0: &Point2, rows: &[LinearRow]) -> Result<Point2> {
    let qp = QpProblem {
        curvature: delta,
        linear: DVector::from_column_slice(gradient.as_slice()),
        center: DVector::from_column_slice(p0.as_slice()),
        rows: rows.to_vec(),
        bounds: Vec::new(),
    };
    let sol = active_set_qp(&qp, &qp.center)?;
    Ok(Point2::new(sol.point[0], sol.point[1]))
}

/// Square-lattice packing: ceil(sqrt(N)) columns of pitch A / columns,
/// filled row by row with the occupied block centered in the region.
pub fn circle_packing_init(n: usize, region: f64, min_spacing: f64) -> Result<PositionSet> {
    if !packing_feasible(n, region, min_spacing) {
        return Err(Error::Infeasible(format!(
            "{n} elements do not fit at spacing {min_spacing} in a {region} region"
        )));
    }
    let cols = lattice_columns(n);
    let pitch = region / cols as f64;
    let rows = n.div_ceil(cols);
    let y0 = 0.5 * (region - rows as f64 * pitch);
    let mut points = Vec::with_capacity(n);
    for r in 0..rows {
        let in_row = (n - r * cols).min(cols);
        let x0 = 0.5 * (region - in_row as f64 * pitch);
        for c in 0..in_row {
            points.push(Point2::new(
                x0 + (c as f64 + 0.5) * pitch,
                y0 + (r as f64 + 0.5) * pitch,
            ));
        }
    }
    Ok(PositionSet::new(points))
}

fn lattice_columns(n: usize) -> usize {
    let mut c = (n as f64).sqrt().floor() as usize;
    while c * c < n {
        c += 1;
    }
    c.max(1)
}

/// Whether [`circle_packing_init`] can place `n` elements.
pub fn packing_feasible(n: usize, region: f64, min_spacing: f64) -> bool {
    n >= 1 && region / lattice_columns(n) as f64 >= min_spacing * (1.0 - 1e-12)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PassOptions {
    pub region: f64,
    pub min_spacing: f64,
    pub shuffle: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PassReport {
    /// Elements whose committed position changed.
    pub moved: usize,
    /// Total delta doublings over the pass.
    pub doublings: usize,
    /// Elements where every doubling failed and the old position was kept.
    pub rejected: usize,
    /// Sum of f1 decreases over the pass.
    pub surrogate_decrease: f64,
}

/// One majorize-minimize step per element, updating `positions` in place.
pub fn run_position_pass<R: Rng + ?Sized>(
    ctx: &PositionContext,
    positions: &mut PositionSet,
    opts: &PassOptions,
    rng: &mut R,
) -> Result<PassReport> {
    let n = positions.len();
    let mut order: Vec<usize> = (0..n).collect();
    if opts.shuffle {
        order.shuffle(rng);
    }
    let mut report = PassReport::default();
    for &idx in &order {
        separate_if_coincident(positions, idx, ctx.wavenumber, rng);
        let params = per_element_params(ctx, idx, positions);
        let p0 = positions.get(idx);
        let f_start = f1_value(&params, &p0);
        let deriv = f1_derivatives(&params, &p0);
        let others: Vec<Point2> = (0..n).filter(|&i| i != idx).map(|i| positions.get(i)).collect();
        let rows = linearize_constraints(&p0, &others, opts.min_spacing, opts.region)?;
        let mut delta = deriv.delta;
        let mut committed = false;
        for attempt in 0..=MAX_DELTA_DOUBLINGS {
            let p = solve_position_qp(&deriv.gradient, delta, &p0, &rows)?;
            let f_new = f1_value(&params, &p);
            if f_new <= f_start && truly_feasible(&p, &others, opts) {
                if p != p0 {
                    report.moved += 1;
                }
                report.surrogate_decrease += f_start - f_new;
                positions.set(idx, p);
                committed = true;
                break;
            }
            if attempt < MAX_DELTA_DOUBLINGS {
                delta *= 2.0;
                report.doublings += 1;
            }
        }
        if !committed {
            report.rejected += 1;
        }
    }
    Ok(report)
}

/// Checks the exact region and spacing constraints, which the linearized
/// rows only approximate once rounding enters.
fn truly_feasible(p: &Point2, others: &[Point2], opts: &PassOptions) -> bool {
    let inside = (-FEASIBILITY_SLACK..=opts.region + FEASIBILITY_SLACK).contains(&p.x)
        && (-FEASIBILITY_SLACK..=opts.region + FEASIBILITY_SLACK).contains(&p.y);
    inside
        && others
            .iter()
            .all(|q| (p - q).norm() >= opts.min_spacing - FEASIBILITY_SLACK)
}

/// Nudges element `idx` by 1e-6 lambda when it sits on top of another one.
fn separate_if_coincident<R: Rng + ?Sized>(positions: &mut PositionSet, idx: usize, wavenumber: f64, rng: &mut R) {
    let p = positions.get(idx);
    let clash = (0..positions.len()).any(|i| i != idx && (positions.get(i) - p).norm() < 1e-9);
    if clash {
        let lambda = 2.0 * PI / wavenumber;
        let t: f64 = rng.random_range(0.0..2.0 * PI);
        positions.set(idx, p + Point2::new(t.cos(), t.sin()) * (1e-6 * lambda));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::Direction;
    use crate::comm::comm_mse;
    use crate::config::SystemConfig;
    use crate::sensing::sensing_mse;
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const LAMBDA: f64 = 0.125;

    struct Fixture {
        geometry: LinkGeometry,
        w: DMatrix<Complex64>,
        theta: CVector,
        s_r: CVector,
        s_c: CVector,
        omega: f64,
        alpha: f64,
        sigma: f64,
    }

    fn cvec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> CVector {
        CVector::from_fn(n, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * scale
        })
    }

    fn fixture(seed: u64, n: usize) -> Fixture {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let config = SystemConfig::default();
        let users = vec![
            [30.0, 100.0, 0.0],
            [22.0, 95.0, 1.0],
            [36.0, 104.0, -2.0],
            [31.0, 92.0, 0.5],
        ];
        let geometry = LinkGeometry::new(&config, &users).unwrap();
        let m = config.antennas;
        let w = DMatrix::from_fn(m, 4, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * 0.1
        });
        Fixture {
            geometry,
            w,
            theta: CVector::from_fn(n, |_, _| Complex64::from_polar(1.0, rng.random_range(-3.0..3.0))),
            s_r: cvec(&mut rng, n, 0.01),
            s_c: cvec(&mut rng, 4, 1.0),
            omega: rng.random_range(-3000.0..3000.0),
            alpha: rng.random_range(0.0..1.0),
            sigma: 1e-9,
        }
    }

    fn epsilon(f: &Fixture, positions: &PositionSet) -> f64 {
        let ch = f.geometry.channels(positions);
        let gx = &ch.g * (&f.w * &f.s_c);
        f.alpha * sensing_mse(&f.s_r, &f.theta, &gx)
            + (1.0 - f.alpha) * comm_mse(&f.s_c, f.omega, &ch.h_rc, &f.theta, &gx, f.sigma)
    }

    fn context(f: &Fixture) -> PositionContext {
        build_position_context(
            &f.geometry,
            &(&f.w * &f.s_c),
            &f.theta,
            &f.s_r,
            &f.s_c,
            f.omega,
            f.alpha,
        )
    }

    fn random_positions(rng: &mut ChaCha8Rng, n: usize) -> PositionSet {
        PositionSet::new(
            (0..n)
                .map(|_| Point2::new(rng.random_range(0.0..0.5), rng.random_range(0.0..0.5)))
                .collect(),
        )
    }

    fn random_params(rng: &mut ChaCha8Rng, others: usize, users: usize) -> SurrogateParams {
        let dir =
            |rng: &mut ChaCha8Rng| Direction::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)).cosines();
        let kappa_r = dir(rng);
        SurrogateParams {
            element: 0,
            wavenumber: 2.0 * PI / LAMBDA,
            nu: rng.random_range(0.0..1.0),
            xi: rng.random_range(-PI..PI),
            kappa_r,
            delta_kappa: (0..users).map(|_| kappa_r - dir(rng)).collect(),
            nu_tilde: (0..users).map(|_| rng.random_range(0.0..1.0)).collect(),
            xi_tilde: (0..users)
                .map(|_| (0..others).map(|_| rng.random_range(-PI..PI)).collect())
                .collect(),
            nu_bar: (0..users).map(|_| rng.random_range(0.0..1.0)).collect(),
            xi_bar: (0..users).map(|_| rng.random_range(-PI..PI)).collect(),
        }
    }

    #[test]
    fn alpha_one_leaves_only_the_sensing_term() {
        let mut f = fixture(1, 6);
        f.alpha = 1.0;
        let ctx = context(&f);
        let pos = circle_packing_init(6, 4.0 * LAMBDA, LAMBDA / 2.0).unwrap();
        let params = per_element_params(&ctx, 2, &pos);
        assert!(params.nu > 0.0);
        assert!(params.nu_tilde.iter().all(|&v| v == 0.0));
        assert!(params.nu_bar.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn c_tilde_has_unit_amplitude() {
        let f = fixture(2, 5);
        let ctx = context(&f);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pos = random_positions(&mut rng, 5);
        for k in 0..4 {
            for i in 0..5 {
                let dd = ctx.delta_kappa[k].dot(&pos.get(i));
                let c = ctx.theta[i] * ctx.theta[0].conj() * Complex64::from_polar(1.0, -ctx.wavenumber * dd);
                assert!((c.norm() - 1.0).abs() < 1e-12);
            }
        }
        assert!(ctx.c_x >= 0.0 && ctx.c0 >= 0.0);
        for kc in &ctx.kappa_c {
            assert!(kc.x.abs() <= 1.0 && kc.y.abs() <= 1.0);
        }
    }

    #[test]
    fn no_users_leaves_one_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = random_params(&mut rng, 4, 0);
        let p = Point2::new(0.1, 0.2);
        let expected = -params.nu * (params.xi + params.wavenumber * params.kappa_r.dot(&p)).cos();
        assert!((f1_value(&params, &p) - expected).abs() < 1e-15);
    }

    #[test]
    fn f1_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut params = random_params(&mut rng, 3, 2);
        params.nu = 0.0;
        params.nu_tilde = vec![0.0; 2];
        params.nu_bar = vec![0.0; 2];
        let p = Point2::new(0.3, 0.1);
        assert_eq!(f1_value(&params, &p), 0.0);
        let d = f1_derivatives(&params, &p);
        assert_eq!(d.gradient.norm(), 0.0);
        assert_eq!(d.hessian.norm(), 0.0);
        assert_eq!(d.delta, DELTA_FLOOR);

        let single = SurrogateParams {
            element: 0,
            wavenumber: 1.0,
            nu: 1.0,
            xi: 0.0,
            kappa_r: Point2::new(0.5, 0.5),
            delta_kappa: vec![],
            nu_tilde: vec![],
            xi_tilde: vec![],
            nu_bar: vec![],
            xi_bar: vec![],
        };
        assert_eq!(f1_value(&single, &Point2::zeros()), -1.0);
    }

    #[test]
    fn f1_matches_term_by_term_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let params = random_params(&mut rng, 5, 3);
        let p = Point2::new(0.21, 0.37);
        let k0 = params.wavenumber;
        let mut oracle = -params.nu * (params.xi + k0 * (params.kappa_r.x * p.x + params.kappa_r.y * p.y)).cos();
        for k in 0..3 {
            let dd = params.delta_kappa[k].x * p.x + params.delta_kappa[k].y * p.y;
            for i in 0..5 {
                oracle += params.nu_tilde[k] * (params.xi_tilde[k][i] + k0 * dd).cos();
            }
            oracle -= params.nu_bar[k] * (params.xi_bar[k] + k0 * dd).cos();
        }
        assert!((f1_value(&params, &p) - oracle).abs() < 1e-12);
    }

    #[test]
    fn f0_differences_match_full_objective() {
        for seed in 0..10 {
            let f = fixture(10 + seed, 8);
            let ctx = context(&f);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_positions(&mut rng, 8);
            let b = random_positions(&mut rng, 8);
            let lhs = f0_value(&ctx, &a) - f0_value(&ctx, &b);
            let rhs = epsilon(&f, &a) - epsilon(&f, &b);
            assert!(
                (lhs - rhs).abs() <= 1e-8 * rhs.abs().max(1e-12),
                "seed {seed}: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn f1_differences_match_full_objective() {
        for seed in 0..10 {
            let f = fixture(30 + seed, 7);
            let ctx = context(&f);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let base = random_positions(&mut rng, 7);
            let n = seed as usize % 7;
            let params = per_element_params(&ctx, n, &base);
            let mut moved = base.clone();
            let q = Point2::new(rng.random_range(0.0..0.5), rng.random_range(0.0..0.5));
            moved.set(n, q);
            let lhs = f1_value(&params, &q) - f1_value(&params, &base.get(n));
            let rhs = epsilon(&f, &moved) - epsilon(&f, &base);
            assert!(
                (lhs - rhs).abs() <= 1e-8 * rhs.abs().max(1e-12),
                "seed {seed}: {lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn linearized_rows_examples() {
        let p = Point2::new(0.2, 0.2);
        let others = [Point2::new(0.3, 0.2), Point2::new(0.2, 0.05)];
        let rows = linearize_constraints(&p, &others, 0.0625, 0.5).unwrap();
        assert_eq!(rows.len(), 6);
        let pv = DVector::from_column_slice(p.as_slice());
        for (row, q) in rows.iter().zip(&others) {
            assert!((row.normal.dot(&pv) - row.offset + 0.0625 - (p - q).norm()).abs() < 1e-14);
        }
        assert!(linearize_constraints(&p, &[p], 0.1, 0.5).is_err());
    }

    #[test]
    fn linearized_set_is_inside_true_set() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let dd = LAMBDA / 2.0;
        for _ in 0..50 {
            let pos = circle_packing_init(9, 4.0 * LAMBDA, dd).unwrap();
            let mut jittered = pos.clone();
            for i in 0..9 {
                let p = pos.get(i) + Point2::new(rng.random_range(-0.02..0.02), rng.random_range(-0.02..0.02));
                jittered.set(i, p);
            }
            if !jittered.is_feasible(4.0 * LAMBDA, dd, 0.0) {
                continue;
            }
            let others: Vec<Point2> = (1..9).map(|i| jittered.get(i)).collect();
            let rows = linearize_constraints(&jittered.get(0), &others, dd, 4.0 * LAMBDA).unwrap();
            for _ in 0..2000 {
                let z = Point2::new(rng.random_range(0.0..0.5), rng.random_range(0.0..0.5));
                let zv = DVector::from_column_slice(z.as_slice());
                if rows.iter().all(|r| r.slack(&zv) >= 0.0) {
                    assert!(others.iter().all(|q| (z - q).norm() >= dd - 1e-12));
                }
            }
        }
    }

    #[test]
    fn qp_examples() {
        let p0 = Point2::new(0.25, 0.25);
        let rows = linearize_constraints(&p0, &[Point2::new(0.1, 0.25)], 0.0625, 0.5).unwrap();
        let p = solve_position_qp(&Point2::zeros(), 1.0, &p0, &rows).unwrap();
        assert!((p - p0).norm() < 1e-15);
        let g = Point2::new(-0.01, 0.02);
        let p = solve_position_qp(&g, 2.0, &p0, &rows).unwrap();
        assert!((p - (p0 - g / 2.0)).norm() < 1e-9);
    }

    #[test]
    fn qp_matches_grid_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let region = 0.5;
        let dd = 0.0625;
        for _ in 0..10 {
            let p0 = Point2::new(0.25, 0.25);
            let others: Vec<Point2> = (0..3)
                .map(|_| {
                    let t: f64 = rng.random_range(0.0..2.0 * PI);
                    p0 + Point2::new(t.cos(), t.sin()) * rng.random_range(dd..0.1)
                })
                .collect();
            let rows = linearize_constraints(&p0, &others, dd, region).unwrap();
            let g = Point2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let delta = rng.random_range(50.0..200.0);
            let p = solve_position_qp(&g, delta, &p0, &rows).unwrap();
            let obj = |q: &Point2| g.dot(&(q - p0)) + 0.5 * delta * (q - p0).norm_squared();
            // 0.1 mm grid over a 6 cm window around p0, which holds the
            // unconstrained step ||g||/delta <= 2.9 cm.
            let h = 1e-4;
            let mut best = f64::INFINITY;
            for i in -300..=300 {
                for j in -300..=300 {
                    let q = p0 + Point2::new(i as f64 * h, j as f64 * h);
                    let qv = DVector::from_column_slice(q.as_slice());
                    if rows.iter().all(|r| r.slack(&qv) >= 0.0) {
                        best = best.min(obj(&q));
                    }
                }
            }
            assert!(obj(&p) <= best + 1e-12);
            assert!(best - obj(&p) <= (g.norm() + delta * 0.05) * h * 2.0);
            assert!(obj(&p) <= 0.0);
        }
    }

    #[test]
    fn packing_examples() {
        let one = circle_packing_init(1, 0.5, 0.0625).unwrap();
        assert!((one.get(0) - Point2::new(0.25, 0.25)).norm() < 1e-15);
        let grid = circle_packing_init(16, 4.0 * LAMBDA, LAMBDA / 2.0).unwrap();
        assert!((grid.min_pairwise_distance() - LAMBDA).abs() < 1e-12);
        assert!((grid.get(0) - Point2::new(LAMBDA / 2.0, LAMBDA / 2.0)).norm() < 1e-15);
        assert!(circle_packing_init(65, 4.0 * LAMBDA, LAMBDA / 2.0).is_err());
        assert!(packing_feasible(64, 4.0 * LAMBDA, LAMBDA / 2.0));
    }

    #[test]
    fn packing_is_feasible_up_to_the_bound() {
        let (region, dd) = (4.0 * LAMBDA, LAMBDA / 2.0);
        for n in 1..=64 {
            let pos = circle_packing_init(n, region, dd).unwrap();
            assert_eq!(pos.len(), n);
            for i in 0..n {
                for j in i + 1..n {
                    assert!((pos.get(i) - pos.get(j)).norm() >= dd - 1e-12);
                }
                let p = pos.get(i);
                assert!(p.x >= dd / 2.0 - 1e-12 && p.x <= region - dd / 2.0 + 1e-12);
                assert!(p.y >= dd / 2.0 - 1e-12 && p.y <= region - dd / 2.0 + 1e-12);
            }
        }
    }

    #[test]
    fn zero_gradient_pass_keeps_positions() {
        let mut f = fixture(8, 4);
        f.alpha = 1.0;
        f.s_r = CVector::zeros(4);
        let ctx = context(&f);
        let mut pos = circle_packing_init(4, 4.0 * LAMBDA, LAMBDA / 2.0).unwrap();
        let before = pos.clone();
        let opts = PassOptions {
            region: 4.0 * LAMBDA,
            min_spacing: LAMBDA / 2.0,
            shuffle: false,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        run_position_pass(&ctx, &mut pos, &opts, &mut rng).unwrap();
        assert_eq!(pos, before);
    }

    #[test]
    fn single_element_sensing_move_does_not_increase_error() {
        let mut f = fixture(9, 1);
        f.alpha = 1.0;
        let ctx = context(&f);
        let mut pos = circle_packing_init(1, 4.0 * LAMBDA, LAMBDA / 2.0).unwrap();
        let before = epsilon(&f, &pos);
        let opts = PassOptions {
            region: 4.0 * LAMBDA,
            min_spacing: LAMBDA / 2.0,
            shuffle: false,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        run_position_pass(&ctx, &mut pos, &opts, &mut rng).unwrap();
        assert!(epsilon(&f, &pos) <= before + 1e-15);
    }

    #[test]
    fn pass_is_monotone_and_feasible() {
        let (region, dd) = (4.0 * LAMBDA, LAMBDA / 2.0);
        for seed in 0..10 {
            let f = fixture(50 + seed, 16);
            let ctx = context(&f);
            let mut pos = circle_packing_init(16, region, dd).unwrap();
            let before = epsilon(&f, &pos);
            let opts = PassOptions {
                region,
                min_spacing: dd,
                shuffle: seed % 2 == 1,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            run_position_pass(&ctx, &mut pos, &opts, &mut rng).unwrap();
            assert!(epsilon(&f, &pos) <= before + 1e-8 * before.abs());
            pos.check_feasible(region, dd, 1e-9).unwrap();
        }
    }

    #[test]
    fn pass_from_tight_packing_is_monotone_and_feasible() {
        // 64 elements in 4 lambda sit exactly at the minimum spacing.
        let (region, dd) = (4.0 * LAMBDA, LAMBDA / 2.0);
        for seed in 0..3 {
            let f = fixture(70 + seed, 64);
            let ctx = context(&f);
            let mut pos = circle_packing_init(64, region, dd).unwrap();
            let before = epsilon(&f, &pos);
            let opts = PassOptions {
                region,
                min_spacing: dd,
                shuffle: false,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            run_position_pass(&ctx, &mut pos, &opts, &mut rng).unwrap();
            assert!(epsilon(&f, &pos) <= before + 1e-8 * before.abs());
            pos.check_feasible(region, dd, 1e-9).unwrap();
        }
    }

    proptest! {
        #[test]
        fn derivatives_match_finite_differences(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let params = random_params(&mut rng, 3, 2);
            let p = Point2::new(rng.random_range(0.0..0.5), rng.random_range(0.0..0.5));
            let d = f1_derivatives(&params, &p);
            let h = 1e-6;
            let e = [Point2::new(h, 0.0), Point2::new(0.0, h)];
            let scale_g = params.wavenumber * (params.nu + params.nu_tilde.iter().sum::<f64>() * 3.0 + params.nu_bar.iter().sum::<f64>());
            for (a, step) in e.iter().enumerate() {
                let fd = (f1_value(&params, &(p + step)) - f1_value(&params, &(p - step))) / (2.0 * h);
                prop_assert!((fd - d.gradient[a]).abs() <= 1e-6 * scale_g.max(d.gradient.norm()));
            }
            let hh = 1e-5;
            let e2 = [Point2::new(hh, 0.0), Point2::new(0.0, hh)];
            let scale_h = scale_g * params.wavenumber;
            for a in 0..2 {
                for b in 0..2 {
                    let fd = (f1_value(&params, &(p + e2[a] + e2[b])) - f1_value(&params, &(p + e2[a] - e2[b]))
                        - f1_value(&params, &(p - e2[a] + e2[b])) + f1_value(&params, &(p - e2[a] - e2[b])))
                        / (4.0 * hh * hh);
                    prop_assert!((fd - d.hessian[(a, b)]).abs() <= 1e-4 * scale_h);
                }
            }
            prop_assert!((d.hessian[(0, 1)] - d.hessian[(1, 0)]).abs() < 1e-12 * scale_h);
            let spectral = d.hessian.symmetric_eigen().eigenvalues.amax();
            prop_assert!(spectral <= curvature_bound(&params) * (1.0 + 1e-12));
        }

        #[test]
        fn surrogate_is_tangent(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let params = random_params(&mut rng, 4, 3);
            let p0 = Point2::new(rng.random_range(0.0..0.5), rng.random_range(0.0..0.5));
            let d = f1_derivatives(&params, &p0);
            let f0 = f1_value(&params, &p0);
            let surrogate = |p: &Point2| f0 + d.gradient.dot(&(p - p0)) + 0.5 * d.delta * (p - p0).norm_squared();
            prop_assert!((surrogate(&p0) - f0).abs() < 1e-10);
            let h = 1e-7;
            let fd = (surrogate(&(p0 + Point2::new(h, 0.0))) - surrogate(&(p0 - Point2::new(h, 0.0)))) / (2.0 * h);
            prop_assert!((fd - d.gradient.x).abs() < 1e-6 * d.gradient.norm().max(1.0));
        }
    }
}
