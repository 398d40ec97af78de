//! Solver primitives: a small active-set QP, L-BFGS, Riemannian descent on
//! the unit-modulus torus, the dominant Hermitian eigenpair and minimization
//! on a sphere.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::channel::{CMatrix, CVector};
use crate::error::{Error, Result};

/// Stacks a complex vector as [Re; Im].
pub fn complex_to_real(v: &CVector) -> DVector<f64> {
    let n = v.len();
    DVector::from_fn(2 * n, |i, _| if i < n { v[i].re } else { v[i - n].im })
}

/// Inverse of [`complex_to_real`].
pub fn real_to_complex(v: &DVector<f64>) -> CVector {
    let n = v.len() / 2;
    CVector::from_fn(n, |i, _| Complex64::new(v[i], v[i + n]))
}

/// Real embedding [[Re A, -Im A], [Im A, Re A]] of a complex matrix.
pub fn real_embedding(a: &CMatrix) -> DMatrix<f64> {
    let (r, c) = a.shape();
    DMatrix::from_fn(2 * r, 2 * c, |i, j| {
        let z = a[(i % r, j % c)];
        match (i < r, j < c) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    })
}

// ---------------------------------------------------------------------------
// Active-set QP

/// Affine inequality `normal . p >= offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRow {
    pub normal: DVector<f64>,
    pub offset: f64,
}

impl LinearRow {
    pub fn new(normal: DVector<f64>, offset: f64) -> Self {
        Self { normal, offset }
    }

    /// Signed slack, nonnegative when satisfied.
    pub fn slack(&self, p: &DVector<f64>) -> f64 {
        self.normal.dot(p) - self.offset
    }
}

/// min linear.(p - center) + curvature/2 |p - center|^2 subject to the rows
/// and per-coordinate bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub curvature: f64,
    pub linear: DVector<f64>,
    pub center: DVector<f64>,
    pub rows: Vec<LinearRow>,
    /// Empty for no bounds, otherwise one (lower, upper) pair per coordinate.
    pub bounds: Vec<(f64, f64)>,
}

impl QpProblem {
    pub fn dimension(&self) -> usize {
        self.center.len()
    }

    pub fn objective(&self, p: &DVector<f64>) -> f64 {
        let d = p - &self.center;
        self.linear.dot(&d) + 0.5 * self.curvature * d.norm_squared()
    }

    /// Unconstrained minimizer.
    pub fn target(&self) -> DVector<f64> {
        &self.center - &self.linear / self.curvature
    }

    /// Rows plus the bound rows, in that order.
    pub fn all_rows(&self) -> Vec<LinearRow> {
        let d = self.dimension();
        let mut rows = self.rows.clone();
        for (i, &(lo, hi)) in self.bounds.iter().enumerate() {
            let mut e = DVector::zeros(d);
            e[i] = 1.0;
            rows.push(LinearRow::new(e.clone(), lo));
            rows.push(LinearRow::new(-e, -hi));
        }
        rows
    }

    fn check(&self) -> Result<()> {
        if !(self.curvature > 0.0) || !self.curvature.is_finite() {
            return Err(Error::domain(format!(
                "QP curvature must be positive, got {}",
                self.curvature
            )));
        }
        let d = self.dimension();
        if self.linear.len() != d
            || self.rows.iter().any(|r| r.normal.len() != d)
            || !(self.bounds.is_empty() || self.bounds.len() == d)
        {
            return Err(Error::domain("QP dimensions are inconsistent"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub point: DVector<f64>,
    /// One multiplier per entry of [`QpProblem::all_rows`].
    pub multipliers: Vec<f64>,
    pub pivots: usize,
}

impl QpSolution {
    /// Largest violation among stationarity, feasibility, sign and
    /// complementarity conditions.
    pub fn kkt_residual(&self, qp: &QpProblem) -> f64 {
        let rows = qp.all_rows();
        let mut grad = &qp.linear + (&self.point - &qp.center) * qp.curvature;
        let mut worst: f64 = 0.0;
        for (row, &mu) in rows.iter().zip(&self.multipliers) {
            grad -= &row.normal * mu;
            let s = row.slack(&self.point);
            worst = worst.max(-s).max(-mu).max((mu * s).abs());
        }
        worst.max(grad.norm())
    }
}

const QP_FEASIBILITY_TOL: f64 = 1e-9;

/// The objective has isotropic Hessian, so the problem is the projection of
/// [`QpProblem::target`] onto the polytope. It is solved as a least-distance
/// program through its nonnegative least-squares dual, which stays stable
/// when working rows are parallel or otherwise dependent. `start` must be
/// feasible.
pub fn active_set_qp(qp: &QpProblem, start: &DVector<f64>) -> Result<QpSolution> {
    qp.check()?;
    let mut rows = qp.all_rows();
    for (i, row) in rows.iter_mut().enumerate() {
        let s = row.slack(start);
        if s < -QP_FEASIBILITY_TOL {
            return Err(Error::Infeasible(format!("QP start violates row {i} by {}", -s)));
        }
        // Rows the start violates within tolerance pass through it instead,
        // so near-parallel opposite rows never enclose an empty sliver.
        if s < 0.0 {
            row.offset += s;
        }
    }
    let z = qp.target();
    if rows.is_empty() {
        return Ok(QpSolution {
            point: z,
            multipliers: Vec::new(),
            pivots: 0,
        });
    }
    // min |y| subject to a_i.y >= b_i - a_i.z, with y = p - z.
    let n = z.len();
    let e = DMatrix::from_fn(n + 1, rows.len(), |r, c| {
        if r < n {
            rows[c].normal[r]
        } else {
            -rows[c].slack(&z)
        }
    });
    let mut f = DVector::zeros(n + 1);
    f[n] = 1.0;
    let (u, pivots) = nnls(&e, &f)?;
    let resid = &e * &u - &f;
    let denom = -resid[n];
    if !(denom > 1e-14) {
        return Err(Error::Infeasible("QP rows admit no feasible point".into()));
    }
    let point = z + resid.rows(0, n) / denom;
    let multipliers = u.iter().map(|&ui| ui / denom * qp.curvature).collect();
    Ok(QpSolution {
        point,
        multipliers,
        pivots,
    })
}

/// Lawson-Hanson nonnegative least squares, min |e u - f| with u >= 0.
fn nnls(e: &DMatrix<f64>, f: &DVector<f64>) -> Result<(DVector<f64>, usize)> {
    let m = e.ncols();
    let tol = 10.0 * f64::EPSILON * e.norm() * e.nrows().max(m) as f64;
    let limit = 3 * m + 30;
    let mut u = DVector::zeros(m);
    let mut passive = vec![false; m];
    // Columns whose trial coefficient came out nonpositive on entry; cleared
    // once the iterate moves.
    let mut excluded = vec![false; m];
    let mut pivots = 0;
    loop {
        let w = e.transpose() * (f - e * &u);
        let entering = (0..m)
            .filter(|&j| !passive[j] && !excluded[j] && w[j] > tol)
            .max_by(|&a, &b| w[a].total_cmp(&w[b]));
        let Some(j) = entering else {
            return Ok((u, pivots));
        };
        passive[j] = true;
        let mut first = true;
        loop {
            pivots += 1;
            if pivots > limit {
                return Err(Error::NonConvergence {
                    solver: "active-set QP",
                    iterations: limit,
                    residual: w.max(),
                });
            }
            let idx: Vec<usize> = (0..m).filter(|&k| passive[k]).collect();
            let trial = e
                .select_columns(&idx)
                .svd(true, true)
                .solve(f, f64::EPSILON)
                .map_err(|msg| Error::domain(format!("QP least-squares solve failed: {msg}")))?;
            if first && trial[idx.iter().position(|&k| k == j).unwrap_or(0)] <= 0.0 {
                passive[j] = false;
                excluded[j] = true;
                break;
            }
            first = false;
            if trial.iter().all(|&v| v > 0.0) {
                for (k, &i) in idx.iter().enumerate() {
                    u[i] = trial[k];
                }
                excluded.iter_mut().for_each(|x| *x = false);
                break;
            }
            let (mut alpha, mut leaving) = (f64::INFINITY, idx[0]);
            for (k, &i) in idx.iter().enumerate() {
                if trial[k] <= 0.0 {
                    let a = u[i] / (u[i] - trial[k]);
                    if a < alpha {
                        alpha = a;
                        leaving = i;
                    }
                }
            }
            for (k, &i) in idx.iter().enumerate() {
                u[i] += alpha * (trial[k] - u[i]);
                if i == leaving || u[i] <= 0.0 {
                    u[i] = 0.0;
                    passive[i] = false;
                }
            }
            excluded.iter_mut().for_each(|x| *x = false);
        }
    }
}

// ---------------------------------------------------------------------------
// L-BFGS

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuasiNewtonOptions {
    /// Absolute gradient-norm tolerance.
    pub tol: f64,
    pub max_iterations: usize,
    pub memory: usize,
    pub max_halvings: usize,
    pub armijo: f64,
    /// A line-search failure is reported as a stall, not an error, once the
    /// gradient norm has dropped below this fraction of its initial value.
    pub stall_tol: f64,
}

impl Default for QuasiNewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iterations: 500,
            memory: 10,
            max_halvings: 60,
            armijo: 1e-4,
            stall_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    MaxIterations,
    Stalled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimization {
    pub x: DVector<f64>,
    pub value: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub termination: Termination,
    /// Objective after every accepted step, starting with f(x0).
    pub history: Vec<f64>,
}

/// Limited-memory BFGS with Armijo backtracking. `f` returns value and
/// gradient.
pub fn quasi_newton_minimize<F>(mut f: F, x0: &DVector<f64>, opts: &QuasiNewtonOptions) -> Result<Minimization>
where
    F: FnMut(&DVector<f64>) -> (f64, DVector<f64>),
{
    let mut x = x0.clone();
    let (mut fx, mut g) = f(&x);
    if !fx.is_finite() {
        return Err(Error::domain("objective is not finite at the start point"));
    }
    let g0 = g.norm();
    let mut memory: VecDeque<(DVector<f64>, DVector<f64>, f64)> = VecDeque::new();
    let mut history = vec![fx];

    for iter in 0..opts.max_iterations {
        let gn = g.norm();
        if gn < opts.tol {
            return Ok(Minimization {
                x,
                value: fx,
                gradient_norm: gn,
                iterations: iter,
                termination: Termination::Converged,
                history,
            });
        }
        let mut d = two_loop(&g, &memory);
        if !(g.dot(&d) < 0.0) {
            memory.clear();
            d = -&g;
        }
        let step = loop {
            let t0 = if memory.is_empty() { (1.0 / gn).min(1.0) } else { 1.0 };
            let step = armijo_search(&mut f, &x, fx, &g, &d, t0, opts);
            if step.is_some() || memory.is_empty() {
                break step;
            }
            memory.clear();
            d = -&g;
        };
        let Some((t, f_new, g_new)) = step else {
            if gn <= opts.stall_tol * g0.max(1.0) {
                return Ok(Minimization {
                    x,
                    value: fx,
                    gradient_norm: gn,
                    iterations: iter,
                    termination: Termination::Stalled,
                    history,
                });
            }
            return Err(Error::LineSearch {
                halvings: opts.max_halvings,
            });
        };
        let s = &d * t;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if memory.len() == opts.memory {
                memory.pop_front();
            }
            memory.push_back((s.clone(), y, 1.0 / sy));
        }
        x += s;
        fx = f_new;
        g = g_new;
        history.push(fx);
    }
    let gn = g.norm();
    Ok(Minimization {
        x,
        value: fx,
        gradient_norm: gn,
        iterations: opts.max_iterations,
        termination: if gn < opts.tol {
            Termination::Converged
        } else {
            Termination::MaxIterations
        },
        history,
    })
}

fn two_loop(g: &DVector<f64>, memory: &VecDeque<(DVector<f64>, DVector<f64>, f64)>) -> DVector<f64> {
    let mut q = g.clone();
    let mut alphas = Vec::with_capacity(memory.len());
    for (s, y, rho) in memory.iter().rev() {
        let a = rho * s.dot(&q);
        q.axpy(-a, y, 1.0);
        alphas.push(a);
    }
    if let Some((s, y, _)) = memory.back() {
        q *= s.dot(y) / y.norm_squared();
    }
    for ((s, y, rho), a) in memory.iter().zip(alphas.into_iter().rev()) {
        let b = rho * y.dot(&q);
        q.axpy(a - b, s, 1.0);
    }
    -q
}

fn armijo_search<F>(
    f: &mut F,
    x: &DVector<f64>,
    fx: f64,
    g: &DVector<f64>,
    d: &DVector<f64>,
    t0: f64,
    opts: &QuasiNewtonOptions,
) -> Option<(f64, f64, DVector<f64>)>
where
    F: FnMut(&DVector<f64>) -> (f64, DVector<f64>),
{
    let slope = g.dot(d);
    let mut t = t0;
    for _ in 0..=opts.max_halvings {
        let trial = x + d * t;
        let (ft, gt) = f(&trial);
        if !ft.is_finite() {
            t *= 0.5;
            continue;
        }
        if ft <= fx + opts.armijo * t * slope {
            return Some((t, ft, gt));
        }
        // Value differences at rounding level: fall back to an approximate
        // Wolfe test on the directional derivative.
        if ft <= fx + 1e-12 * fx.abs() && gt.dot(d).abs() <= 0.9 * slope.abs() {
            return Some((t, ft, gt));
        }
        t *= 0.5;
    }
    None
}

// ---------------------------------------------------------------------------
// Unit-modulus descent

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManifoldOptions {
    /// Relative objective change that ends the iteration.
    pub rel_tol: f64,
    pub max_iterations: usize,
    pub max_halvings: usize,
    pub armijo: f64,
}

impl Default for ManifoldOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            max_iterations: 200,
            max_halvings: 60,
            armijo: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldResult {
    pub theta: CVector,
    pub value: f64,
    pub iterations: usize,
    pub history: Vec<f64>,
}

/// theta^H A theta - 2 Re{b^H theta}.
pub fn phase_objective(a: &CMatrix, b: &CVector, theta: &CVector) -> f64 {
    (theta.adjoint() * a * theta)[(0, 0)].re - 2.0 * b.dotc(theta).re
}

/// Riemannian gradient descent of [`phase_objective`] over |theta_n| = 1 with
/// the normalization retraction and Barzilai-Borwein initial steps.
pub fn unit_modulus_descent(
    a: &CMatrix,
    b: &CVector,
    theta0: &CVector,
    opts: &ManifoldOptions,
) -> Result<ManifoldResult> {
    if theta0.iter().any(|z| (z.norm() - 1.0).abs() > 1e-8) {
        return Err(Error::domain("phase initialization is not unit-modulus"));
    }
    let mut theta = theta0.map(|z| z / z.norm());
    let mut value = phase_objective(a, b, &theta);
    let mut history = vec![value];
    let mut prev: Option<(CVector, CVector)> = None;

    for iter in 0..opts.max_iterations {
        let egrad = (a * &theta - b) * Complex64::from(2.0);
        let rgrad = CVector::from_fn(theta.len(), |n, _| {
            let radial = (egrad[n] * theta[n].conj()).re;
            egrad[n] - theta[n] * radial
        });
        let gnorm2 = rgrad.norm_squared();
        if gnorm2 == 0.0 {
            return Ok(ManifoldResult {
                theta,
                value,
                iterations: iter,
                history,
            });
        }
        let t0 = match &prev {
            Some((th_prev, rg_prev)) => {
                let s = &theta - th_prev;
                let y = &rgrad - rg_prev;
                let sy = s.dotc(&y).re;
                if sy > 0.0 {
                    s.norm_squared() / sy
                } else {
                    0.0
                }
            }
            None => 0.0,
        };
        let max_step = 0.5 / rgrad.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let mut t = if t0 > 0.0 && t0.is_finite() {
            t0.min(4.0 * max_step)
        } else {
            max_step
        };
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let trial = retract(&theta, &rgrad, t);
            let v = phase_objective(a, b, &trial);
            if v <= value - opts.armijo * t * gnorm2 {
                accepted = Some((trial, v));
                break;
            }
            t *= 0.5;
        }
        let Some((next, v)) = accepted else {
            return Ok(ManifoldResult {
                theta,
                value,
                iterations: iter,
                history,
            });
        };
        prev = Some((theta, rgrad));
        theta = next;
        let change = (value - v).abs();
        value = v;
        history.push(value);
        if change <= opts.rel_tol * value.abs().max(1e-300) {
            return Ok(ManifoldResult {
                theta,
                value,
                iterations: iter + 1,
                history,
            });
        }
    }
    Ok(ManifoldResult {
        theta,
        value,
        iterations: opts.max_iterations,
        history,
    })
}

fn retract(theta: &CVector, dir: &CVector, t: f64) -> CVector {
    CVector::from_fn(theta.len(), |n, _| {
        let z = theta[n] - dir[n] * t;
        let r = z.norm();
        if r > 1e-300 {
            z / r
        } else {
            theta[n]
        }
    })
}

// ---------------------------------------------------------------------------
// Eigenpairs

#[derive(Debug, Clone, PartialEq)]
pub struct EigPair {
    pub value: f64,
    pub vector: CVector,
    /// Set when the input was the zero matrix and the vector is arbitrary.
    pub degenerate: bool,
}

/// Largest eigenvalue and a unit eigenvector of a Hermitian matrix.
pub fn dominant_eigpair(h: &CMatrix) -> Result<EigPair> {
    let n = h.nrows();
    if n == 0 || h.ncols() != n {
        return Err(Error::domain("dominant_eigpair needs a nonempty square matrix"));
    }
    let scale = h.norm();
    if (h - h.adjoint()).norm() > 1e-10 * scale.max(1.0) {
        return Err(Error::domain("matrix is not Hermitian"));
    }
    if scale == 0.0 {
        let mut e = CVector::zeros(n);
        e[0] = Complex64::new(1.0, 0.0);
        return Ok(EigPair {
            value: 0.0,
            vector: e,
            degenerate: true,
        });
    }
    let herm = (h + h.adjoint()) * Complex64::from(0.5);
    let eig = herm.symmetric_eigen();
    let (idx, &value) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty spectrum");
    let vector = eig.eigenvectors.column(idx).into_owned();
    Ok(EigPair {
        value: value.max(0.0),
        vector,
        degenerate: false,
    })
}

// ---------------------------------------------------------------------------
// Sphere-constrained minimization

#[derive(Debug, Clone, PartialEq)]
pub struct SphereMinimum {
    pub x: DVector<f64>,
    pub value: f64,
    /// Index of the winning start.
    pub start: usize,
    pub iterations: usize,
    /// Accepted-step objective history of the winning start.
    pub history: Vec<f64>,
}

/// Minimizes `f` over the sphere |x| = radius from each start, returning the
/// best. The parameterization x = radius u/|u| turns the problem into an
/// unconstrained one in u, solved by [`quasi_newton_minimize`]. Starts whose
/// line search fails are skipped while another start succeeds.
pub fn sphere_constrained_min<F>(
    f: F,
    radius: f64,
    starts: &[DVector<f64>],
    opts: &QuasiNewtonOptions,
) -> Result<SphereMinimum>
where
    F: Fn(&DVector<f64>) -> (f64, DVector<f64>),
{
    if !(radius > 0.0) {
        return Err(Error::domain(format!("sphere radius must be positive, got {radius}")));
    }
    let mut best: Option<SphereMinimum> = None;
    let mut failure = None;
    for (i, start) in starts.iter().enumerate() {
        let norm = start.norm();
        if !(norm > 0.0) {
            return Err(Error::domain("sphere start must be nonzero"));
        }
        let u0 = start / norm;
        let lifted = |u: &DVector<f64>| {
            let un = u.norm();
            let uhat = u / un;
            let (v, g) = f(&(&uhat * radius));
            let tangent = &g - &uhat * uhat.dot(&g);
            (v, tangent * (radius / un))
        };
        let res = match quasi_newton_minimize(lifted, &u0, opts) {
            Ok(res) => res,
            Err(e @ Error::LineSearch { .. }) => {
                failure = Some(e);
                continue;
            }
            Err(e) => return Err(e),
        };
        let x = &res.x * (radius / res.x.norm());
        if best.as_ref().is_none_or(|b| res.value < b.value) {
            best = Some(SphereMinimum {
                x,
                value: res.value,
                start: i,
                iterations: res.iterations,
                history: res.history,
            });
        }
    }
    match (best, failure) {
        (Some(b), _) => Ok(b),
        (None, Some(e)) => Err(e),
        (None, None) => Err(Error::domain("sphere_constrained_min needs at least one start")),
    }
}
