//! Transmit beamformer update on the power sphere ||W||_F^2 = P_t, solved by
//! an augmented Lagrangian method with an L-BFGS inner solver.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::channel::{CMatrix, CVector};
use crate::error::{Error, Result};
use crate::numerics::{complex_to_real, quasi_newton_minimize, real_embedding, real_to_complex, QuasiNewtonOptions};

/// w^H A2 w - 2 Re{b2^H w} with w = vec(W), column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerQuadratic {
    pub a2: CMatrix,
    pub b2: CVector,
    pub a2_real: DMatrix<f64>,
    pub b2_real: DVector<f64>,
    pub power: f64,
    pub antennas: usize,
    pub users: usize,
}

impl BeamformerQuadratic {
    pub fn objective(&self, w: &CVector) -> f64 {
        (w.adjoint() * &self.a2 * w)[(0, 0)].re - 2.0 * self.b2.dotc(w).re
    }

    pub fn objective_real(&self, w: &DVector<f64>) -> f64 {
        w.dot(&(&self.a2_real * w)) - 2.0 * self.b2_real.dot(w)
    }
}

/// vec(W), column-major.
pub fn vectorize(w: &CMatrix) -> CVector {
    CVector::from_column_slice(w.as_slice())
}

/// Inverse of [`vectorize`].
pub fn unvectorize(w: &CVector, antennas: usize, users: usize) -> CMatrix {
    CMatrix::from_column_slice(antennas, users, w.as_slice())
}

/// Effective channel H_c = H_rc^H Theta^H G, K x M.
pub fn effective_channel(g: &CMatrix, theta: &CVector, h_rc: &CMatrix) -> CMatrix {
    let mut tg = g.clone();
    for (n, mut row) in tg.row_iter_mut().enumerate() {
        row *= theta[n].conj();
    }
    h_rc.adjoint() * tg
}

#[allow(clippy::too_many_arguments)]
pub fn build_w_quadratic(
    g: &CMatrix,
    theta: &CVector,
    h_rc: &CMatrix,
    s_r: &CVector,
    s_c: &CVector,
    omega: f64,
    alpha: f64,
    power: f64,
) -> BeamformerQuadratic {
    let hc = effective_channel(g, theta, h_rc);
    let ss = s_c.map(|z| z.conj()) * s_c.transpose();
    let inner =
        g.adjoint() * g * Complex64::from(alpha) + hc.adjoint() * &hc * Complex64::from((1.0 - alpha) * omega * omega);
    let a2 = ss.kronecker(&inner);
    let theta_sr = CVector::from_fn(theta.len(), |n, _| theta[n] * s_r[n]);
    let b_mat = (g.adjoint() * theta_sr * Complex64::from(alpha)
        + hc.adjoint() * s_c * Complex64::from((1.0 - alpha) * omega))
        * s_c.adjoint();
    let b2 = vectorize(&b_mat);
    BeamformerQuadratic {
        a2_real: real_embedding(&a2),
        b2_real: complex_to_real(&b2),
        a2,
        b2,
        power,
        antennas: g.ncols(),
        users: s_c.len(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlmOptions {
    /// Absolute feasibility threshold on | ||w||^2 - P |.
    pub tol: f64,
    pub max_outer: usize,
    pub gamma0: f64,
    pub gamma_factor: f64,
    pub gamma_max: f64,
    pub inner: QuasiNewtonOptions,
}

impl AlmOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            max_outer: 100,
            gamma0: 1.0,
            gamma_factor: 2.0,
            gamma_max: 1e8,
            inner: QuasiNewtonOptions {
                tol: 1e-10,
                max_iterations: 500,
                ..Default::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlmResult {
    pub w: CVector,
    pub objective: f64,
    /// | ||w||^2 - P | before the final projection.
    pub feasibility: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub gammas: Vec<f64>,
    /// Set when the ALM point was worse than the projected start.
    pub kept_start: bool,
}

/// Minimizes the quadratic over ||w||^2 = P from `w_init`.
///
/// Internally w = sqrt(P) u and the objective is divided by a fixed scale, so
/// the penalty schedule does not depend on the power budget.
pub fn alm_optimize_w(q: &BeamformerQuadratic, w_init: &CVector, opts: &AlmOptions) -> Result<AlmResult> {
    let p = q.power;
    if !(p > 0.0) {
        return Err(Error::domain("transmit power must be positive"));
    }
    let init_norm2 = w_init.norm_squared();
    if (init_norm2 - p).abs() > 1e-6 * p {
        return Err(Error::domain(format!(
            "beamformer start has power {init_norm2}, expected {p}"
        )));
    }
    let sp = p.sqrt();
    let u0 = complex_to_real(w_init) / init_norm2.sqrt();
    let a = &q.a2_real;
    let b = &q.b2_real;
    let scale = (p * a.norm() + 2.0 * sp * b.norm()).max(1e-300);
    // Scaled objective and its gradient in u.
    let h = |u: &DVector<f64>| -> (f64, DVector<f64>) {
        let au = a * u;
        let v = (p * u.dot(&au) - 2.0 * sp * b.dot(u)) / scale;
        let g = (au * (2.0 * p) - b * (2.0 * sp)) / scale;
        (v, g)
    };
    let (_, g0) = h(&u0);
    let mut mu = -0.5 * u0.dot(&g0);
    let mut gamma = opts.gamma0;
    let mut u = u0.clone();
    let mut gammas = Vec::new();
    let mut inner_iterations = 0;
    let feas_tol = opts.tol / p;
    let mut feasibility = f64::INFINITY;
    let mut outer = 0;

    while outer < opts.max_outer {
        outer += 1;
        gammas.push(gamma);
        let (mu_k, gamma_k) = (mu, gamma);
        let lagrangian = |x: &DVector<f64>| {
            let (v, g) = h(x);
            let c = x.norm_squared() - 1.0;
            (
                v + mu_k * c + 0.5 * gamma_k * c * c,
                g + x * (2.0 * mu_k + 2.0 * gamma_k * c),
            )
        };
        let res = quasi_newton_minimize(lagrangian, &u, &opts.inner)?;
        inner_iterations += res.iterations;
        u = res.x;
        let c = u.norm_squared() - 1.0;
        feasibility = c.abs();
        if feasibility < feas_tol {
            break;
        }
        mu += gamma * c;
        gamma = (gamma * opts.gamma_factor).min(opts.gamma_max);
    }
    if feasibility >= feas_tol {
        return Err(Error::NonConvergence {
            solver: "ALM beamformer",
            iterations: opts.max_outer,
            residual: feasibility * p,
        });
    }
    let projected = &u * (sp / u.norm());
    let start = &u0 * sp;
    let (w_real, kept_start) = if q.objective_real(&projected) <= q.objective_real(&start) {
        (projected, false)
    } else {
        (start, true)
    };
    let w = real_to_complex(&w_real);
    Ok(AlmResult {
        objective: q.objective(&w),
        w,
        feasibility: feasibility * p,
        outer_iterations: outer,
        inner_iterations,
        gammas,
        kept_start,
    })
}

/// Maximum-ratio start W proportional to H_c^H, scaled to the power budget.
/// Falls back to a uniform beam when the effective channel vanishes.
pub fn matched_filter(hc: &CMatrix, power: f64) -> CMatrix {
    let w = hc.adjoint();
    let norm = w.norm();
    if norm > 0.0 {
        w * Complex64::from(power.sqrt() / norm)
    } else {
        let (m, k) = w.shape();
        CMatrix::from_element(m, k, Complex64::from((power / (m * k) as f64).sqrt()))
    }
}
