//! Phase-shift update: a unit-modulus constrained quadratic in theta.

use num_complex::Complex64;

use crate::channel::{CMatrix, CVector};
use crate::error::Result;
use crate::numerics::{phase_objective, unit_modulus_descent, ManifoldOptions, ManifoldResult};

/// theta^H A1 theta - 2 Re{b1^H theta}.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseQuadratic {
    pub a1: CMatrix,
    pub b1: CVector,
}

impl PhaseQuadratic {
    pub fn objective(&self, theta: &CVector) -> f64 {
        phase_objective(&self.a1, &self.b1, theta)
    }
}

/// Builds A1 and b1 from the illumination g = G x.
pub fn build_phase_quadratic(
    gx: &CVector,
    h_rc: &CMatrix,
    s_r: &CVector,
    s_c: &CVector,
    omega: f64,
    alpha: f64,
) -> PhaseQuadratic {
    let n = gx.len();
    let hh = h_rc.map(|z| z.conj()) * h_rc.transpose();
    let w = omega * omega * (1.0 - alpha);
    let a1 = CMatrix::from_fn(n, n, |i, j| {
        let ggh = gx[i] * gx[j].conj();
        let diag = if i == j { alpha } else { 0.0 };
        ggh * (Complex64::from(diag) + hh[(i, j)] * w)
    });
    let hs = h_rc.map(|z| z.conj()) * s_c.map(|z| z.conj());
    let b1 = CVector::from_fn(n, |i, _| {
        gx[i] * (s_r[i].conj() * alpha + hs[i] * (omega * (1.0 - alpha)))
    });
    PhaseQuadratic { a1, b1 }
}

/// Riemannian descent from `theta_init`; never returns a worse point.
pub fn optimize_phases(q: &PhaseQuadratic, theta_init: &CVector, opts: &ManifoldOptions) -> Result<ManifoldResult> {
    unit_modulus_descent(&q.a1, &q.b1, theta_init, opts)
}
