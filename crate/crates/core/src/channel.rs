//! Steering vectors, path gains and the two line-of-sight channels.
//!
//! The fRIS local frame: boresight along global +y, the element x axis along
//! global x and the element y axis along global z. A direction (phi, psi) seen
//! from the fRIS has unit vector (sin phi cos psi, cos phi cos psi, sin psi) in
//! global (x, y, z), so azimuth is measured in the y-x plane and elevation
//! comes from the z offset. The BS array is a half-wavelength ULA along the
//! global x axis.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Vector2};
use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::config::SystemConfig;
use crate::error::{Error, Result};

pub type CVector = DVector<Complex64>;
pub type CMatrix = DMatrix<Complex64>;
pub type Point2 = Vector2<f64>;

/// Arrival/departure direction in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Direction {
    pub azimuth: f64,
    pub elevation: f64,
}

impl Direction {
    pub fn new(azimuth: f64, elevation: f64) -> Self {
        Self { azimuth, elevation }
    }

    pub fn from_degrees(azimuth: f64, elevation: f64) -> Self {
        Self::new(azimuth.to_radians(), elevation.to_radians())
    }

    /// Direction of a global offset vector in the fRIS frame.
    pub fn from_offset(offset: [f64; 3]) -> Result<Self> {
        let [dx, dy, dz] = offset;
        let r = (dx * dx + dy * dy + dz * dz).sqrt();
        if !(r > 0.0) {
            return Err(Error::domain("coincident node positions"));
        }
        Ok(Self {
            azimuth: dx.atan2(dy),
            elevation: (dz / r).clamp(-1.0, 1.0).asin(),
        })
    }

    /// Direction cosines (kappa_x, kappa_y) projected onto the element plane.
    pub fn cosines(&self) -> Point2 {
        Point2::new(self.azimuth.sin() * self.elevation.cos(), self.elevation.sin())
    }
}

/// Path difference of element position `p` towards `dir`, in meters.
pub fn path_difference(p: &Point2, dir: Direction) -> f64 {
    p.x * dir.azimuth.sin() * dir.elevation.cos() + p.y * dir.elevation.sin()
}

/// The 2-D coordinates of every fRIS element.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionSet {
    points: Vec<Point2>,
}

impl PositionSet {
    pub fn new(points: Vec<Point2>) -> Self {
        Self { points }
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Self {
        Self::new(pairs.iter().map(|&(x, y)| Point2::new(x, y)).collect())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn get(&self, n: usize) -> Point2 {
        self.points[n]
    }

    pub fn set(&mut self, n: usize, p: Point2) {
        self.points[n] = p;
    }

    /// Smallest pairwise distance; infinite for fewer than two elements.
    pub fn min_pairwise_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.points.len() {
            for j in i + 1..self.points.len() {
                best = best.min((self.points[i] - self.points[j]).norm());
            }
        }
        best
    }

    /// Region and spacing check with slack `tol`.
    pub fn check_feasible(&self, region: f64, spacing: f64, tol: f64) -> Result<()> {
        for (n, p) in self.points.iter().enumerate() {
            if p.x < -tol || p.y < -tol || p.x > region + tol || p.y > region + tol {
                return Err(Error::Infeasible(format!(
                    "element {n} at ({}, {}) leaves the region [0, {region}]^2",
                    p.x, p.y
                )));
            }
        }
        let d = self.min_pairwise_distance();
        if d < spacing - tol {
            return Err(Error::Infeasible(format!("minimum spacing {d} is below {spacing}")));
        }
        Ok(())
    }

    pub fn is_feasible(&self, region: f64, spacing: f64, tol: f64) -> bool {
        self.check_feasible(region, spacing, tol).is_ok()
    }
}

/// fRIS steering vector: entry n is exp(j 2pi/lambda d_n).
pub fn fris_steering(positions: &PositionSet, wavelength: f64, dir: Direction) -> CVector {
    let k = 2.0 * PI / wavelength;
    CVector::from_iterator(
        positions.len(),
        positions
            .points()
            .iter()
            .map(|p| Complex64::from_polar(1.0, k * path_difference(p, dir))),
    )
}

/// Half-wavelength ULA steering vector, entry m = exp(j pi m sin phi_t).
pub fn ula_steering(phi_t: f64, antennas: usize) -> CVector {
    let s = phi_t.sin();
    CVector::from_iterator(
        antennas,
        (0..antennas).map(|m| Complex64::from_polar(1.0, PI * m as f64 * s)),
    )
}

/// Free-space style power gain eta / dist^2.
pub fn path_gain(dist: f64, eta: f64) -> Result<f64> {
    if !(dist > 0.0) {
        return Err(Error::domain(format!("path gain needs dist > 0, got {dist}")));
    }
    Ok(eta / (dist * dist))
}

fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn offset(from: [f64; 3], to: [f64; 3]) -> [f64; 3] {
    [to[0] - from[0], to[1] - from[1], to[2] - from[2]]
}

/// Drops `count` users uniformly in the horizontal disc around the center.
pub fn drop_users<R: Rng + ?Sized>(config: &SystemConfig, rng: &mut R) -> Vec<[f64; 3]> {
    if let Some(fixed) = &config.user_positions {
        return fixed.clone();
    }
    let c = config.user_center;
    (0..config.users)
        .map(|_| {
            let r = config.user_radius * rng.random::<f64>().sqrt();
            let t = 2.0 * PI * rng.random::<f64>();
            [c[0] + r * t.cos(), c[1] + r * t.sin(), c[2]]
        })
        .collect()
}

/// Everything about the links that does not depend on element positions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkGeometry {
    pub wavelength: f64,
    pub antennas: usize,
    /// Direction of the BS as seen from the fRIS (phi_r, psi_r).
    pub bs_direction: Direction,
    /// Departure angle phi_t at the BS ULA.
    pub departure: f64,
    /// Directions of the users as seen from the fRIS.
    pub user_directions: Vec<Direction>,
    /// BS to fRIS power gain.
    pub zeta_g: f64,
    /// fRIS to user power gains.
    pub user_gains: Vec<f64>,
}

impl LinkGeometry {
    pub fn new(config: &SystemConfig, users: &[[f64; 3]]) -> Result<Self> {
        let fris = config.fris_position;
        let bs = config.bs_position;
        let bs_direction = Direction::from_offset(offset(fris, bs))?;
        let to_fris = offset(bs, fris);
        let d_bf = distance(bs, fris);
        let departure = (to_fris[0] / d_bf).clamp(-1.0, 1.0).asin();
        let zeta_g = path_gain(d_bf, config.path_loss)?;
        let mut user_directions = Vec::with_capacity(users.len());
        let mut user_gains = Vec::with_capacity(users.len());
        for &u in users {
            user_directions.push(Direction::from_offset(offset(fris, u))?);
            user_gains.push(path_gain(distance(fris, u), config.path_loss)?);
        }
        Ok(Self {
            wavelength: config.wavelength,
            antennas: config.antennas,
            bs_direction,
            departure,
            user_directions,
            zeta_g,
            user_gains,
        })
    }

    pub fn users(&self) -> usize {
        self.user_directions.len()
    }

    /// Builds G and H_rc for the given element positions.
    pub fn channels(&self, positions: &PositionSet) -> ChannelSet {
        let n = positions.len();
        let k = self.users();
        let a_r = fris_steering(positions, self.wavelength, self.bs_direction);
        let a_t = ula_steering(self.departure, self.antennas);
        let g = (&a_r * a_t.adjoint()) * Complex64::from(self.zeta_g.sqrt());
        let mut a_rc = CMatrix::zeros(n, k);
        for (col, dir) in self.user_directions.iter().enumerate() {
            a_rc.set_column(col, &fris_steering(positions, self.wavelength, *dir));
        }
        let sigma_rc: Vec<f64> = self.user_gains.iter().map(|z| z.sqrt()).collect();
        let mut h_rc = a_rc.clone();
        for (col, s) in sigma_rc.iter().enumerate() {
            h_rc.column_mut(col).scale_mut(*s);
        }
        ChannelSet {
            g,
            h_rc,
            a_rc,
            sigma_rc,
            zeta_g: self.zeta_g,
            a_r,
            a_t,
        }
    }
}

/// The two line-of-sight channels and the steering vectors behind them.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// BS to fRIS, N x M, rank one.
    pub g: CMatrix,
    /// fRIS to users, N x K; column k is h_rc,k.
    pub h_rc: CMatrix,
    /// Unit-modulus user steering vectors, N x K.
    pub a_rc: CMatrix,
    /// Amplitude gains sqrt(zeta_k).
    pub sigma_rc: Vec<f64>,
    pub zeta_g: f64,
    pub a_r: CVector,
    pub a_t: CVector,
}

/// Convenience wrapper: geometry plus positions in one call.
pub fn build_channels(config: &SystemConfig, users: &[[f64; 3]], positions: &PositionSet) -> Result<ChannelSet> {
    Ok(LinkGeometry::new(config, users)?.channels(positions))
}
