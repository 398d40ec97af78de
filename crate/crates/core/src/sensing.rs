//! Beampattern evaluation and reference-signal design.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::channel::{fris_steering, CMatrix, CVector, Direction, PositionSet};
use crate::error::{Error, Result};
use crate::numerics::{complex_to_real, dominant_eigpair, real_to_complex, sphere_constrained_min, QuasiNewtonOptions};

pub const BETA_MIN: f64 = 1e-12;

/// Azimuth/elevation sampling of the beampattern, in radians.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleGrid {
    pub azimuths: Vec<f64>,
    pub elevations: Vec<f64>,
}

impl AngleGrid {
    pub fn new(azimuths: Vec<f64>, elevations: Vec<f64>) -> Self {
        Self { azimuths, elevations }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.azimuths.len(), self.elevations.len())
    }

    pub fn len(&self) -> usize {
        self.azimuths.len() * self.elevations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Directions in row-major (azimuth, elevation) order.
    pub fn directions(&self) -> impl Iterator<Item = Direction> + '_ {
        self.azimuths
            .iter()
            .flat_map(move |&a| self.elevations.iter().map(move |&e| Direction::new(a, e)))
    }
}

/// Steering vectors of every grid direction, one column each.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringBank {
    pub grid: AngleGrid,
    pub vectors: CMatrix,
}

impl SteeringBank {
    pub fn new(grid: &AngleGrid, positions: &PositionSet, wavelength: f64) -> Self {
        let mut vectors = CMatrix::zeros(positions.len(), grid.len());
        for (i, dir) in grid.directions().enumerate() {
            vectors.set_column(i, &fris_steering(positions, wavelength, dir));
        }
        Self {
            grid: grid.clone(),
            vectors,
        }
    }

    /// |a_i^H s|^2 at every grid point, reshaped to I_a x I_e.
    pub fn pattern_rank_one(&self, s: &CVector) -> DMatrix<f64> {
        let proj = self.vectors.adjoint() * s;
        let (ia, ie) = self.grid.shape();
        DMatrix::from_fn(ia, ie, |i, j| proj[i * ie + j].norm_sqr())
    }
}

/// Unit rectangular mainlobes of the given width around each target azimuth,
/// on the elevation row nearest the target.
pub fn ideal_beampattern(targets: &[Direction], mainlobe_width: f64, grid: &AngleGrid) -> Result<DMatrix<f64>> {
    let (ia, ie) = grid.shape();
    let mut pd = DMatrix::zeros(ia, ie);
    if ia == 0 || ie == 0 {
        return Ok(pd);
    }
    let az_lo = grid.azimuths.iter().cloned().fold(f64::INFINITY, f64::min);
    let az_hi = grid.azimuths.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let el_lo = grid.elevations.iter().cloned().fold(f64::INFINITY, f64::min);
    let el_hi = grid.elevations.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let slack = 1e-9;
    for t in targets {
        if t.azimuth < az_lo - slack
            || t.azimuth > az_hi + slack
            || t.elevation < el_lo - slack
            || t.elevation > el_hi + slack
        {
            return Err(Error::domain(format!(
                "target ({}, {}) rad lies outside the angle grid",
                t.azimuth, t.elevation
            )));
        }
        let row = grid
            .elevations
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t.elevation).abs().total_cmp(&(b.1 - t.elevation).abs()))
            .map(|(j, _)| j)
            .expect("nonempty elevation grid");
        for (i, &az) in grid.azimuths.iter().enumerate() {
            if (az - t.azimuth).abs() <= 0.5 * mainlobe_width + slack {
                pd[(i, row)] = 1.0;
            }
        }
    }
    Ok(pd)
}

/// a^H R a at every grid direction.
pub fn beampattern(r: &CMatrix, positions: &PositionSet, wavelength: f64, grid: &AngleGrid) -> Result<DMatrix<f64>> {
    let n = positions.len();
    if r.shape() != (n, n) {
        return Err(Error::domain("covariance does not match the element count"));
    }
    if (r - r.adjoint()).norm() > 1e-10 * r.norm().max(1.0) {
        return Err(Error::domain("covariance is not Hermitian"));
    }
    let (ia, ie) = grid.shape();
    let mut ps = DMatrix::zeros(ia, ie);
    for i in 0..ia {
        for j in 0..ie {
            let a = fris_steering(
                positions,
                wavelength,
                Direction::new(grid.azimuths[i], grid.elevations[j]),
            );
            ps[(i, j)] = (a.adjoint() * r * &a)[(0, 0)].re;
        }
    }
    Ok(ps)
}

/// Sum of |beta P_d - P_s|^2 over the grid.
pub fn mismatch(beta: f64, pd: &DMatrix<f64>, ps: &DMatrix<f64>) -> f64 {
    pd.iter().zip(ps.iter()).map(|(d, s)| (beta * d - s).powi(2)).sum()
}

/// Least-squares scale, clamped to [`BETA_MIN`].
pub fn optimal_beta(pd: &DMatrix<f64>, ps: &DMatrix<f64>) -> Result<f64> {
    let dd: f64 = pd.iter().map(|d| d * d).sum();
    if !(dd > 0.0) {
        return Err(Error::domain("ideal beampattern is identically zero"));
    }
    let ds: f64 = pd.iter().zip(ps.iter()).map(|(d, s)| d * s).sum();
    Ok((ds / dd).max(BETA_MIN))
}

/// ||s_r - Theta^H G x||^2 given the illumination g = G x.
pub fn sensing_mse(s_r: &CVector, theta: &CVector, gx: &CVector) -> f64 {
    s_r.iter()
        .zip(theta.iter().zip(gx.iter()))
        .map(|(s, (t, g))| (s - t.conj() * g).norm_sqr())
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensingReference {
    pub r_tilde: CMatrix,
    pub s_r: CVector,
    pub beta: f64,
    pub lambda_s: f64,
    /// ||G x||^2.
    pub power: f64,
    /// Final mismatch at the returned scale.
    pub mismatch: f64,
    pub iterations: usize,
    /// Normalized objective after each accepted step of the winning start.
    pub history: Vec<f64>,
}

/// Options of [`design_reference_signal`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignOptions {
    /// Number of cold starts.
    pub restarts: usize,
    pub solver: QuasiNewtonOptions,
}

impl Default for DesignOptions {
    fn default() -> Self {
        Self {
            restarts: 4,
            solver: QuasiNewtonOptions {
                tol: 1e-9,
                max_iterations: 500,
                ..Default::default()
            },
        }
    }
}

/// Rank-one beampattern design on the sphere ||s||^2 = ||G x||^2 with the
/// scale beta eliminated in closed form, followed by eigen-extraction.
///
/// `warm` replaces the cold starts by a single start. `align` rotates the
/// result's global phase towards the given vector.
#[allow(clippy::too_many_arguments)]
pub fn design_reference_signal<R: Rng + ?Sized>(
    gx: &CVector,
    pd: &DMatrix<f64>,
    bank: &SteeringBank,
    targets: &[Direction],
    warm: Option<&CVector>,
    align: Option<&CVector>,
    opts: &DesignOptions,
    rng: &mut R,
) -> Result<SensingReference> {
    let power = gx.norm_squared();
    if !(power > 0.0) {
        return Err(Error::domain("zero illumination power at the fRIS"));
    }
    let n = gx.len();
    let a = &bank.vectors;
    let (ia, ie) = bank.grid.shape();
    if pd.shape() != (ia, ie) {
        return Err(Error::domain("ideal beampattern does not match the steering grid"));
    }
    // Bank columns run over (azimuth, elevation) row-major.
    let d_bank: Vec<f64> = (0..ia * ie).map(|idx| pd[(idx / ie, idx % ie)]).collect();
    let dd: f64 = d_bank.iter().map(|v| v * v).sum();
    if !(dd > 0.0) {
        return Err(Error::domain("ideal beampattern is identically zero"));
    }

    let raw = |s: &CVector| -> (f64, CVector) {
        let proj = a.adjoint() * s;
        let q: Vec<f64> = proj.iter().map(|z| z.norm_sqr()).collect();
        let dq: f64 = d_bank.iter().zip(&q).map(|(d, q)| d * q).sum();
        let beta = (dq / dd).max(BETA_MIN);
        let mut value = 0.0;
        let mut weights = CVector::zeros(q.len());
        for i in 0..q.len() {
            let r = q[i] - beta * d_bank[i];
            value += r * r;
            weights[i] = proj[i] * (4.0 * r);
        }
        (value, a * weights)
    };

    let mut starts: Vec<DVector<f64>> = Vec::new();
    match warm {
        Some(prev) if prev.len() == n && prev.norm() > 0.0 => starts.push(complex_to_real(prev)),
        _ => {
            let mut first = CVector::zeros(n);
            for t in targets {
                first += fris_steering_from_bank(bank, t).unwrap_or_else(|| CVector::zeros(n));
            }
            if first.norm() > 0.0 {
                starts.push(complex_to_real(&first));
            }
            while starts.len() < opts.restarts.max(1) {
                let v = DVector::from_fn(2 * n, |_, _| rng.sample::<f64, _>(StandardNormal));
                starts.push(v);
            }
        }
    }
    let first_unit = real_to_complex(&starts[0]).normalize();
    let scale = raw(&first_unit).0.max(1e-300);
    let objective = |u: &DVector<f64>| {
        let (v, g) = raw(&real_to_complex(u));
        (v / scale, complex_to_real(&g) / scale)
    };
    let best = sphere_constrained_min(objective, 1.0, &starts, &opts.solver)?;

    let s_unit = real_to_complex(&best.x);
    let s = s_unit * Complex64::from(power.sqrt());
    let r_tilde = &s * s.adjoint();
    let eig = dominant_eigpair(&r_tilde)?;
    let mut s_r = eig.vector * Complex64::from(eig.value.sqrt());
    if let Some(v) = align {
        let c = s_r.dotc(v);
        if c.norm() > 0.0 {
            s_r *= c / c.norm();
        }
    }
    let ps = bank.pattern_rank_one(&s_r);
    let beta = optimal_beta(pd, &ps)?;
    Ok(SensingReference {
        r_tilde,
        s_r,
        beta,
        lambda_s: eig.value,
        power,
        mismatch: mismatch(beta, pd, &ps),
        iterations: best.iterations,
        history: best.history,
    })
}

/// Steering vector of the grid point nearest to `dir`.
fn fris_steering_from_bank(bank: &SteeringBank, dir: &Direction) -> Option<CVector> {
    let ie = bank.grid.elevations.len();
    let ai = nearest(&bank.grid.azimuths, dir.azimuth)?;
    let ei = nearest(&bank.grid.elevations, dir.elevation)?;
    Some(bank.vectors.column(ai * ie + ei).into_owned())
}

fn nearest(values: &[f64], x: f64) -> Option<usize> {
    values
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - x).abs().total_cmp(&(b.1 - x).abs()))
        .map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::GridAxis;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const LAMBDA: f64 = 0.125;

    fn deg_grid() -> AngleGrid {
        AngleGrid::new(GridAxis::from_degrees(-90.0, 90.0, 181).values(), vec![0.0])
    }

    fn ula(n: usize) -> PositionSet {
        PositionSet::from_pairs(&(0..n).map(|i| (i as f64 * LAMBDA / 2.0, 0.0)).collect::<Vec<_>>())
    }

    fn random_psd(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
        let b = CMatrix::from_fn(n, n, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        &b * b.adjoint()
    }

    #[test]
    fn ideal_pattern_single_target() {
        let grid = deg_grid();
        let pd = ideal_beampattern(&[Direction::from_degrees(10.0, 0.0)], 10f64.to_radians(), &grid).unwrap();
        for (i, az) in (-90..=90).enumerate() {
            let expected = if (5..=15).contains(&az) { 1.0 } else { 0.0 };
            assert_eq!(pd[(i, 0)], expected, "azimuth {az}");
        }
        let empty = ideal_beampattern(&[], 0.1, &grid).unwrap();
        assert!(empty.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ideal_pattern_three_targets_are_disjoint_plateaus() {
        let grid = deg_grid();
        let targets = [
            Direction::from_degrees(-60.0, 0.0),
            Direction::from_degrees(10.0, 0.0),
            Direction::from_degrees(55.0, 0.0),
        ];
        let pd = ideal_beampattern(&targets, 10f64.to_radians(), &grid).unwrap();
        assert_eq!(pd.iter().filter(|&&v| v == 1.0).count(), 33);
        let mut plateaus = 0;
        for i in 1..pd.nrows() {
            if pd[(i, 0)] == 1.0 && pd[(i - 1, 0)] == 0.0 {
                plateaus += 1;
            }
        }
        assert_eq!(plateaus, 3);
    }

    #[test]
    fn ideal_pattern_rejects_out_of_grid_target() {
        let grid = AngleGrid::new(GridAxis::from_degrees(-30.0, 30.0, 61).values(), vec![0.0]);
        assert!(ideal_beampattern(&[Direction::from_degrees(50.0, 0.0)], 0.1, &grid).is_err());
    }

    #[test]
    fn beampattern_examples() {
        let grid = deg_grid();
        let pos = ula(6);
        let ps = beampattern(&CMatrix::identity(6, 6), &pos, LAMBDA, &grid).unwrap();
        assert!(ps.iter().all(|&v| (v - 6.0).abs() < 1e-10));

        let a0 = fris_steering(&pos, LAMBDA, Direction::from_degrees(20.0, 0.0));
        let r = &a0 * a0.adjoint();
        let ps = beampattern(&r, &pos, LAMBDA, &grid).unwrap();
        let (imax, _) = ps.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
        assert_eq!(imax, 110);
        assert!((ps[(110, 0)] - 36.0).abs() < 1e-9);

        let mut bad = CMatrix::identity(6, 6);
        bad[(0, 1)] = Complex64::new(1.0, 0.0);
        assert!(beampattern(&bad, &pos, LAMBDA, &grid).is_err());
    }

    #[test]
    fn beampattern_matches_quadratic_form_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let grid = AngleGrid::new(vec![-0.7, 0.1, 0.9], vec![-0.2, 0.0, 0.3]);
        let pos = PositionSet::from_pairs(&[(0.0, 0.0), (0.07, 0.01), (0.02, 0.11), (0.2, 0.3)]);
        let r = random_psd(&mut rng, 4);
        let ps = beampattern(&r, &pos, LAMBDA, &grid).unwrap();
        for (i, &az) in grid.azimuths.iter().enumerate() {
            for (j, &el) in grid.elevations.iter().enumerate() {
                let mut acc = Complex64::new(0.0, 0.0);
                for m in 0..4 {
                    for n in 0..4 {
                        let pm = pos.get(m);
                        let pn = pos.get(n);
                        let ph = |p: nalgebra::Vector2<f64>| {
                            2.0 * std::f64::consts::PI / LAMBDA * (p.x * az.sin() * el.cos() + p.y * el.sin())
                        };
                        acc += Complex64::from_polar(1.0, -ph(pm)) * r[(m, n)] * Complex64::from_polar(1.0, ph(pn));
                    }
                }
                assert!((acc.re - ps[(i, j)]).abs() < 1e-10 * acc.re.abs().max(1.0));
                assert!(acc.im.abs() < 1e-9);
            }
        }
    }

    #[test]
    fn mismatch_and_beta_examples() {
        let pd = DMatrix::from_row_slice(3, 1, &[1.0, 0.0, 1.0]);
        let ps = &pd * 3.0;
        assert_eq!(mismatch(3.0, &pd, &ps), 0.0);
        assert!((optimal_beta(&pd, &ps).unwrap() - 3.0).abs() < 1e-15);
        let zero = DMatrix::zeros(3, 1);
        let ps2 = DMatrix::from_row_slice(3, 1, &[0.5, 2.0, 0.1]);
        assert!((mismatch(7.0, &zero, &ps2) - (0.25 + 4.0 + 0.01)).abs() < 1e-15);
        let disjoint = DMatrix::from_row_slice(3, 1, &[0.0, 2.0, 0.0]);
        assert_eq!(optimal_beta(&pd, &disjoint).unwrap(), BETA_MIN);
        assert!(optimal_beta(&zero, &ps2).is_err());
    }

    #[test]
    fn sensing_mse_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let gx = CVector::from_fn(5, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let theta = CVector::from_fn(5, |_, _| Complex64::from_polar(1.0, rng.random_range(-3.0..3.0)));
        let v = CVector::from_fn(5, |n, _| theta[n].conj() * gx[n]);
        assert!(sensing_mse(&v, &theta, &gx) < 1e-28);
        let zero = CVector::zeros(5);
        assert!((sensing_mse(&zero, &theta, &gx) - gx.norm_squared()).abs() < 1e-12);
        // Expansion oracle: |s|^2 - 2 Re(s^H v) + |v|^2.
        let s = CVector::from_fn(5, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let oracle = s.norm_squared() - 2.0 * s.dotc(&v).re + v.norm_squared();
        assert!((sensing_mse(&s, &theta, &gx) - oracle).abs() < 1e-12);
    }

    fn design(
        pos: &PositionSet,
        targets: &[Direction],
        power: f64,
        seed: u64,
    ) -> (SensingReference, DMatrix<f64>, SteeringBank) {
        let grid = deg_grid();
        let pd = ideal_beampattern(targets, 10f64.to_radians(), &grid).unwrap();
        let bank = SteeringBank::new(&grid, pos, LAMBDA);
        let n = pos.len();
        let gx = CVector::from_element(n, Complex64::new((power / n as f64).sqrt(), 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = design_reference_signal(
            &gx,
            &pd,
            &bank,
            targets,
            None,
            None,
            &DesignOptions::default(),
            &mut rng,
        )
        .unwrap();
        (r, pd, bank)
    }

    #[test]
    fn single_target_peak_is_on_target() {
        let target = Direction::from_degrees(20.0, 0.0);
        let (r, _, bank) = design(&ula(4), &[target], 0.01, 1);
        let ps = bank.pattern_rank_one(&r.s_r);
        let (imax, _) = ps.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
        let az = -90 + imax as i32;
        assert!((15..=25).contains(&az), "peak at {az} deg");
    }

    #[test]
    fn reference_invariants() {
        let targets = [Direction::from_degrees(-30.0, 0.0), Direction::from_degrees(25.0, 0.0)];
        let power = 0.0137;
        let (r, pd, bank) = design(&ula(8), &targets, power, 2);
        assert!((r.s_r.norm_squared() - power).abs() < 1e-8 * power);
        assert!((r.r_tilde.trace().re - power).abs() < 1e-6 * power);
        let rebuilt = &r.s_r * r.s_r.adjoint();
        assert!((rebuilt - &r.r_tilde).norm() < 1e-6 * r.r_tilde.norm());
        assert!(r.beta > 0.0);
        assert!(r.history.windows(2).all(|w| w[1] <= w[0] + 1e-10));
        // Beta is a true minimizer.
        let ps = bank.pattern_rank_one(&r.s_r);
        let m = mismatch(r.beta, &pd, &ps);
        assert!(mismatch(r.beta + 1e-3 * r.beta, &pd, &ps) >= m);
        assert!(mismatch(r.beta - 1e-3 * r.beta, &pd, &ps) >= m);
    }

    #[test]
    fn three_targets_give_three_lobes() {
        let targets = [
            Direction::from_degrees(-60.0, 0.0),
            Direction::from_degrees(10.0, 0.0),
            Direction::from_degrees(55.0, 0.0),
        ];
        let (r, _, bank) = design(&ula(16), &targets, 0.01, 3);
        let ps = bank.pattern_rank_one(&r.s_r);
        let peak = ps.max();
        for t in [-60, 10, 55] {
            let idx = (t + 90) as usize;
            let local = (idx - 5..=idx + 5).map(|i| ps[(i, 0)]).fold(0.0, f64::max);
            assert!(local > 0.3 * peak, "weak lobe at {t} deg: {local} vs {peak}");
        }
    }

    #[test]
    fn small_instance_beats_random_search() {
        // N = 3 oracle: random search over the unit sphere in C^3.
        let targets = [Direction::from_degrees(30.0, 0.0)];
        let (r, pd, bank) = design(&ula(3), &targets, 1.0, 4);
        let eval = |s: &CVector| {
            let ps = bank.pattern_rank_one(s);
            mismatch(optimal_beta(&pd, &ps).unwrap(), &pd, &ps)
        };
        let got = eval(&r.s_r);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut best = f64::INFINITY;
        for _ in 0..200_000 {
            let s = CVector::from_fn(3, |_, _| {
                Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
            })
            .normalize();
            best = best.min(eval(&s));
        }
        assert!(got <= best * 1.01, "design {got} vs random search {best}");
    }

    #[test]
    fn zero_power_is_rejected() {
        let grid = deg_grid();
        let pos = ula(4);
        let targets = [Direction::from_degrees(0.0, 0.0)];
        let pd = ideal_beampattern(&targets, 0.2, &grid).unwrap();
        let bank = SteeringBank::new(&grid, &pos, LAMBDA);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let gx = CVector::zeros(4);
        assert!(design_reference_signal(
            &gx,
            &pd,
            &bank,
            &targets,
            None,
            None,
            &DesignOptions::default(),
            &mut rng
        )
        .is_err());
    }

    proptest! {
        #[test]
        fn psd_patterns_are_nonnegative(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r = random_psd(&mut rng, 4);
            let grid = AngleGrid::new(vec![-1.0, -0.3, 0.4, 1.2], vec![0.0, 0.5]);
            let pos = PositionSet::from_pairs(&[(0.0, 0.0), (0.1, 0.0), (0.0, 0.1), (0.3, 0.2)]);
            let ps = beampattern(&r, &pos, LAMBDA, &grid).unwrap();
            prop_assert!(ps.iter().all(|&v| v >= -1e-10));
        }

        #[test]
        fn beta_matches_golden_section(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pd = DMatrix::from_fn(6, 1, |_, _| if rng.random_bool(0.5) { 1.0 } else { 0.0 });
            prop_assume!(pd.sum() > 0.0);
            let ps = DMatrix::from_fn(6, 1, |_, _| rng.random_range(0.0..3.0));
            let beta = optimal_beta(&pd, &ps).unwrap();
            // Golden-section oracle on [0, 10].
            let phi = (5f64.sqrt() - 1.0) / 2.0;
            let (mut lo, mut hi) = (0.0f64, 10.0f64);
            for _ in 0..200 {
                let a = hi - phi * (hi - lo);
                let b = lo + phi * (hi - lo);
                if mismatch(a, &pd, &ps) < mismatch(b, &pd, &ps) { hi = b } else { lo = a }
            }
            let oracle = (0.5 * (lo + hi)).max(BETA_MIN);
            prop_assert!((beta - oracle).abs() < 1e-6);
        }
    }
}
