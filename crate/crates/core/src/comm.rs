//! Symbols, received-signal simulation, the communication MSE, the scalar
//! estimator and bit-error counting.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::channel::{CMatrix, CVector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Constellation {
    Qpsk,
    Qam16,
}

const QAM16_LEVELS: [f64; 4] = [-3.0, -1.0, 1.0, 3.0];
/// Gray labels of `QAM16_LEVELS`, two bits per axis.
const QAM16_GRAY: [[u8; 2]; 4] = [[0, 0], [0, 1], [1, 1], [1, 0]];

impl Constellation {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "qpsk" => Some(Self::Qpsk),
            "16qam" => Some(Self::Qam16),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Qpsk => "qpsk",
            Self::Qam16 => "16qam",
        }
    }

    pub fn bits_per_symbol(self) -> usize {
        match self {
            Self::Qpsk => 2,
            Self::Qam16 => 4,
        }
    }

    /// Every point, indexed by the integer value of its bit label.
    pub fn alphabet(self) -> Vec<Complex64> {
        let b = self.bits_per_symbol();
        (0..1usize << b)
            .map(|v| {
                let bits: Vec<u8> = (0..b).map(|i| ((v >> (b - 1 - i)) & 1) as u8).collect();
                self.map(&bits)
            })
            .collect()
    }

    /// Gray mapping with unit average energy.
    pub fn map(self, bits: &[u8]) -> Complex64 {
        match self {
            Self::Qpsk => {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                Complex64::new(s * (1.0 - 2.0 * bits[0] as f64), s * (1.0 - 2.0 * bits[1] as f64))
            }
            Self::Qam16 => {
                let level = |b: &[u8]| {
                    let idx = QAM16_GRAY.iter().position(|g| g == b).expect("two-bit label");
                    QAM16_LEVELS[idx]
                };
                Complex64::new(level(&bits[0..2]), level(&bits[2..4])) / 10f64.sqrt()
            }
        }
    }

    /// Minimum-distance decision, returned as bits.
    pub fn demap(self, z: Complex64) -> Vec<u8> {
        match self {
            Self::Qpsk => vec![(z.re < 0.0) as u8, (z.im < 0.0) as u8],
            Self::Qam16 => {
                let scaled = z * 10f64.sqrt();
                let axis = |x: f64| {
                    let idx = if x < -2.0 {
                        0
                    } else if x < 0.0 {
                        1
                    } else if x < 2.0 {
                        2
                    } else {
                        3
                    };
                    QAM16_GRAY[idx]
                };
                let (i, q) = (axis(scaled.re), axis(scaled.im));
                vec![i[0], i[1], q[0], q[1]]
            }
        }
    }
}

/// One channel use of K user symbols and their bit labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolBlock {
    pub s_c: CVector,
    pub constellation: Constellation,
    /// Bits of user k in `bits[k]`.
    pub bits: Vec<Vec<u8>>,
}

pub fn generate_symbols<R: Rng + ?Sized>(k: usize, constellation: Constellation, rng: &mut R) -> SymbolBlock {
    let b = constellation.bits_per_symbol();
    let bits: Vec<Vec<u8>> = (0..k)
        .map(|_| (0..b).map(|_| rng.random_range(0..2u8)).collect())
        .collect();
    let s_c = CVector::from_iterator(k, bits.iter().map(|b| constellation.map(b)));
    SymbolBlock {
        s_c,
        constellation,
        bits,
    }
}

/// Noiseless cascade H_rc^H Theta^H G x, given g = G x.
pub fn cascade(h_rc: &CMatrix, theta: &CVector, gx: &CVector) -> CVector {
    let v = CVector::from_fn(theta.len(), |n, _| theta[n].conj() * gx[n]);
    h_rc.adjoint() * v
}

/// Circularly-symmetric complex Gaussian sample of variance `var`.
pub fn complex_noise<R: Rng + ?Sized>(var: f64, rng: &mut R) -> Complex64 {
    let s = (0.5 * var).sqrt();
    Complex64::new(
        s * rng.sample::<f64, _>(StandardNormal),
        s * rng.sample::<f64, _>(StandardNormal),
    )
}

/// omega (H_rc^H Theta^H G x + n) with fresh receiver noise.
pub fn simulate_rx<R: Rng + ?Sized>(
    h_rc: &CMatrix,
    theta: &CVector,
    gx: &CVector,
    sigma0_sq: f64,
    omega: f64,
    rng: &mut R,
) -> CVector {
    cascade(h_rc, theta, gx).map(|c| (c + complex_noise(sigma0_sq, rng)) * omega)
}

/// ||s_c - omega c||^2 + K omega^2 sigma0^2 with c the noiseless cascade.
pub fn comm_mse_from_cascade(s_c: &CVector, omega: f64, c: &CVector, sigma0_sq: f64) -> f64 {
    let k = s_c.len() as f64;
    (s_c - c * Complex64::from(omega)).norm_squared() + k * omega * omega * sigma0_sq
}

pub fn comm_mse(s_c: &CVector, omega: f64, h_rc: &CMatrix, theta: &CVector, gx: &CVector, sigma0_sq: f64) -> f64 {
    comm_mse_from_cascade(s_c, omega, &cascade(h_rc, theta, gx), sigma0_sq)
}

/// Minimizer of [`comm_mse`] over real omega.
pub fn optimal_estimator(s_c: &CVector, h_rc: &CMatrix, theta: &CVector, gx: &CVector, sigma0_sq: f64) -> Result<f64> {
    estimator_from_cascade(s_c, &cascade(h_rc, theta, gx), sigma0_sq)
}

pub fn estimator_from_cascade(s_c: &CVector, c: &CVector, sigma0_sq: f64) -> Result<f64> {
    let num = s_c.dotc(c).re;
    let den = c.norm_squared() + s_c.len() as f64 * sigma0_sq;
    if !(den > 0.0) {
        return Err(Error::domain(
            "estimator denominator vanishes (no noise and zero cascade)",
        ));
    }
    Ok(num / den)
}

/// Bit errors over a number of transmissions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct BerCount {
    pub errors: u64,
    pub bits: u64,
}

impl BerCount {
    pub fn ber(&self) -> f64 {
        if self.bits == 0 {
            f64::NAN
        } else {
            self.errors as f64 / self.bits as f64
        }
    }

    pub fn merge(&mut self, other: BerCount) {
        self.errors += other.errors;
        self.bits += other.bits;
    }
}

/// Transmits `block` `frames` times through the cascade with fresh noise,
/// scales by omega and demaps per user.
pub fn ber_frames<R: Rng + ?Sized>(
    block: &SymbolBlock,
    cascade: &CVector,
    omega: f64,
    sigma0_sq: f64,
    frames: usize,
    rng: &mut R,
) -> Result<BerCount> {
    if frames == 0 {
        return Err(Error::domain("BER needs at least one frame"));
    }
    let mut count = BerCount::default();
    for _ in 0..frames {
        for (k, tx) in block.bits.iter().enumerate() {
            let est = (cascade[k] + complex_noise(sigma0_sq, rng)) * omega;
            let rx = block.constellation.demap(est);
            count.errors += tx.iter().zip(&rx).filter(|(a, b)| a != b).count() as u64;
            count.bits += tx.len() as u64;
        }
    }
    Ok(count)
}
