use std::fmt;
use std::ops::{Add, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::TORUS_AREA;
use crate::error::{Error, Result};

/// Integer wavenumber `(k1, k2)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModeIndex {
    pub k1: i32,
    pub k2: i32,
}

impl ModeIndex {
    pub const fn new(k1: i32, k2: i32) -> Self {
        Self { k1, k2 }
    }

    pub fn is_zero(&self) -> bool {
        self.k1 == 0 && self.k2 == 0
    }

    /// Member of the half lattice: `k1 > 0`, or `k1 = 0` and `k2 > 0`.
    pub fn is_canonical(&self) -> bool {
        self.k1 > 0 || (self.k1 == 0 && self.k2 > 0)
    }

    /// Half-lattice representative and whether a negation was needed.
    pub fn canonical(&self) -> (ModeIndex, bool) {
        if self.is_canonical() || self.is_zero() {
            (*self, false)
        } else {
            (-*self, true)
        }
    }

    pub fn norm_sq(&self) -> i64 {
        let (a, b) = (self.k1 as i64, self.k2 as i64);
        a * a + b * b
    }

    pub fn norm(&self) -> f64 {
        (self.norm_sq() as f64).sqrt()
    }

    /// `k^⊥ = (-k2, k1)`.
    pub fn perp(&self) -> ModeIndex {
        ModeIndex::new(-self.k2, self.k1)
    }

    pub fn dot(&self, other: &ModeIndex) -> i64 {
        self.k1 as i64 * other.k1 as i64 + self.k2 as i64 * other.k2 as i64
    }

    pub fn l1(&self) -> i32 {
        self.k1.abs() + self.k2.abs()
    }
}

impl Add for ModeIndex {
    type Output = ModeIndex;
    fn add(self, o: ModeIndex) -> ModeIndex {
        ModeIndex::new(self.k1 + o.k1, self.k2 + o.k2)
    }
}

impl Sub for ModeIndex {
    type Output = ModeIndex;
    fn sub(self, o: ModeIndex) -> ModeIndex {
        ModeIndex::new(self.k1 - o.k1, self.k2 - o.k2)
    }
}

impl Neg for ModeIndex {
    type Output = ModeIndex;
    fn neg(self) -> ModeIndex {
        ModeIndex::new(-self.k1, -self.k2)
    }
}

impl fmt::Display for ModeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.k1, self.k2)
    }
}

/// Fourier coefficients of one real scalar field on an `n × n` grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    n: usize,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            coeffs: vec![Complex64::new(0.0, 0.0); n * n],
        }
    }

    pub fn from_coeffs(n: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                got: coeffs.len(),
            });
        }
        Ok(Self { n, coeffs })
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// Storage index of wavenumber `k`, if representable on this grid.
    pub fn index_of(&self, k: ModeIndex) -> Option<usize> {
        wrap(k.k1, self.n).zip(wrap(k.k2, self.n)).map(|(a, b)| a * self.n + b)
    }

    pub fn get(&self, k: ModeIndex) -> Complex64 {
        self.index_of(k)
            .map(|i| self.coeffs[i])
            .unwrap_or(Complex64::new(0.0, 0.0))
    }

    /// Sets `f̂_k = c` and `f̂_{-k} = conj(c)`.
    pub fn set_mode(&mut self, k: ModeIndex, c: Complex64) {
        let (Some(i), Some(j)) = (self.index_of(k), self.index_of(-k)) else {
            panic!("mode {k} not representable at resolution {}", self.n);
        };
        self.coeffs[i] = c;
        self.coeffs[j] = c.conj();
    }

    pub fn mean(&self) -> Complex64 {
        self.coeffs[0]
    }

    /// Largest violation of `f̂_{-k} = conj(f̂_k)`.
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.n;
        let mut worst = 0.0f64;
        for a in 0..n {
            for b in 0..n {
                let na = (n - a) % n;
                let nb = (n - b) % n;
                let d = (self.coeffs[a * n + b] - self.coeffs[na * n + nb].conj()).norm();
                worst = worst.max(d);
            }
        }
        worst
    }

    /// Enforces conjugate symmetry by averaging each `±k` pair, and zeroes
    /// the mean and Nyquist lines.
    pub fn symmetrize(&mut self) {
        let n = self.n;
        let half = n / 2;
        for a in 0..n {
            for b in 0..n {
                let na = (n - a) % n;
                let nb = (n - b) % n;
                let (i, j) = (a * n + b, na * n + nb);
                if i < j {
                    let avg = 0.5 * (self.coeffs[i] + self.coeffs[j].conj());
                    self.coeffs[i] = avg;
                    self.coeffs[j] = avg.conj();
                } else if i == j {
                    self.coeffs[i].im = 0.0;
                }
            }
        }
        if n % 2 == 0 {
            for m in 0..n {
                self.coeffs[half * n + m] = Complex64::new(0.0, 0.0);
                self.coeffs[m * n + half] = Complex64::new(0.0, 0.0);
            }
        }
        self.coeffs[0] = Complex64::new(0.0, 0.0);
    }

    /// `(2π)² Σ_k Re(f̂_k conj(ĝ_k))`, the `L²` pairing of the real fields.
    pub fn inner(&self, other: &SpectralField) -> f64 {
        debug_assert_eq!(self.n, other.n);
        TORUS_AREA
            * self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a.re * b.re + a.im * b.im)
                .sum::<f64>()
    }

    pub fn norm_l2(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn scale(&mut self, s: f64) {
        self.coeffs.iter_mut().for_each(|c| *c *= s);
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &SpectralField) {
        debug_assert_eq!(self.n, other.n);
        self.coeffs.iter_mut().zip(&other.coeffs).for_each(|(a, b)| *a += b * s);
    }
}

fn wrap(k: i32, n: usize) -> Option<usize> {
    let n_i = n as i32;
    let lim = n_i / 2;
    if k >= lim || k < -lim {
        // The Nyquist line has no conjugate partner; it is never used.
        return None;
    }
    Some(k.rem_euclid(n_i) as usize)
}

/// The phase point `U = (w, θ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralState {
    pub w: SpectralField,
    pub theta: SpectralField,
}

impl SpectralState {
    pub fn zeros(n: usize) -> Self {
        Self {
            w: SpectralField::zeros(n),
            theta: SpectralField::zeros(n),
        }
    }

    pub fn new(w: SpectralField, theta: SpectralField) -> Result<Self> {
        if w.resolution() != theta.resolution() {
            return Err(Error::ResolutionMismatch(w.resolution(), theta.resolution()));
        }
        Ok(Self { w, theta })
    }

    pub fn resolution(&self) -> usize {
        self.w.resolution()
    }

    /// Unweighted `L²(T²)²` inner product `∫ w w' + θ θ'`.
    pub fn inner(&self, other: &SpectralState) -> f64 {
        self.w.inner(&other.w) + self.theta.inner(&other.theta)
    }

    pub fn norm_l2(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        self.w.scale(s);
        self.theta.scale(s);
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.scale(s);
        out
    }

    pub fn axpy(&mut self, s: f64, other: &SpectralState) {
        self.w.axpy(s, &other.w);
        self.theta.axpy(s, &other.theta);
    }

    /// `self + s * other`.
    pub fn plus(&self, s: f64, other: &SpectralState) -> Self {
        let mut out = self.clone();
        out.axpy(s, other);
        out
    }

    pub fn symmetrize(&mut self) {
        self.w.symmetrize();
        self.theta.symmetrize();
    }

    pub fn max_abs(&self) -> f64 {
        self.w.max_abs().max(self.theta.max_abs())
    }

    /// Both fields mean zero and conjugate symmetric to `tol`.
    pub fn is_valid(&self, tol: f64) -> bool {
        self.w.mean().norm() <= tol
            && self.theta.mean().norm() <= tol
            && self.w.symmetry_defect() <= tol
            && self.theta.symmetry_defect() <= tol
    }
}
