use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};

use super::{ModeIndex, PhysicsParams, SpectralField, SpectralState};
use crate::error::{invalid, Error, Result};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Pseudo-spectral operator context for one grid resolution.
///
/// Holds FFT plans and wavenumber tables; all operators are pure functions of
/// their arguments, so one context can be shared across threads.
#[derive(Clone)]
pub struct Spectral {
    n: usize,
    cutoff: i32,
    wn: Vec<i32>,
    retained: Vec<bool>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Spectral {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Spectral")
            .field("n", &self.n)
            .field("cutoff", &self.cutoff)
            .finish()
    }
}

impl Spectral {
    /// Context for an `n × n` grid; `n` must be even and at least 8.
    pub fn new(n: usize) -> Result<Self> {
        if n < 8 || n % 2 != 0 {
            return Err(invalid("resolution", "grid size must be even and >= 8"));
        }
        let cutoff = ((n - 1) / 3) as i32;
        let wn: Vec<i32> = (0..n)
            .map(|i| if i < n / 2 { i as i32 } else { i as i32 - n as i32 })
            .collect();
        let mut retained = vec![false; n * n];
        for a in 0..n {
            for b in 0..n {
                let (k1, k2) = (wn[a], wn[b]);
                retained[a * n + b] =
                    (k1 != 0 || k2 != 0) && k1.abs() <= cutoff && k2.abs() <= cutoff && a != n / 2 && b != n / 2;
            }
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            n,
            cutoff,
            wn,
            retained,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        })
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    /// Largest `|k_i|` kept by the 2/3 rule.
    pub fn cutoff(&self) -> i32 {
        self.cutoff
    }

    pub fn is_retained(&self, k: ModeIndex) -> bool {
        !k.is_zero() && k.k1.abs() <= self.cutoff && k.k2.abs() <= self.cutoff
    }

    /// Retained modes in the half lattice, ordered by `(|k|², k1, k2)`.
    pub fn canonical_modes(&self) -> Vec<ModeIndex> {
        let c = self.cutoff;
        let mut out: Vec<ModeIndex> = (0..=c)
            .flat_map(|k1| (-c..=c).map(move |k2| ModeIndex::new(k1, k2)))
            .filter(|k| k.is_canonical())
            .collect();
        out.sort_by_key(|k| (k.norm_sq(), k.k1, k.k2));
        out
    }

    /// Random retained state with coefficients `N(0,1) · scale / |k|^decay`
    /// in both slots.
    pub fn random_state<R: Rng + ?Sized>(&self, rng: &mut R, scale: f64, decay: f64) -> SpectralState {
        let mut out = self.zero_state();
        for k in self.canonical_modes() {
            let s = scale / k.norm().powf(decay);
            for f in [&mut out.w, &mut out.theta] {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                f.set_mode(k, Complex64::new(re, im) * s);
            }
        }
        out
    }

    pub fn zero_field(&self) -> SpectralField {
        SpectralField::zeros(self.n)
    }

    pub fn zero_state(&self) -> SpectralState {
        SpectralState::zeros(self.n)
    }

    #[inline]
    fn k_at(&self, idx: usize) -> (f64, f64) {
        (self.wn[idx / self.n] as f64, self.wn[idx % self.n] as f64)
    }

    fn check_field(&self, f: &SpectralField) -> Result<()> {
        if f.resolution() != self.n {
            return Err(Error::ResolutionMismatch(self.n, f.resolution()));
        }
        Ok(())
    }

    fn check_state(&self, u: &SpectralState) -> Result<()> {
        self.check_field(&u.w)?;
        self.check_field(&u.theta)
    }

    /// Zeroes every coefficient outside the retained set (including the mean).
    pub fn truncate(&self, f: &mut SpectralField) {
        for (c, keep) in f.coeffs_mut().iter_mut().zip(&self.retained) {
            if !keep {
                *c = ZERO;
            }
        }
    }

    pub fn truncate_state(&self, u: &mut SpectralState) {
        self.truncate(&mut u.w);
        self.truncate(&mut u.theta);
    }

    fn map_modes(&self, f: &SpectralField, op: impl Fn(f64, f64, Complex64) -> Complex64) -> SpectralField {
        let coeffs = f
            .coeffs()
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                if self.retained[i] {
                    let (k1, k2) = self.k_at(i);
                    op(k1, k2, c)
                } else {
                    ZERO
                }
            })
            .collect();
        SpectralField::from_coeffs(self.n, coeffs).expect("same length")
    }

    pub fn dx(&self, f: &SpectralField) -> SpectralField {
        self.map_modes(f, |k1, _, c| I * k1 * c)
    }

    pub fn dy(&self, f: &SpectralField) -> SpectralField {
        self.map_modes(f, |_, k2, c| I * k2 * c)
    }

    /// Velocity `u = K * w` with `∂x u2 - ∂y u1 = w` and `∇·u = 0`:
    /// `u = (-∂y Ψ, ∂x Ψ)` for the stream function `ΔΨ = w`.
    pub fn biot_savart(&self, w: &SpectralField) -> Result<(SpectralField, SpectralField)> {
        self.check_field(w)?;
        if w.mean() != ZERO {
            return Err(Error::NonzeroMean);
        }
        let u1 = self.map_modes(w, |k1, k2, c| I * (k2 * (c / (k1 * k1 + k2 * k2))));
        let u2 = self.map_modes(w, |k1, k2, c| -I * (k1 * (c / (k1 * k1 + k2 * k2))));
        Ok((u1, u2))
    }

    /// `∂x u2 - ∂y u1`.
    pub fn curl_perp(&self, u1: &SpectralField, u2: &SpectralField) -> SpectralField {
        let mut out = self.dx(u2);
        out.axpy(-1.0, &self.dy(u1));
        out
    }

    /// In-place unnormalised inverse 2D transform. Output is transposed.
    fn inverse_transposed(&self, buf: &mut [Complex64], scratch: &mut Vec<Complex64>) {
        scratch.resize(self.inv.get_inplace_scratch_len(), ZERO);
        self.inv.process_with_scratch(buf, scratch);
        transpose_square(buf, self.n);
        self.inv.process_with_scratch(buf, scratch);
    }

    /// Forward 2D transform of transposed physical data, normalised by `1/n²`.
    fn forward_from_transposed(&self, buf: &mut [Complex64], scratch: &mut Vec<Complex64>) {
        scratch.resize(self.fwd.get_inplace_scratch_len(), ZERO);
        self.fwd.process_with_scratch(buf, scratch);
        transpose_square(buf, self.n);
        self.fwd.process_with_scratch(buf, scratch);
        let s = 1.0 / (self.n * self.n) as f64;
        buf.iter_mut().for_each(|c| *c *= s);
    }

    /// Physical values of two real fields `(a, b)` from one complex inverse
    /// transform of `â + i b̂`. Layout is transposed.
    fn packed_inverse(&self, a: &[Complex64], b: &[Complex64], scratch: &mut Vec<Complex64>) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = a.iter().zip(b).map(|(x, y)| x + I * y).collect();
        self.inverse_transposed(&mut buf, scratch);
        buf
    }

    /// Splits the forward transform of `p + i q` (both real) into `(p̂, q̂)`
    /// restricted to the retained set.
    fn packed_forward(&self, mut buf: Vec<Complex64>, scratch: &mut Vec<Complex64>) -> (SpectralField, SpectralField) {
        self.forward_from_transposed(&mut buf, scratch);
        let n = self.n;
        let mut p = vec![ZERO; n * n];
        let mut q = vec![ZERO; n * n];
        for a in 0..n {
            for b in 0..n {
                let i = a * n + b;
                if !self.retained[i] {
                    continue;
                }
                let j = ((n - a) % n) * n + (n - b) % n;
                let (h, hm) = (buf[i], buf[j].conj());
                p[i] = 0.5 * (h + hm);
                q[i] = -0.5 * I * (h - hm);
            }
        }
        (
            SpectralField::from_coeffs(n, p).expect("len"),
            SpectralField::from_coeffs(n, q).expect("len"),
        )
    }

    /// Physical grid values, `out[i1 * n + i2] = f(2π i1 / n, 2π i2 / n)`.
    pub fn to_physical(&self, f: &SpectralField) -> Vec<f64> {
        let mut buf = f.coeffs().to_vec();
        let mut scratch = Vec::new();
        self.inverse_transposed(&mut buf, &mut scratch);
        transpose_square(&mut buf, self.n);
        buf.iter().map(|c| c.re).collect()
    }

    /// Coefficients of a real grid function (no truncation, mean kept).
    pub fn from_physical(&self, values: &[f64]) -> Result<SpectralField> {
        if values.len() != self.n * self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n * self.n,
                got: values.len(),
            });
        }
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        transpose_square(&mut buf, self.n);
        let mut scratch = Vec::new();
        self.forward_from_transposed(&mut buf, &mut scratch);
        SpectralField::from_coeffs(self.n, buf)
    }

    /// `B(U, V) = ((K*w_U)·∇w_V, (K*w_U)·∇θ_V)`, evaluated pseudo-spectrally
    /// with 2/3-rule dealiasing. Exact Galerkin projection for retained inputs.
    pub fn nonlinear(&self, u: &SpectralState, v: &SpectralState) -> Result<SpectralState> {
        self.check_state(u)?;
        self.check_state(v)?;
        let mut scratch = Vec::new();
        let vel = self.velocity_physical(&u.w, &mut scratch);
        let gw = self.gradient_physical(&v.w, &mut scratch);
        let gt = self.gradient_physical(&v.theta, &mut scratch);
        let prod: Vec<Complex64> = (0..vel.len())
            .map(|i| {
                let (u1, u2) = (vel[i].re, vel[i].im);
                let nw = u1 * gw[i].re + u2 * gw[i].im;
                let nt = u1 * gt[i].re + u2 * gt[i].im;
                Complex64::new(nw, nt)
            })
            .collect();
        let (w, theta) = self.packed_forward(prod, &mut scratch);
        Ok(SpectralState { w, theta })
    }

    /// `∇B(U)ξ = B(U, ξ) + B(ξ, U)`.
    pub fn nonlinear_linearized(&self, u: &SpectralState, xi: &SpectralState) -> Result<SpectralState> {
        self.check_state(u)?;
        self.check_state(xi)?;
        let mut scratch = Vec::new();
        let vu = self.velocity_physical(&u.w, &mut scratch);
        let vx = self.velocity_physical(&xi.w, &mut scratch);
        let gxw = self.gradient_physical(&xi.w, &mut scratch);
        let gxt = self.gradient_physical(&xi.theta, &mut scratch);
        let guw = self.gradient_physical(&u.w, &mut scratch);
        let gut = self.gradient_physical(&u.theta, &mut scratch);
        let prod: Vec<Complex64> = (0..vu.len())
            .map(|i| {
                let (a1, a2) = (vu[i].re, vu[i].im);
                let (b1, b2) = (vx[i].re, vx[i].im);
                let nw = a1 * gxw[i].re + a2 * gxw[i].im + b1 * guw[i].re + b2 * guw[i].im;
                let nt = a1 * gxt[i].re + a2 * gxt[i].im + b1 * gut[i].re + b2 * gut[i].im;
                Complex64::new(nw, nt)
            })
            .collect();
        let (w, theta) = self.packed_forward(prod, &mut scratch);
        Ok(SpectralState { w, theta })
    }

    /// `L²` adjoint of `ξ ↦ ∇B(U)ξ`, i.e. `ρ ↦ -B(U, ρ) + T_U ρ` where `T_U`
    /// is the adjoint of `ξ ↦ B(ξ, U)`:
    /// `T_U ρ = (Δ⁻¹(∂y v1 - ∂x v2), 0)` with `v = ρ_w ∇w_U + ρ_θ ∇θ_U`.
    pub fn nonlinear_linearized_adjoint(&self, u: &SpectralState, rho: &SpectralState) -> Result<SpectralState> {
        self.check_state(u)?;
        self.check_state(rho)?;
        let mut scratch = Vec::new();
        let vu = self.velocity_physical(&u.w, &mut scratch);
        let grw = self.gradient_physical(&rho.w, &mut scratch);
        let grt = self.gradient_physical(&rho.theta, &mut scratch);
        let guw = self.gradient_physical(&u.w, &mut scratch);
        let gut = self.gradient_physical(&u.theta, &mut scratch);
        let rr = self.packed_inverse(rho.w.coeffs(), rho.theta.coeffs(), &mut scratch);

        // transport part: -(u_U · ∇ρ), both components
        let transport: Vec<Complex64> = (0..vu.len())
            .map(|i| {
                let (a1, a2) = (vu[i].re, vu[i].im);
                Complex64::new(-(a1 * grw[i].re + a2 * grw[i].im), -(a1 * grt[i].re + a2 * grt[i].im))
            })
            .collect();
        let (mut w, theta) = self.packed_forward(transport, &mut scratch);

        let v: Vec<Complex64> = (0..vu.len())
            .map(|i| {
                let (rw, rt) = (rr[i].re, rr[i].im);
                Complex64::new(rw * guw[i].re + rt * gut[i].re, rw * guw[i].im + rt * gut[i].im)
            })
            .collect();
        let (v1, v2) = self.packed_forward(v, &mut scratch);
        let curl = self.map_modes(&v1, |_, k2, c| I * k2 * c);
        let curl2 = self.map_modes(&v2, |k1, _, c| I * k1 * c);
        for (i, c) in w.coeffs_mut().iter_mut().enumerate() {
            if self.retained[i] {
                let (k1, k2) = self.k_at(i);
                let q = curl.coeffs()[i] - curl2.coeffs()[i];
                *c -= q / (k1 * k1 + k2 * k2);
            }
        }
        Ok(SpectralState { w, theta })
    }

    fn velocity_physical(&self, w: &SpectralField, scratch: &mut Vec<Complex64>) -> Vec<Complex64> {
        let n2 = self.n * self.n;
        let mut a = vec![ZERO; n2];
        let mut b = vec![ZERO; n2];
        for i in 0..n2 {
            if self.retained[i] {
                let (k1, k2) = self.k_at(i);
                let x = w.coeffs()[i] / (k1 * k1 + k2 * k2);
                a[i] = I * (k2 * x);
                b[i] = -I * (k1 * x);
            }
        }
        self.packed_inverse(&a, &b, scratch)
    }

    fn gradient_physical(&self, f: &SpectralField, scratch: &mut Vec<Complex64>) -> Vec<Complex64> {
        let n2 = self.n * self.n;
        let mut a = vec![ZERO; n2];
        let mut b = vec![ZERO; n2];
        for i in 0..n2 {
            if self.retained[i] {
                let (k1, k2) = self.k_at(i);
                let c = f.coeffs()[i];
                a[i] = I * k1 * c;
                b[i] = I * k2 * c;
            }
        }
        self.packed_inverse(&a, &b, scratch)
    }

    /// `AU = (-ν1 Δw, -ν2 Δθ)`.
    pub fn apply_a(&self, u: &SpectralState, p: &PhysicsParams) -> SpectralState {
        SpectralState {
            w: self.map_modes(&u.w, |k1, k2, c| c * (p.nu1 * (k1 * k1 + k2 * k2))),
            theta: self.map_modes(&u.theta, |k1, k2, c| c * (p.nu2 * (k1 * k1 + k2 * k2))),
        }
    }

    /// `GU = (g ∂x θ, 0)`.
    pub fn apply_g(&self, u: &SpectralState, p: &PhysicsParams) -> SpectralState {
        SpectralState {
            w: self.map_modes(&u.theta, |k1, _, c| I * (p.g * k1) * c),
            theta: self.zero_field(),
        }
    }

    /// `G*ρ = (0, -g ∂x ρ_w)`.
    pub fn apply_g_adjoint(&self, rho: &SpectralState, p: &PhysicsParams) -> SpectralState {
        SpectralState {
            w: self.zero_field(),
            theta: self.map_modes(&rho.w, |k1, _, c| -I * (p.g * k1) * c),
        }
    }

    /// `F(U) = -AU - B(U, U) + GU`.
    pub fn drift(&self, u: &SpectralState, p: &PhysicsParams) -> Result<SpectralState> {
        let mut out = self.nonlinear(u, u)?;
        out.scale(-1.0);
        out.axpy(-1.0, &self.apply_a(u, p));
        out.axpy(1.0, &self.apply_g(u, p));
        Ok(out)
    }

    /// `Σ_k (2π)² |k|^{2s} |f̂_k|²` over retained modes.
    pub fn sobolev_sq(&self, f: &SpectralField, s: f64) -> f64 {
        let sum: f64 = f
            .coeffs()
            .iter()
            .enumerate()
            .filter(|(i, _)| self.retained[*i])
            .map(|(i, c)| {
                let (k1, k2) = self.k_at(i);
                (k1 * k1 + k2 * k2).powf(s) * c.norm_sqr()
            })
            .sum();
        super::TORUS_AREA * sum
    }

    /// `sqrt(ζ* |w|²_{H^s} + |θ|²_{H^s})`.
    pub fn weighted_norm(&self, u: &SpectralState, p: &PhysicsParams, s: f64) -> Result<f64> {
        if !(s >= 0.0) {
            return Err(invalid("s", "Sobolev order must be nonnegative"));
        }
        Ok((p.zeta_star() * self.sobolev_sq(&u.w, s) + self.sobolev_sq(&u.theta, s)).sqrt())
    }

    fn project(&self, u: &SpectralState, keep: impl Fn(i64) -> bool) -> SpectralState {
        let f = |fld: &SpectralField| {
            let coeffs = fld
                .coeffs()
                .iter()
                .enumerate()
                .map(|(i, &c)| {
                    let (k1, k2) = (self.wn[i / self.n] as i64, self.wn[i % self.n] as i64);
                    if keep(k1 * k1 + k2 * k2) {
                        c
                    } else {
                        ZERO
                    }
                })
                .collect();
            SpectralField::from_coeffs(self.n, coeffs).expect("len")
        };
        SpectralState {
            w: f(&u.w),
            theta: f(&u.theta),
        }
    }

    /// Keeps modes with `|k| ≤ N` (boundary inclusive).
    pub fn project_p(&self, u: &SpectralState, big_n: u32) -> SpectralState {
        let cap = (big_n as i64) * (big_n as i64);
        self.project(u, |ksq| ksq <= cap)
    }

    /// `Q_N = I - P_N`.
    pub fn project_q(&self, u: &SpectralState, big_n: u32) -> SpectralState {
        let cap = (big_n as i64) * (big_n as i64);
        self.project(u, |ksq| ksq > cap)
    }

    /// Applies a real multiplier `m(|k|²)` per field, e.g. `e^{-ν|k|²dt}`.
    pub fn apply_multiplier(&self, f: &SpectralField, m: &[f64]) -> SpectralField {
        let coeffs = f
            .coeffs()
            .iter()
            .zip(m)
            .zip(&self.retained)
            .map(|((c, s), keep)| if *keep { c * *s } else { ZERO })
            .collect();
        SpectralField::from_coeffs(self.n, coeffs).expect("len")
    }

    /// `|k|²` per storage index (0 outside the retained set).
    pub fn ksq_table(&self) -> Vec<f64> {
        (0..self.n * self.n)
            .map(|i| {
                if self.retained[i] {
                    let (k1, k2) = self.k_at(i);
                    k1 * k1 + k2 * k2
                } else {
                    0.0
                }
            })
            .collect()
    }
}

fn transpose_square(buf: &mut [Complex64], n: usize) {
    for a in 0..n {
        for b in (a + 1)..n {
            buf.swap(a * n + b, b * n + a);
        }
    }
}
