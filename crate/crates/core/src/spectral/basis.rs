use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{ModeIndex, Spectral, SpectralField, SpectralState, TORUS_AREA};
use crate::error::{Error, Result};

/// Which component of `U = (w, θ)` a trigonometric basis vector lives in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Slot {
    /// Vorticity slot (`ψ` vectors).
    W,
    /// Temperature slot (`σ` vectors).
    Theta,
}

/// `cos(k·x)` (parity 0) or `sin(k·x)` (parity 1) in one slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BasisElement {
    pub slot: Slot,
    pub mode: ModeIndex,
    pub parity: u8,
}

fn trig_coefficient(parity: u8) -> Complex64 {
    if parity % 2 == 0 {
        Complex64::new(0.5, 0.0)
    } else {
        Complex64::new(0.0, -0.5)
    }
}

fn trig_field(n: usize, k: ModeIndex, parity: u8) -> SpectralField {
    let mut f = SpectralField::zeros(n);
    f.set_mode(k, trig_coefficient(parity));
    f
}

/// `σ_k^m = (0, cos k·x)` for `m = 0`, `(0, sin k·x)` for `m = 1`.
pub fn sigma_state(n: usize, k: ModeIndex, parity: u8) -> SpectralState {
    SpectralState {
        w: SpectralField::zeros(n),
        theta: trig_field(n, k, parity),
    }
}

/// `ψ_k^m = (cos k·x, 0)` for `m = 0`, `(sin k·x, 0)` for `m = 1`.
pub fn psi_state(n: usize, k: ModeIndex, parity: u8) -> SpectralState {
    SpectralState {
        w: trig_field(n, k, parity),
        theta: SpectralField::zeros(n),
    }
}

impl BasisElement {
    pub fn state(&self, n: usize) -> SpectralState {
        match self.slot {
            Slot::W => psi_state(n, self.mode, self.parity),
            Slot::Theta => sigma_state(n, self.mode, self.parity),
        }
    }
}

/// `L²`-orthonormal real basis `{ψ_k^m, σ_k^m} / π√2` over a set of
/// canonical modes.
#[derive(Clone, Debug)]
pub struct RealBasis {
    n: usize,
    elements: Vec<BasisElement>,
}

impl RealBasis {
    pub fn new(n: usize, modes: &[ModeIndex]) -> Result<Self> {
        let mut elements = Vec::with_capacity(4 * modes.len());
        for &k in modes {
            if !k.is_canonical() {
                return Err(Error::InvalidParameter {
                    name: "mode",
                    reason: format!("{k} is not in the canonical half lattice"),
                });
            }
            for slot in [Slot::W, Slot::Theta] {
                for parity in 0..2 {
                    elements.push(BasisElement { slot, mode: k, parity });
                }
            }
        }
        Ok(Self { n, elements })
    }

    /// Basis of `H_N`: retained modes with `|k| ≤ N`.
    pub fn low_modes(spec: &Spectral, big_n: u32) -> Self {
        let cap = (big_n as i64).pow(2);
        let modes: Vec<ModeIndex> = spec
            .canonical_modes()
            .into_iter()
            .filter(|k| k.norm_sq() <= cap)
            .collect();
        Self::new(spec.resolution(), &modes).expect("canonical")
    }

    /// Basis of the whole retained space.
    pub fn full(spec: &Spectral) -> Self {
        Self::new(spec.resolution(), &spec.canonical_modes()).expect("canonical")
    }

    pub fn dim(&self) -> usize {
        self.elements.len()
    }

    pub fn elements(&self) -> &[BasisElement] {
        &self.elements
    }

    fn unit() -> f64 {
        (0.5 * TORUS_AREA).sqrt()
    }

    /// Coordinates `⟨U, e_i⟩`.
    pub fn coords(&self, u: &SpectralState) -> Vec<f64> {
        let s = 2.0 * Self::unit();
        self.elements
            .iter()
            .map(|e| {
                let c = match e.slot {
                    Slot::W => u.w.get(e.mode),
                    Slot::Theta => u.theta.get(e.mode),
                };
                if e.parity == 0 {
                    s * c.re
                } else {
                    -s * c.im
                }
            })
            .collect()
    }

    /// `Σ_i c_i e_i`.
    pub fn state(&self, coords: &[f64]) -> Result<SpectralState> {
        if coords.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: coords.len(),
            });
        }
        let mut out = SpectralState::zeros(self.n);
        let s = 1.0 / Self::unit();
        for (e, &c) in self.elements.iter().zip(coords) {
            let f = match e.slot {
                Slot::W => &mut out.w,
                Slot::Theta => &mut out.theta,
            };
            let cur = f.get(e.mode);
            f.set_mode(e.mode, cur + trig_coefficient(e.parity) * (c * s));
        }
        Ok(out)
    }

    /// The `i`-th unit vector as a state.
    pub fn vector(&self, i: usize) -> SpectralState {
        let e = self.elements[i];
        e.state(self.n).scaled(1.0 / Self::unit())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basis_is_orthonormal() {
        let spec = Spectral::new(12).unwrap();
        let b = RealBasis::low_modes(&spec, 2);
        for i in 0..b.dim() {
            for j in 0..b.dim() {
                let ip = b.vector(i).inner(&b.vector(j));
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((ip - expect).abs() < 1e-13, "{i} {j} {ip}");
            }
        }
    }

    #[test]
    fn coords_round_trip() {
        let spec = Spectral::new(12).unwrap();
        let b = RealBasis::full(&spec);
        let c: Vec<f64> = (0..b.dim()).map(|i| (i as f64 * 0.37).sin()).collect();
        let back = b.coords(&b.state(&c).unwrap());
        for (x, y) in c.iter().zip(&back) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
