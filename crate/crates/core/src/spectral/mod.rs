//! Fourier representation of the vorticity/temperature pair on the 2-torus
//! `[0, 2π)²` and the deterministic operators of the Boussinesq system.
//!
//! A real field `f` is stored through its full complex coefficient array
//! `f̂_k`, `f(x) = Σ_k f̂_k e^{ik·x}`, in FFT ordering. Every field produced by
//! this module is real (conjugate symmetric), mean zero, and supported on the
//! 2/3-rule retained set `|k1|, |k2| ≤ (n - 1) / 3`.

mod basis;
mod field;
mod ops;

pub use basis::{psi_state, sigma_state, BasisElement, RealBasis, Slot};
pub use field::{ModeIndex, SpectralField, SpectralState};
pub use ops::Spectral;

use crate::error::{invalid, Result};
use serde::{Deserialize, Serialize};

/// `(2π)²`, the area of the torus. `∫ f g dx = (2π)² Σ_k f̂_k conj(ĝ_k)`.
pub const TORUS_AREA: f64 = 4.0 * std::f64::consts::PI * std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsParams {
    /// Kinematic viscosity.
    pub nu1: f64,
    /// Thermal diffusivity.
    pub nu2: f64,
    /// Buoyancy coefficient.
    pub g: f64,
}

impl Default for PhysicsParams {
    fn default() -> Self {
        Self {
            nu1: 1.0,
            nu2: 1.0,
            g: 1.0,
        }
    }
}

impl PhysicsParams {
    pub fn new(nu1: f64, nu2: f64, g: f64) -> Result<Self> {
        let p = Self { nu1, nu2, g };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nu1 > 0.0 && self.nu1.is_finite()) {
            return Err(invalid("nu1", "nu1 must be positive"));
        }
        if !(self.nu2 > 0.0 && self.nu2.is_finite()) {
            return Err(invalid("nu2", "nu2 must be positive"));
        }
        if self.g == 0.0 || !self.g.is_finite() {
            return Err(invalid("g", "g must be finite and nonzero"));
        }
        Ok(())
    }

    /// `ν1 ν2 / g²`, the weight on the vorticity in the phase-space norm.
    pub fn zeta_star(&self) -> f64 {
        self.nu1 * self.nu2 / (self.g * self.g)
    }

    /// `min(ν1, ν2)`.
    pub fn nu(&self) -> f64 {
        self.nu1.min(self.nu2)
    }
}
