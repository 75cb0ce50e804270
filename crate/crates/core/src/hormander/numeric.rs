use super::{ratio_to_f64, BasisSymbol, BracketDirection, SymbolSlot};
use crate::error::Result;
use crate::spectral::{psi_state, sigma_state, ModeIndex, PhysicsParams, Spectral, SpectralState};

/// A vector field on the Galerkin phase space.
pub type VectorField<'a> = dyn Fn(&SpectralState) -> Result<SpectralState> + 'a;

pub fn symbol_state(n: usize, sym: &BasisSymbol) -> SpectralState {
    match sym.slot {
        SymbolSlot::Sigma => sigma_state(n, sym.mode, sym.parity),
        SymbolSlot::Psi => psi_state(n, sym.mode, sym.parity),
    }
}

pub fn direction_state(n: usize, dir: &BracketDirection, g: f64) -> SpectralState {
    let scale = g.powi(dir.g_power);
    let mut out = SpectralState::zeros(n);
    for (sym, c) in &dir.terms {
        out.axpy(scale * ratio_to_f64(*c), &symbol_state(n, sym));
    }
    out
}

/// `[E1, E2](U) = ∇E2(U) E1(U) - ∇E1(U) E2(U)` by central differences with
/// step `eps` relative to the size of the pushed direction. Exact up to
/// rounding for fields of degree at most two.
pub fn numerical_lie_bracket(
    e1: &VectorField<'_>,
    e2: &VectorField<'_>,
    u: &SpectralState,
    eps: f64,
) -> Result<SpectralState> {
    let v1 = e1(u)?;
    let v2 = e2(u)?;
    let dir = |e: &VectorField<'_>, v: &SpectralState| -> Result<SpectralState> {
        let size = v.norm_l2();
        if size == 0.0 {
            return Ok(SpectralState::zeros(u.resolution()));
        }
        let h = eps * (1.0 + u.norm_l2()) / size;
        let mut d = e(&u.plus(h, v))?;
        d.axpy(-1.0, &e(&u.plus(-h, v))?);
        d.scale(0.5 / h);
        Ok(d)
    };
    let mut out = dir(e2, &v1)?;
    out.axpy(-1.0, &dir(e1, &v2)?);
    Ok(out)
}

/// `Y_j^m(U) = [F, σ_j^m](U) = Aσ + B(U, σ) - Gσ`.
pub fn bracket_y(spec: &Spectral, p: &PhysicsParams, j: ModeIndex, m: u8, u: &SpectralState) -> Result<SpectralState> {
    let sigma = sigma_state(spec.resolution(), j, m);
    y_of(spec, p, &sigma, u)
}

fn y_of(spec: &Spectral, p: &PhysicsParams, sigma: &SpectralState, u: &SpectralState) -> Result<SpectralState> {
    let mut y = spec.apply_a(sigma, p);
    y.axpy(1.0, &spec.nonlinear(u, sigma)?);
    y.axpy(-1.0, &spec.apply_g(sigma, p));
    Ok(y)
}

/// `Z_j^m(U) = [F, Y_j^m](U) = B(F(U), σ) + AY + B(U, Y) + B(Y, U) - GY`.
pub fn bracket_z(spec: &Spectral, p: &PhysicsParams, j: ModeIndex, m: u8, u: &SpectralState) -> Result<SpectralState> {
    let sigma = sigma_state(spec.resolution(), j, m);
    let y = y_of(spec, p, &sigma, u)?;
    let mut z = spec.nonlinear(&spec.drift(u, p)?, &sigma)?;
    z.axpy(1.0, &spec.apply_a(&y, p));
    z.axpy(1.0, &spec.nonlinear(u, &y)?);
    z.axpy(1.0, &spec.nonlinear(&y, u)?);
    z.axpy(-1.0, &spec.apply_g(&y, p));
    Ok(z)
}
