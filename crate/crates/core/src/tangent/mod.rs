//! Linearised dynamics along a recorded base trajectory.
//!
//! With `L_n = -∇B(U_n) + G` the tangent step is `ξ' = Eξ + Φ L_n ξ`. The
//! backward step is its exact algebraic adjoint, `ρ = Eρ' + L_n^*(Φρ')`, so
//! forward/backward pairings agree to rounding rather than to `O(dt)`.

mod control;
mod decay;
mod malliavin;

pub use control::{control_and_residual, ControlResidual, WindowReport};
pub use decay::{jacobian_growth_fit, pn_growth_check, qn_decay_check, GrowthFit, PnGrowthReport, QnDecayReport};
pub use malliavin::{
    default_beta, extend_by_zero_block, malliavin_backward, malliavin_consistency, malliavin_forward,
    min_eigen_constrained, min_eigen_probe, JumpContribution, MalliavinMatrix, MinEigenConfig, MinEigenReport,
    MinEigenSample, WindowCheck,
};

use crate::error::{Error, Result};
use crate::integrator::{Stepper, Trajectory};
use crate::spectral::SpectralState;

fn require_full(traj: &Trajectory) -> Result<()> {
    if traj.has_full_states() {
        Ok(())
    } else {
        Err(Error::Granularity(
            "tangent solves need the base state at every step".into(),
        ))
    }
}

fn check_window(traj: &Trajectory, s_idx: usize, t_idx: usize) -> Result<()> {
    if s_idx > t_idx || t_idx > traj.n_steps {
        return Err(Error::Window {
            start: traj.time(s_idx),
            end: traj.time(t_idx),
        });
    }
    Ok(())
}

/// `ξ_{n+1} = Eξ_n + Φ(-∇B(U_n)ξ_n + Gξ_n)`.
pub fn tangent_step(stepper: &Stepper, base: &SpectralState, xi: &SpectralState) -> Result<SpectralState> {
    let spec = stepper.spectral();
    let mut l = spec.nonlinear_linearized(base, xi)?;
    l.scale(-1.0);
    l.axpy(1.0, &spec.apply_g(xi, stepper.params()));
    let mut out = stepper.propagate(xi);
    out.axpy(1.0, &stepper.weight(&l));
    Ok(out)
}

/// Adjoint of [`tangent_step`]: `ρ_n = Eρ' + L_n^*(Φρ')`,
/// `L^*ρ = -(∇B(U))^*ρ + G^*ρ`.
pub fn adjoint_step(stepper: &Stepper, base: &SpectralState, rho: &SpectralState) -> Result<SpectralState> {
    let spec = stepper.spectral();
    let phi_rho = stepper.weight(rho);
    let mut l = spec.nonlinear_linearized_adjoint(base, &phi_rho)?;
    l.scale(-1.0);
    l.axpy(1.0, &spec.apply_g_adjoint(&phi_rho, stepper.params()));
    let mut out = stepper.propagate(rho);
    out.axpy(1.0, &l);
    Ok(out)
}

/// `J_{s,t}ξ` on step indices, calling `observe(i, ξ_i)` at every step.
pub fn jacobian_forward_with<F>(
    stepper: &Stepper,
    traj: &Trajectory,
    xi0: &SpectralState,
    s_idx: usize,
    t_idx: usize,
    mut observe: F,
) -> Result<SpectralState>
where
    F: FnMut(usize, &SpectralState),
{
    require_full(traj)?;
    check_window(traj, s_idx, t_idx)?;
    let mut xi = xi0.clone();
    observe(s_idx, &xi);
    for i in s_idx..t_idx {
        xi = tangent_step(stepper, traj.state(i)?, &xi)?;
        observe(i + 1, &xi);
    }
    Ok(xi)
}

/// `J_{s,t}ξ` between step indices.
pub fn jacobian_forward_idx(
    stepper: &Stepper,
    traj: &Trajectory,
    xi0: &SpectralState,
    s_idx: usize,
    t_idx: usize,
) -> Result<SpectralState> {
    jacobian_forward_with(stepper, traj, xi0, s_idx, t_idx, |_, _| {})
}

/// `J_{s,t}ξ` with `s, t` snapped to the step grid.
pub fn jacobian_forward(
    stepper: &Stepper,
    traj: &Trajectory,
    xi0: &SpectralState,
    s: f64,
    t: f64,
) -> Result<SpectralState> {
    let (si, ti) = (traj.index_of(s)?, traj.index_of(t)?);
    jacobian_forward_idx(stepper, traj, xi0, si, ti)
}

/// `K_{t,T}ρ_T` between step indices, calling `observe(i, ρ_i)` from
/// `i = T` down to `i = t`.
pub fn adjoint_backward_with<F>(
    stepper: &Stepper,
    traj: &Trajectory,
    rho_t: &SpectralState,
    t_idx: usize,
    big_t_idx: usize,
    mut observe: F,
) -> Result<SpectralState>
where
    F: FnMut(usize, &SpectralState),
{
    require_full(traj)?;
    check_window(traj, t_idx, big_t_idx)?;
    let mut rho = rho_t.clone();
    observe(big_t_idx, &rho);
    for i in (t_idx..big_t_idx).rev() {
        rho = adjoint_step(stepper, traj.state(i)?, &rho)?;
        observe(i, &rho);
    }
    Ok(rho)
}

pub fn adjoint_backward_idx(
    stepper: &Stepper,
    traj: &Trajectory,
    rho_t: &SpectralState,
    t_idx: usize,
    big_t_idx: usize,
) -> Result<SpectralState> {
    adjoint_backward_with(stepper, traj, rho_t, t_idx, big_t_idx, |_, _| {})
}

/// `K_{t,T}ξ_T` with `t, T` snapped to the step grid.
pub fn adjoint_backward(
    stepper: &Stepper,
    traj: &Trajectory,
    xi_t: &SpectralState,
    t: f64,
    big_t: f64,
) -> Result<SpectralState> {
    let (ti, bi) = (traj.index_of(t)?, traj.index_of(big_t)?);
    adjoint_backward_idx(stepper, traj, xi_t, ti, bi)
}

/// `J^{(2)}_{s,t}(φ, ψ)`: second derivative of the discrete flow, driven by
/// `-B(J φ, J ψ) - B(J ψ, J φ)` with zero initial value.
pub fn second_variation(
    stepper: &Stepper,
    traj: &Trajectory,
    phi: &SpectralState,
    psi: &SpectralState,
    s: f64,
    t: f64,
) -> Result<SpectralState> {
    require_full(traj)?;
    let (si, ti) = (traj.index_of(s)?, traj.index_of(t)?);
    check_window(traj, si, ti)?;
    let spec = stepper.spectral();
    let mut jp = phi.clone();
    let mut jq = psi.clone();
    let mut chi = spec.zero_state();
    for i in si..ti {
        let base = traj.state(i)?;
        let mut src = spec.nonlinear_linearized(&jp, &jq)?;
        src.scale(-1.0);
        let mut next = tangent_step(stepper, base, &chi)?;
        next.axpy(1.0, &stepper.weight(&src));
        chi = next;
        jp = tangent_step(stepper, base, &jp)?;
        jq = tangent_step(stepper, base, &jq)?;
    }
    Ok(chi)
}
