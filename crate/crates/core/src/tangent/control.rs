use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{adjoint_backward_with, jacobian_forward_idx, malliavin_backward, require_full, tangent_step};
use crate::error::{invalid, Error, Result};
use crate::integrator::{Stepper, Trajectory};
use crate::noise::NoiseModel;
use crate::spectral::{sigma_state, RealBasis, SpectralState};

#[derive(Clone, Debug, Serialize)]
pub struct WindowReport {
    pub window: usize,
    pub start: f64,
    pub end: f64,
    pub controlled: bool,
    pub beta: f64,
    pub jumps: usize,
    pub rho_start: f64,
    pub rho_end: f64,
    /// `∫|v|² dℓ = ⟨Mφ, φ⟩`.
    pub control_energy: f64,
    /// Relative gap between direct integration and the closed form.
    pub closed_form_error: f64,
}

#[derive(Clone, Debug)]
pub struct ControlResidual {
    pub windows: Vec<WindowReport>,
    /// `ρ_{η_n}` for `n = 0..=n_windows`.
    pub rho_at_eta: Vec<SpectralState>,
}

impl ControlResidual {
    pub fn max_closed_form_error(&self) -> f64 {
        self.windows.iter().map(|w| w.closed_form_error).fold(0.0, f64::max)
    }

    pub fn rho_norms(&self) -> Vec<f64> {
        self.rho_at_eta.iter().map(|r| r.norm_l2()).collect()
    }
}

/// Alternating Tikhonov control over windows `[η_n, η_{n+1}]`: on even
/// windows `φ = (M + βI)^{-1} J ρ_{η_n}` and the control
/// `v = A^* φ` acts at the jumps; odd windows run uncontrolled. Each
/// controlled window is integrated directly and compared with
/// `ρ_{η_{n+1}} = β (M + βI)^{-1} J ρ_{η_n}`.
///
/// Window ends are `η_n` snapped up to the step grid; `beta = None` picks
/// [`super::default_beta`] per window.
pub fn control_and_residual(
    stepper: &Stepper,
    traj: &Trajectory,
    model: &NoiseModel,
    eta: &[f64],
    xi0: &SpectralState,
    beta: Option<f64>,
    n_windows: usize,
) -> Result<ControlResidual> {
    require_full(traj)?;
    if let Some(b) = beta {
        if !(b > 0.0) {
            return Err(invalid("beta", "beta must be positive"));
        }
    }
    if eta.len() < n_windows {
        return Err(invalid(
            "eta",
            format!("need {n_windows} stopping times, got {}", eta.len()),
        ));
    }
    let dt = traj.dt;
    let mut bounds = vec![0usize];
    for &e in &eta[..n_windows] {
        let idx = ((e / dt) - 1e-9).ceil() as usize;
        if idx > traj.n_steps {
            return Err(Error::Window { start: 0.0, end: e });
        }
        bounds.push(idx.max(*bounds.last().expect("nonempty")));
    }

    let spec = stepper.spectral();
    let n = spec.resolution();
    let basis = RealBasis::full(spec);
    let dirs: Vec<(SpectralState, f64)> = model.directions().map(|(k, m, a)| (sigma_state(n, k, m), a)).collect();

    let mut rho = xi0.clone();
    let mut rho_at_eta = vec![rho.clone()];
    let mut windows = Vec::with_capacity(n_windows);
    for w in 0..n_windows {
        let (a, b) = (bounds[w], bounds[w + 1]);
        let rho_start = rho.norm_l2();
        let free = jacobian_forward_idx(stepper, traj, &rho, a, b)?;
        let controlled = w % 2 == 0;
        let mut report = WindowReport {
            window: w,
            start: traj.time(a),
            end: traj.time(b),
            controlled,
            beta: 0.0,
            jumps: traj.jumps_between(a, b).count(),
            rho_start,
            rho_end: 0.0,
            control_energy: 0.0,
            closed_form_error: 0.0,
        };
        if controlled {
            let m = malliavin_backward(stepper, traj, model, a, b, &basis)?;
            let beta_w = beta.unwrap_or_else(|| super::default_beta(&m));
            let dim = m.dim();
            let y = DVector::from_vec(basis.coords(&free));
            let reg = &m.matrix + DMatrix::identity(dim, dim) * beta_w;
            let phi = reg
                .cholesky()
                .ok_or_else(|| invalid("beta", "M + βI not positive definite"))?
                .solve(&y);
            let closed = basis.state((&phi * beta_w).as_slice())?;

            // pairings ⟨K_{r,b} φ, σ⟩ at every jump in (a, b]
            let phi_state = basis.state(phi.as_slice())?;
            let mut pair: Vec<Option<Vec<f64>>> = vec![None; b + 1];
            let jump_idx: Vec<usize> = traj.jumps_between(a, b).map(|j| j.index).collect();
            adjoint_backward_with(stepper, traj, &phi_state, a, b, |i, r| {
                if jump_idx.contains(&i) {
                    pair[i] = Some(dirs.iter().map(|(s, _)| r.inner(s)).collect());
                }
            })?;

            let mut direct = rho.clone();
            for i in a..b {
                direct = tangent_step(stepper, traj.state(i)?, &direct)?;
                for j in traj.jumps_between(i, i + 1) {
                    let p = pair[i + 1].as_ref().expect("visited");
                    for ((s, alpha), v) in dirs.iter().zip(p) {
                        direct.axpy(-j.dell * alpha * alpha * v, s);
                    }
                }
            }
            let gap = direct.plus(-1.0, &closed).norm_l2();
            report.beta = beta_w;
            report.control_energy = m.quadratic_form(phi.as_slice());
            report.closed_form_error = gap / direct.norm_l2().max(closed.norm_l2()).max(1e-300);
            rho = direct;
        } else {
            rho = free;
        }
        report.rho_end = rho.norm_l2();
        rho_at_eta.push(rho.clone());
        windows.push(report);
    }
    Ok(ControlResidual { windows, rho_at_eta })
}
