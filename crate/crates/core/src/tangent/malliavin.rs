use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{adjoint_backward_with, check_window, jacobian_forward_idx, require_full};
use crate::error::{invalid, Result};
use crate::integrator::{RecordOptions, Stepper, Trajectory};
use crate::noise::{sample_subordinator, stopping_times, subordinated_increments, NoiseModel, SubordinatorSpec};
use crate::rng::{purpose, stream, stream_id};
use crate::spectral::{sigma_state, RealBasis, SpectralState};

/// One jump of the window quadrature.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JumpContribution {
    pub index: usize,
    pub dell: f64,
}

/// `M = Σ_{k,m} (α_k^m)² Σ_{r_i ∈ (s,t]} Δℓ_i c c^T`, `c = coords(J_{r_i,t} σ_k^m)`.
#[derive(Clone, Debug)]
pub struct MalliavinMatrix {
    pub s_idx: usize,
    pub t_idx: usize,
    pub matrix: DMatrix<f64>,
    pub jumps: Vec<JumpContribution>,
}

impl MalliavinMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// No jumps fell in the window, so `M = 0` by construction.
    pub fn is_degenerate(&self) -> bool {
        self.jumps.is_empty()
    }

    pub fn frobenius(&self) -> f64 {
        self.matrix.norm()
    }

    pub fn eigenvalues(&self) -> DVector<f64> {
        SymmetricEigen::new(self.matrix.clone()).eigenvalues
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().min()
    }

    pub fn symmetry_defect(&self) -> f64 {
        (&self.matrix - self.matrix.transpose()).amax()
    }

    /// `⟨Mφ, φ⟩` for coordinates `φ`.
    pub fn quadratic_form(&self, phi: &[f64]) -> f64 {
        let v = DVector::from_column_slice(phi);
        (v.transpose() * &self.matrix * &v)[(0, 0)]
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }
}

fn window_jumps(traj: &Trajectory, s_idx: usize, t_idx: usize) -> Vec<JumpContribution> {
    traj.jumps_between(s_idx, t_idx)
        .map(|j| JumpContribution {
            index: j.index,
            dell: j.dell,
        })
        .collect()
}

/// Forward assembly: one tangent solve per `(jump, k, m)`.
pub fn malliavin_forward(
    stepper: &Stepper,
    traj: &Trajectory,
    model: &NoiseModel,
    s_idx: usize,
    t_idx: usize,
    basis: &RealBasis,
) -> Result<MalliavinMatrix> {
    require_full(traj)?;
    check_window(traj, s_idx, t_idx)?;
    let n = stepper.spectral().resolution();
    let jumps = window_jumps(traj, s_idx, t_idx);
    let dim = basis.dim();
    let parts: Vec<Result<DMatrix<f64>>> = jumps
        .par_iter()
        .map(|j| {
            let mut m = DMatrix::zeros(dim, dim);
            for (k, par, a) in model.directions() {
                let v = jacobian_forward_idx(stepper, traj, &sigma_state(n, k, par), j.index, t_idx)?;
                let c = DVector::from_vec(basis.coords(&v));
                m.ger(a * a * j.dell, &c, &c, 1.0);
            }
            Ok(m)
        })
        .collect();
    let mut matrix = DMatrix::zeros(dim, dim);
    for p in parts {
        matrix += p?;
    }
    Ok(MalliavinMatrix {
        s_idx,
        t_idx,
        matrix,
        jumps,
    })
}

/// Adjoint-form assembly: one backward solve per basis vector `φ_i`,
/// `M_{il} = Σ (α)² Σ Δℓ ⟨K_{r,t}φ_i, σ⟩⟨K_{r,t}φ_l, σ⟩`.
pub fn malliavin_backward(
    stepper: &Stepper,
    traj: &Trajectory,
    model: &NoiseModel,
    s_idx: usize,
    t_idx: usize,
    basis: &RealBasis,
) -> Result<MalliavinMatrix> {
    require_full(traj)?;
    check_window(traj, s_idx, t_idx)?;
    let n = stepper.spectral().resolution();
    let jumps = window_jumps(traj, s_idx, t_idx);
    let dirs: Vec<(SpectralState, f64)> = model.directions().map(|(k, m, a)| (sigma_state(n, k, m), a)).collect();
    let lo = jumps.iter().map(|j| j.index).min().unwrap_or(t_idx);
    // pairings[i][jump * d + dir] = α ⟨K_{r,t} φ_i, σ⟩
    let pairings: Vec<Result<Vec<f64>>> = (0..basis.dim())
        .into_par_iter()
        .map(|i| {
            let mut at_index: Vec<Option<Vec<f64>>> = vec![None; t_idx + 1];
            adjoint_backward_with(stepper, traj, &basis.vector(i), lo, t_idx, |idx, rho| {
                if jumps.iter().any(|j| j.index == idx) {
                    at_index[idx] = Some(dirs.iter().map(|(s, a)| a * rho.inner(s)).collect());
                }
            })?;
            Ok(jumps
                .iter()
                .flat_map(|j| at_index[j.index].clone().expect("visited"))
                .collect())
        })
        .collect();
    let d = dirs.len();
    let rows: Vec<Vec<f64>> = pairings.into_iter().collect::<Result<_>>()?;
    let weights: Vec<f64> = jumps.iter().flat_map(|j| std::iter::repeat_n(j.dell, d)).collect();
    let dim = basis.dim();
    let mut matrix = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        for l in i..dim {
            let v: f64 = rows[i]
                .iter()
                .zip(&rows[l])
                .zip(&weights)
                .map(|((a, b), w)| w * a * b)
                .sum();
            matrix[(i, l)] = v;
            matrix[(l, i)] = v;
        }
    }
    Ok(MalliavinMatrix {
        s_idx,
        t_idx,
        matrix,
        jumps,
    })
}

/// `1e-4 · trace(M) / dim(M)`, floored so the Tikhonov solve stays regular.
pub fn default_beta(m: &MalliavinMatrix) -> f64 {
    let b = 1e-4 * m.trace() / m.dim().max(1) as f64;
    if b > 0.0 {
        b
    } else {
        1e-12
    }
}

/// `inf { ⟨Mφ,φ⟩ : ‖φ‖ = 1, ‖P φ‖ ≥ α }` where `P` is the coordinate
/// projection selected by `in_p`.
///
/// One quadratic constraint on the sphere has no duality gap, so the value
/// is `max_{μ ≥ 0} λ_min(M - μ(P - α² I))`, a concave maximisation in `μ`
/// solved by golden-section search.
pub fn min_eigen_constrained(m: &DMatrix<f64>, in_p: &[bool], alpha: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(invalid("alpha", "alpha must lie in [0, 1)"));
    }
    if in_p.len() != m.nrows() || !in_p.iter().any(|&b| b) {
        return Err(invalid("in_p", "projection mask must match M and be nonempty"));
    }
    let a2 = alpha * alpha;
    let f = |mu: f64| -> f64 {
        let mut shifted = m.clone();
        for (i, &p) in in_p.iter().enumerate() {
            shifted[(i, i)] -= mu * (if p { 1.0 } else { 0.0 } - a2);
        }
        SymmetricEigen::new(shifted).eigenvalues.min()
    };
    let f0 = f(0.0);
    if a2 == 0.0 {
        return Ok(f0);
    }
    let spread = SymmetricEigen::new(m.clone()).eigenvalues.max() - f0;
    let mut hi = (spread / (1.0 - a2)).max(1e-300) * 1.01;
    if f(hi) > f0 {
        hi *= 4.0;
    }
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (0.0, hi);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..120 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
        if (b - a) <= 1e-14 * hi {
            break;
        }
    }
    Ok(f0.max(fc).max(fd))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MinEigenConfig {
    pub n_paths: usize,
    pub big_n: u32,
    pub alpha: f64,
    pub kappa: f64,
    pub eps: Vec<f64>,
}

impl Default for MinEigenConfig {
    fn default() -> Self {
        Self {
            n_paths: 100,
            big_n: 2,
            alpha: 0.5,
            kappa: 1.0 / 1280.0,
            eps: vec![1e-2, 1e-4, 1e-6],
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MinEigenSample {
    pub path: usize,
    pub eta: f64,
    pub jumps: usize,
    pub degenerate: bool,
    /// Infimum over `{‖φ‖ = 1, ‖P_N φ‖ ≥ α}`.
    pub lambda_constrained: f64,
    /// Infimum over the whole unit sphere.
    pub lambda_full: f64,
    /// Smallest eigenvalue of `M` on `H_N`.
    pub lambda_pn: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MinEigenReport {
    pub samples: Vec<MinEigenSample>,
    pub eps: Vec<f64>,
    /// Fraction of nondegenerate samples with constrained minimum below each eps.
    pub fraction_below: Vec<f64>,
    pub degenerate: usize,
}

impl MinEigenReport {
    pub fn monotone_to_zero(&self) -> bool {
        let mono = self.fraction_below.windows(2).all(|w| w[1] <= w[0]);
        let first = self.fraction_below.first().copied().unwrap_or(0.0);
        let last = self.fraction_below.last().copied().unwrap_or(0.0);
        mono && (last < first || last == 0.0)
    }
}

pub(crate) const MIN_EIGEN_EXPERIMENT: u64 = 31;

/// `M ⊕ 0`: the quadratic form of `M` on `H_N` seen from `H_N ⊕ H_N^⊥`. One
/// extra coordinate stands for the complement, on which the form vanishes.
pub fn extend_by_zero_block(m: &DMatrix<f64>) -> DMatrix<f64> {
    let d = m.nrows();
    let mut ext = DMatrix::zeros(d + 1, d + 1);
    ext.view_mut((0, 0), (d, d)).copy_from(m);
    ext
}

/// `M_{0,η}` on `H_N` along independent paths started at `u0`, minimised
/// over `{‖φ‖ = 1, ‖P_N φ‖ ≥ α}`.
pub fn min_eigen_probe(
    stepper: &Stepper,
    model: &NoiseModel,
    sub: &SubordinatorSpec,
    u0: &SpectralState,
    cfg: &MinEigenConfig,
    seed: u64,
) -> Result<MinEigenReport> {
    if cfg.n_paths == 0 {
        return Err(invalid("n_paths", "need at least one path"));
    }
    let spec = stepper.spectral();
    let basis = RealBasis::low_modes(spec, cfg.big_n);
    if basis.dim() == 0 {
        return Err(invalid("big_n", "H_N is empty at this resolution"));
    }
    let dt = stepper.dt();
    let nu = stepper.params().nu();
    let mut sub = *sub;
    sub.grid_step = dt;
    let samples: Vec<Result<MinEigenSample>> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|p| {
            let mut r_sub = stream(seed, stream_id(purpose::SUBORDINATOR, MIN_EIGEN_EXPERIMENT, p as u64));
            let mut r_bm = stream(seed, stream_id(purpose::BROWNIAN, MIN_EIGEN_EXPERIMENT, p as u64));
            let mut horizon = 4.0 / nu;
            let (path, eta) = loop {
                let h = (horizon / dt).ceil() * dt;
                let path = sample_subordinator(&sub, h, &mut r_sub)?;
                let st = stopping_times(&path, stepper.params(), model, cfg.kappa, 1)?;
                if let Some(&e) = st.eta.first() {
                    break (path, e);
                }
                horizon *= 2.0;
            };
            let t_idx = ((eta / dt) - 1e-9).ceil() as usize;
            let incs = subordinated_increments(&path, model.dim(), &mut r_bm)?;
            let traj = stepper.simulate(u0, t_idx as f64 * dt, model, &incs, RecordOptions::full())?;
            let m = malliavin_backward(stepper, &traj, model, 0, t_idx, &basis)?;
            let degenerate = m.is_degenerate() || m.trace() == 0.0;
            let (lc, lf, ln) = if degenerate {
                (0.0, 0.0, 0.0)
            } else {
                let ext = extend_by_zero_block(&m.matrix);
                let mut in_p = vec![true; m.dim()];
                in_p.push(false);
                let lf = SymmetricEigen::new(ext.clone()).eigenvalues.min();
                (min_eigen_constrained(&ext, &in_p, cfg.alpha)?, lf, m.min_eigenvalue())
            };
            Ok(MinEigenSample {
                path: p,
                eta,
                jumps: m.jumps.len(),
                degenerate,
                lambda_constrained: lc,
                lambda_full: lf,
                lambda_pn: ln,
            })
        })
        .collect();
    let samples: Vec<MinEigenSample> = samples.into_iter().collect::<Result<_>>()?;
    let good: Vec<&MinEigenSample> = samples.iter().filter(|s| !s.degenerate).collect();
    let fraction_below = cfg
        .eps
        .iter()
        .map(|&e| {
            if good.is_empty() {
                0.0
            } else {
                good.iter().filter(|s| s.lambda_constrained < e).count() as f64 / good.len() as f64
            }
        })
        .collect();
    Ok(MinEigenReport {
        degenerate: samples.len() - good.len(),
        eps: cfg.eps.clone(),
        fraction_below,
        samples,
    })
}

/// Forward against backward assembly on one window.
#[derive(Clone, Debug, Serialize)]
pub struct WindowCheck {
    pub window: usize,
    pub s_idx: usize,
    pub t_idx: usize,
    pub jumps: usize,
    /// `‖M_fwd - M_bwd‖_F / max(‖M_fwd‖_F, ‖M_bwd‖_F)`.
    pub rel_diff: f64,
    /// `λ_min(M) / ‖M‖_F`, which is `≥ -1e-10` for a PSD assembly.
    pub min_eig_rel: f64,
}

pub(crate) const CONSISTENCY_EXPERIMENT: u64 = 32;

/// Assembles `M` on `H_N` both ways over `n_windows` windows of one
/// trajectory of length `horizon` started at `u0`.
pub fn malliavin_consistency(
    stepper: &Stepper,
    model: &NoiseModel,
    sub: &SubordinatorSpec,
    u0: &SpectralState,
    horizon: f64,
    n_windows: usize,
    big_n: u32,
    seed: u64,
) -> Result<Vec<WindowCheck>> {
    if n_windows == 0 {
        return Err(invalid("n_windows", "need at least one window"));
    }
    let dt = stepper.dt();
    let mut sub = *sub;
    sub.grid_step = sub.grid_step.max(dt);
    let h = (horizon / dt).ceil().max(n_windows as f64) * dt;
    let mut r_sub = stream(seed, stream_id(purpose::SUBORDINATOR, CONSISTENCY_EXPERIMENT, 0));
    let mut r_bm = stream(seed, stream_id(purpose::BROWNIAN, CONSISTENCY_EXPERIMENT, 0));
    let path = sample_subordinator(&sub, h, &mut r_sub)?;
    let incs = subordinated_increments(&path, model.dim(), &mut r_bm)?;
    let traj = stepper.simulate(u0, h, model, &incs, RecordOptions::full())?;
    let basis = RealBasis::low_modes(stepper.spectral(), big_n);
    let n = traj.n_steps;
    // windows [s, t] with s staggered and t at the end or midway
    (0..n_windows)
        .map(|w| {
            let s_idx = w * n / (2 * n_windows);
            let t_idx = if w % 2 == 0 { n } else { (s_idx + n) / 2 + 1 };
            let f = malliavin_forward(stepper, &traj, model, s_idx, t_idx, &basis)?;
            let b = malliavin_backward(stepper, &traj, model, s_idx, t_idx, &basis)?;
            let scale = f.frobenius().max(b.frobenius());
            let rel_diff = if scale > 0.0 {
                (&f.matrix - &b.matrix).norm() / scale
            } else {
                0.0
            };
            let min_eig_rel = if scale > 0.0 { f.min_eigenvalue() / scale } else { 0.0 };
            Ok(WindowCheck {
                window: w,
                s_idx,
                t_idx,
                jumps: f.jumps.len(),
                rel_diff,
                min_eig_rel,
            })
        })
        .collect()
}
