use serde::Serialize;

use super::jacobian_forward_with;
use crate::error::{invalid, Result};
use crate::integrator::{Stepper, Trajectory};
use crate::spectral::SpectralState;

#[derive(Clone, Debug, Serialize)]
pub struct QnDecayReport {
    pub n_values: Vec<u32>,
    pub times: Vec<f64>,
    /// `‖Q_N J_{0,t} ξ‖²` per `N` (rows) and time (columns).
    pub qn_sq: Vec<Vec<f64>>,
    /// Fitted on the first `N`.
    pub c_hat: f64,
    /// `(N, t, measured, bound)` for every test point above its bound.
    pub violations: Vec<(u32, f64, f64, f64)>,
    /// Early-time decay rate of `ln ‖Q_N ξ_t‖²` per `N`.
    pub early_slopes: Vec<f64>,
}

impl QnDecayReport {
    pub fn passes(&self) -> bool {
        self.violations.is_empty()
    }
}

fn slope(ts: &[f64], ys: &[f64]) -> f64 {
    let n = ts.len() as f64;
    let mt = ts.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let num: f64 = ts.iter().zip(ys).map(|(t, y)| (t - mt) * (y - my)).sum();
    let den: f64 = ts.iter().map(|t| (t - mt) * (t - mt)).sum();
    num / den
}

/// `‖Q_N ξ‖²` below this, for unit `ξ_0`, is transform rounding rather than signal.
pub const QN_ROUNDING_FLOOR: f64 = 1e-28;

/// Measures `‖Q_N J_{0,t}ξ‖²` for each `N`, fits `Ĉ` so that
/// `e^{-νN²t} + Ĉ/√N` bounds the first `N`, and tests the rest.
pub fn qn_decay_check(
    stepper: &Stepper,
    traj: &Trajectory,
    xi0: &SpectralState,
    n_values: &[u32],
    t_idx: usize,
) -> Result<QnDecayReport> {
    if n_values.len() < 2 {
        return Err(invalid("n_values", "need a fit value and at least one test value"));
    }
    let spec = stepper.spectral();
    let p = *stepper.params();
    let norm0 = spec.weighted_norm(xi0, &p, 0.0)?;
    if norm0 == 0.0 {
        return Err(invalid("xi0", "seed direction must be nonzero"));
    }
    let xi = xi0.scaled(1.0 / norm0);
    let mut times = Vec::with_capacity(t_idx + 1);
    let mut qn_sq = vec![Vec::with_capacity(t_idx + 1); n_values.len()];
    jacobian_forward_with(stepper, traj, &xi, 0, t_idx, |i, x| {
        times.push(traj.time(i));
        for (row, &n) in qn_sq.iter_mut().zip(n_values) {
            row.push(
                spec.weighted_norm(&spec.project_q(x, n), &p, 0.0)
                    .expect("s>=0")
                    .powi(2),
            );
        }
    })?;
    let nu = p.nu();
    let lead = |n: u32, t: f64| (-nu * (n * n) as f64 * t).exp();
    let n_fit = n_values[0];
    let c_hat = times
        .iter()
        .zip(&qn_sq[0])
        .map(|(&t, &q)| (q - lead(n_fit, t)).max(0.0) * (n_fit as f64).sqrt())
        .fold(0.0, f64::max);
    let mut violations = Vec::new();
    for (row, &n) in qn_sq.iter().zip(n_values).skip(1) {
        for (&t, &q) in times.iter().zip(row) {
            let bound = lead(n, t) + c_hat / (n as f64).sqrt();
            if q > bound * (1.0 + 1e-12) + QN_ROUNDING_FLOOR {
                violations.push((n, t, q, bound));
            }
        }
    }
    let early_slopes = qn_sq
        .iter()
        .zip(n_values)
        .map(|(row, &n)| {
            let horizon = 0.5 / (nu * (n * n) as f64);
            let k = times
                .iter()
                .take_while(|&&t| t <= horizon)
                .count()
                .clamp(2, times.len());
            let ys: Vec<f64> = row[..k].iter().map(|q| q.max(1e-300).ln()).collect();
            -slope(&times[..k], &ys)
        })
        .collect();
    Ok(QnDecayReport {
        n_values: n_values.to_vec(),
        times,
        qn_sq,
        c_hat,
        violations,
        early_slopes,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct PnGrowthReport {
    pub n_values: Vec<u32>,
    pub times: Vec<f64>,
    /// `‖P_N J_{0,t} Q_N ξ‖²`, seeds normalised per `N`.
    pub pn_sq: Vec<Vec<f64>>,
    pub c_hat: f64,
    pub violations: Vec<(u32, f64, f64, f64)>,
}

impl PnGrowthReport {
    pub fn passes(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Seeds `ξ_0 = Q_N ξ` and checks `‖P_N ξ_t‖² ≤ Ĉ'(1 + t)/N^{1/4}` with `Ĉ'`
/// fitted on the first `N`.
pub fn pn_growth_check(
    stepper: &Stepper,
    traj: &Trajectory,
    xi: &SpectralState,
    n_values: &[u32],
    t_idx: usize,
) -> Result<PnGrowthReport> {
    if n_values.len() < 2 {
        return Err(invalid("n_values", "need a fit value and at least one test value"));
    }
    let spec = stepper.spectral();
    let p = *stepper.params();
    let mut times = Vec::new();
    let mut pn_sq = Vec::with_capacity(n_values.len());
    for &n in n_values {
        let seed = spec.project_q(xi, n);
        let norm = spec.weighted_norm(&seed, &p, 0.0)?;
        if norm == 0.0 {
            return Err(invalid("xi", "seed has no mass above N"));
        }
        let seed = seed.scaled(1.0 / norm);
        let mut row = Vec::with_capacity(t_idx + 1);
        times.clear();
        jacobian_forward_with(stepper, traj, &seed, 0, t_idx, |i, x| {
            times.push(traj.time(i));
            row.push(
                spec.weighted_norm(&spec.project_p(x, n), &p, 0.0)
                    .expect("s>=0")
                    .powi(2),
            );
        })?;
        pn_sq.push(row);
    }
    let quarter = |n: u32| (n as f64).powf(0.25);
    let c_hat = times
        .iter()
        .zip(&pn_sq[0])
        .map(|(&t, &v)| v * quarter(n_values[0]) / (1.0 + t))
        .fold(0.0, f64::max);
    let mut violations = Vec::new();
    for (row, &n) in pn_sq.iter().zip(n_values).skip(1) {
        for (&t, &v) in times.iter().zip(row) {
            let bound = c_hat * (1.0 + t) / quarter(n);
            if v > bound * (1.0 + 1e-12) {
                violations.push((n, t, v, bound));
            }
        }
    }
    Ok(PnGrowthReport {
        n_values: n_values.to_vec(),
        times,
        pn_sq,
        c_hat,
        violations,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct GrowthFit {
    pub c_hat: f64,
    /// Largest `‖J ξ‖² / (‖ξ‖² e^{Ĉ I})` over the held-out samples.
    pub max_test_ratio: f64,
}

/// Fits `Ĉ` in `‖J_{0,T}ξ‖² ≤ ‖ξ‖² e^{Ĉ ∫(‖U‖₁^{4/3} + 1)}` on the first
/// half of `(ratio, integral)` samples and evaluates the held-out half.
pub fn jacobian_growth_fit(samples: &[(f64, f64)]) -> Result<GrowthFit> {
    if samples.len() < 2 {
        return Err(invalid("samples", "need at least two samples"));
    }
    let half = samples.len() / 2;
    let c_hat = samples[..half]
        .iter()
        .map(|&(r, i)| r.ln().max(0.0) / i)
        .fold(0.0, f64::max);
    let max_test_ratio = samples[half..]
        .iter()
        .map(|&(r, i)| r / (c_hat * i).exp())
        .fold(0.0, f64::max);
    Ok(GrowthFit { c_hat, max_test_ratio })
}
