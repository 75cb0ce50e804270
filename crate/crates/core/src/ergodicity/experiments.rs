use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{experiment_id as id, EnsembleReport, Lab, Observable, Table, Verdict};
use crate::error::{invalid, Error, Result};
use crate::noise::{
    gamma_exp_moment, gamma_kappa_limit, increments_digest, sample_subordinator, stopping_times, SubordinatorFamily,
};
use crate::rng::{purpose, stream, stream_id};
use crate::spectral::{psi_state, sigma_state, ModeIndex, SpectralState};
use crate::stats::{batch_means, clopper_pearson_lower, ols_slope, summarize};

fn check_grid(t_grid: &[f64]) -> Result<()> {
    if t_grid.is_empty() || t_grid.iter().any(|t| !(*t >= 0.0)) || t_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("t_grid", "need a nonempty, sorted grid of times >= 0"));
    }
    Ok(())
}

/// `E‖U_t‖²` on `t_grid` from each initial condition, with a shared plateau
/// `Ĉ₁` fitted on the second half of the grid. Trajectory `i` uses the same
/// noise for every initial condition.
pub fn moment_experiment(
    lab: &Lab<'_>,
    u0s: &[SpectralState],
    t_grid: &[f64],
    n_traj: usize,
) -> Result<EnsembleReport> {
    if n_traj < 100 {
        return Err(Error::Insufficient {
            what: "trajectories",
            got: n_traj,
            need: 100,
        });
    }
    if u0s.is_empty() {
        return Err(invalid("u0s", "need at least one initial condition"));
    }
    check_grid(t_grid)?;
    let p = *lab.params();
    let nu = p.nu();
    let t_max = *t_grid.last().expect("nonempty");
    let late: Vec<usize> = (0..t_grid.len()).filter(|&g| t_grid[g] >= 0.5 * t_max).collect();
    let norm0: Vec<f64> = u0s.iter().map(|u| lab.stepper.norm(u).powi(2)).collect();

    // energies[traj][ic][grid]
    let energies: Vec<Vec<Vec<f64>>> = (0..n_traj)
        .into_par_iter()
        .map(|i| {
            let incs = lab.noise(id::MOMENT, i as u64, t_max.max(lab.stepper.dt()))?;
            u0s.iter()
                .map(|u0| {
                    let mut e = vec![0.0; t_grid.len()];
                    lab.sample_on_grid(u0, &incs, t_grid, |g, u| e[g] = lab.stepper.norm(u).powi(2))?;
                    Ok(e)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut report = EnsembleReport::new("moments", &lab.config_digest, lab.seed);
    report.parameters.insert("n_traj".into(), n_traj as f64);
    report.parameters.insert("nu".into(), nu);
    report.parameters.insert("t_max".into(), t_max);

    let mut plateaus = Vec::new();
    let mut pooled = Vec::new();
    for (a, &n0) in norm0.iter().enumerate() {
        let per: Vec<f64> = energies
            .iter()
            .map(|e| {
                late.iter()
                    .map(|&g| e[a][g] - (-nu * t_grid[g]).exp() * n0)
                    .sum::<f64>()
                    / late.len() as f64
            })
            .collect();
        pooled.extend_from_slice(&per);
        let s = summarize(&per);
        report.summaries.insert(format!("plateau_ic{a}"), s);
        report.per_trajectory.insert(format!("plateau_ic{a}"), per);
        plateaus.push(s);
    }
    let c1 = summarize(&pooled).mean.max(0.0);
    report.scalars.insert("c1_hat".into(), c1);

    let mut table = Table::new(&["t", "ic", "mean", "std_error", "bound"]);
    let mut worst: f64 = f64::NEG_INFINITY;
    for (a, &n0) in norm0.iter().enumerate() {
        for (g, &t) in t_grid.iter().enumerate() {
            let xs: Vec<f64> = energies.iter().map(|e| e[a][g]).collect();
            let s = summarize(&xs);
            let bound = (-nu * t).exp() * n0 + c1;
            // excess over the bound in units of standard errors
            let slack = 1e-12 * (1.0 + bound);
            let excess = if s.mean <= bound + slack {
                f64::NEG_INFINITY
            } else if s.std_error > 0.0 {
                (s.mean - bound) / s.std_error
            } else {
                f64::INFINITY
            };
            worst = worst.max(excess);
            table.push(vec![t, a as f64, s.mean, s.std_error, bound]);
        }
    }
    report.raw = table;
    report.verdicts.push(Verdict::at_most("bound_excess_in_se", worst, 3.0));
    let mut gap: f64 = 0.0;
    for a in 0..plateaus.len() {
        for b in a + 1..plateaus.len() {
            let se = (plateaus[a].std_error.powi(2) + plateaus[b].std_error.powi(2)).sqrt();
            let d = (plateaus[a].mean - plateaus[b].mean).abs();
            gap = gap.max(if se > 0.0 {
                d / se
            } else if d == 0.0 {
                0.0
            } else {
                f64::INFINITY
            });
        }
    }
    if plateaus.len() > 1 {
        report.verdicts.push(Verdict::at_most("plateau_gap_in_se", gap, 3.0));
    }
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StoppingMomentConfig {
    pub kappa: f64,
    /// Configured `κ0`; larger `κ` is run but flagged.
    pub kappa0: f64,
    pub n_paths: usize,
    /// Exponent `q` in `E[e^{q η}]`, in units of `ν`.
    pub q_over_nu: f64,
    pub max_rel_change: f64,
}

impl Default for StoppingMomentConfig {
    fn default() -> Self {
        Self {
            kappa: 1.0 / 1280.0,
            kappa0: 1.0 / 1280.0,
            n_paths: 1000,
            q_over_nu: 10.0,
            max_rel_change: 0.2,
        }
    }
}

/// Monte Carlo `E[e^{q η_1}]` from `n` and `2n` paths. The first `n` paths are
/// shared, so the change isolates the tail added by the second half.
pub fn stopping_moment_experiment(lab: &Lab<'_>, cfg: &StoppingMomentConfig) -> Result<EnsembleReport> {
    if cfg.n_paths == 0 {
        return Err(invalid("n_paths", "need at least one path"));
    }
    if !(cfg.kappa >= 0.0 && cfg.kappa.is_finite()) {
        return Err(invalid("kappa", "kappa must be nonnegative"));
    }
    let p = *lab.params();
    let nu = p.nu();
    let q = cfg.q_over_nu * nu;
    let cap = 1e4 / nu;
    let draws: Vec<(f64, bool)> = (0..2 * cfg.n_paths)
        .into_par_iter()
        .map(|i| {
            if lab.noiseless {
                return Ok((1.0 / nu, false));
            }
            let mut r = stream(lab.seed, stream_id(purpose::SUBORDINATOR, id::STOPPING, i as u64));
            let mut horizon = 4.0 / nu;
            loop {
                let path = sample_subordinator(&lab.sub, horizon, &mut r)?;
                let st = stopping_times(&path, &p, lab.model, cfg.kappa, 1)?;
                if let Some(&e) = st.eta.first() {
                    return Ok((e, false));
                }
                if horizon >= cap {
                    return Ok((horizon, true));
                }
                horizon = (2.0 * horizon).min(cap);
            }
        })
        .collect::<Result<_>>()?;

    let weights: Vec<f64> = draws.iter().map(|(e, _)| (q * e).exp()).collect();
    let half = summarize(&weights[..cfg.n_paths]);
    let full = summarize(&weights);
    let rel = (full.mean - half.mean).abs() / half.mean;

    let mut report = EnsembleReport::new("stopping_moments", &lab.config_digest, lab.seed);
    report.parameters.insert("kappa".into(), cfg.kappa);
    report.parameters.insert("kappa0".into(), cfg.kappa0);
    report.parameters.insert("n_paths".into(), cfg.n_paths as f64);
    report.parameters.insert("q".into(), q);
    report.summaries.insert("estimate_n".into(), half);
    report.summaries.insert("estimate_2n".into(), full);
    report
        .per_trajectory
        .insert("eta".into(), draws.iter().map(|d| d.0).collect());
    report.scalars.insert("relative_change".into(), rel);
    report.scalars.insert("deterministic_limit".into(), (q / nu).exp());
    let censored = draws.iter().filter(|d| d.1).count();
    report.scalars.insert("censored".into(), censored as f64);
    if lab.sub.family == SubordinatorFamily::Gamma && !lab.noiseless {
        let c = 8.0 * lab.model.b0() * cfg.kappa;
        let exact = gamma_exp_moment(nu, c, lab.sub.a, lab.sub.b, q).unwrap_or(f64::INFINITY);
        report.scalars.insert("gamma_closed_form".into(), exact);
        report.scalars.insert(
            "gamma_kappa_limit".into(),
            gamma_kappa_limit(nu, lab.model.b0(), lab.sub.a, lab.sub.b, q),
        );
    }
    let mut table = Table::new(&["path", "eta", "weight"]);
    for (i, ((e, _), w)) in draws.iter().zip(&weights).enumerate() {
        table.push(vec![i as f64, *e, *w]);
    }
    report.raw = table;
    if cfg.kappa > cfg.kappa0 {
        report.tags.push("kappa_above_kappa0".into());
        report.warnings.push(format!(
            "kappa = {} exceeds kappa0 = {}; the moment bound is not expected to hold",
            cfg.kappa, cfg.kappa0
        ));
    }
    if censored > 0 {
        report.warnings.push(format!(
            "{censored} paths did not stop before t = {cap}; their eta is censored"
        ));
    }
    report.verdicts.push(Verdict::at_most(
        "relative_change_under_doubling",
        rel,
        cfg.max_rel_change,
    ));
    Ok(report)
}

/// Same-noise coupling of `U0` and `U0 + δξ`: for each `δ`, the largest gap
/// over `t_grid` between ensemble means of `Φ`.
pub fn eproperty_probe(
    lab: &Lab<'_>,
    u0: &SpectralState,
    xi: &SpectralState,
    deltas: &[f64],
    phi: &Observable,
    t_grid: &[f64],
    n_traj: usize,
) -> Result<EnsembleReport> {
    if !phi.is_bounded_lipschitz() {
        return Err(invalid("phi", "observable must be bounded Lipschitz"));
    }
    if deltas.is_empty() || deltas.iter().any(|d| !(*d >= 0.0)) {
        return Err(invalid("deltas", "need nonnegative perturbation sizes"));
    }
    if n_traj == 0 {
        return Err(invalid("n_traj", "need at least one trajectory"));
    }
    check_grid(t_grid)?;
    let spec = lab.spectral();
    let p = *lab.params();
    let t_max = t_grid.last().copied().expect("nonempty").max(lab.stepper.dt());

    // diffs[traj][delta][grid], plus whether the pair saw identical noise
    let runs: Vec<(Vec<Vec<f64>>, bool)> = (0..n_traj)
        .into_par_iter()
        .map(|i| {
            let incs = lab.noise(id::EPROPERTY, i as u64, t_max)?;
            let before = increments_digest(&incs);
            let mut base = vec![0.0; t_grid.len()];
            lab.sample_on_grid(u0, &incs, t_grid, |g, u| base[g] = phi.eval(spec, &p, u))?;
            let mut rows = Vec::with_capacity(deltas.len());
            for &d in deltas {
                let start = u0.plus(d, xi);
                let mut row = vec![0.0; t_grid.len()];
                lab.sample_on_grid(&start, &incs, t_grid, |g, u| row[g] = phi.eval(spec, &p, u) - base[g])?;
                rows.push(row);
            }
            Ok((rows, increments_digest(&incs) == before))
        })
        .collect::<Result<_>>()?;

    let mut report = EnsembleReport::new("eproperty", &lab.config_digest, lab.seed);
    report.tags.push("synchronous_coupling".into());
    report.parameters.insert("n_traj".into(), n_traj as f64);
    report.parameters.insert("xi_norm".into(), lab.stepper.norm(xi));
    let mut table = Table::new(&["delta", "t", "mean_gap", "std_error"]);
    let mut gaps = Vec::with_capacity(deltas.len());
    for (k, &d) in deltas.iter().enumerate() {
        let mut sup: f64 = 0.0;
        for (g, &t) in t_grid.iter().enumerate() {
            let xs: Vec<f64> = runs.iter().map(|r| r.0[k][g]).collect();
            let s = summarize(&xs);
            sup = sup.max(s.mean.abs());
            table.push(vec![d, t, s.mean, s.std_error]);
        }
        gaps.push(sup);
        report.scalars.insert(format!("sup_gap_delta_{d}"), sup);
    }
    report.raw = table;

    let mut order: Vec<usize> = (0..deltas.len()).collect();
    order.sort_by(|&a, &b| deltas[b].total_cmp(&deltas[a]));
    let monotone = order.windows(2).all(|w| gaps[w[1]] <= gaps[w[0]]);
    report
        .verdicts
        .push(Verdict::flag("gap_nonincreasing_as_delta_shrinks", monotone));
    report
        .verdicts
        .push(Verdict::flag("identical_noise_in_pairs", runs.iter().all(|r| r.1)));
    let pts: Vec<(f64, f64)> = deltas
        .iter()
        .zip(&gaps)
        .filter(|(d, g)| **d > 0.0 && **g > 0.0)
        .map(|(d, g)| (d.ln(), g.ln()))
        .collect();
    if pts.len() >= 2 {
        let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        report
            .verdicts
            .push(Verdict::at_least("log_log_slope", ols_slope(&x, &y), 0.8));
    } else {
        report
            .warnings
            .push("fewer than two nonzero gaps; slope not assessed".into());
    }
    Ok(report)
}

/// Initial conditions on the ball `‖U0‖ ≤ C`: the origin, the slowest and
/// fastest retained modes in each slot at radius `C/2` and `C`, and two random
/// directions at radius `C`.
pub fn irreducibility_mesh(lab: &Lab<'_>, c_ball: f64) -> Result<Vec<(String, SpectralState)>> {
    if !(c_ball >= 0.0 && c_ball.is_finite()) {
        return Err(invalid("c_ball", "radius must be nonnegative"));
    }
    let spec = lab.spectral();
    let n = spec.resolution();
    let mut mesh = vec![("origin".to_string(), spec.zero_state())];
    if c_ball == 0.0 {
        return Ok(mesh);
    }
    let kmax = ModeIndex::new(spec.cutoff(), 0);
    let e1 = ModeIndex::new(1, 0);
    let e2 = ModeIndex::new(0, 1);
    let dirs = [
        ("sigma0_e1", sigma_state(n, e1, 0)),
        ("psi1_e2", psi_state(n, e2, 1)),
        (
            "psi0_e1+sigma1_e2",
            psi_state(n, e1, 0).plus(1.0, &sigma_state(n, e2, 1)),
        ),
        ("sigma0_kmax", sigma_state(n, kmax, 0)),
    ];
    for (name, d) in dirs {
        let unit = d.scaled(1.0 / lab.stepper.norm(&d));
        for r in [0.5, 1.0] {
            mesh.push((format!("{name}@{r}C"), unit.scaled(r * c_ball)));
        }
    }
    for j in 0..2u64 {
        let mut rng = stream(lab.seed, stream_id(purpose::INITIAL, id::IRREDUCIBILITY, j));
        let d = spec.random_state(&mut rng, 1.0, 1.0);
        let unit = d.scaled(1.0 / lab.stepper.norm(&d));
        mesh.push((format!("random{j}@C"), unit.scaled(c_ball)));
    }
    Ok(mesh)
}

/// Hit frequency of `‖U_T‖ ≤ γ` from every mesh point, for each `T` in
/// `t_list`, with a one-sided 95% Clopper–Pearson bound for the worst point.
pub fn irreducibility_probe(
    lab: &Lab<'_>,
    c_ball: f64,
    gamma: f64,
    n_traj: usize,
    t_list: &[f64],
) -> Result<EnsembleReport> {
    if !(gamma > 0.0) {
        return Err(invalid("gamma", "gamma must be positive"));
    }
    if n_traj == 0 {
        return Err(invalid("n_traj", "need at least one trajectory"));
    }
    check_grid(t_list)?;
    let mesh = irreducibility_mesh(lab, c_ball)?;
    let t_max = t_list.last().copied().expect("nonempty").max(lab.stepper.dt());
    let jobs: Vec<(usize, usize)> = (0..mesh.len()).flat_map(|m| (0..n_traj).map(move |i| (m, i))).collect();
    let hits: Vec<Vec<bool>> = jobs
        .par_iter()
        .map(|&(m, i)| {
            let incs = lab.noise(id::IRREDUCIBILITY, ((m as u64) << 20) | i as u64, t_max)?;
            let mut h = vec![false; t_list.len()];
            lab.sample_on_grid(&mesh[m].1, &incs, t_list, |g, u| h[g] = lab.stepper.norm(u) <= gamma)?;
            Ok(h)
        })
        .collect::<Result<_>>()?;

    let mut report = EnsembleReport::new("irreducibility", &lab.config_digest, lab.seed);
    report.parameters.insert("c_ball".into(), c_ball);
    report.parameters.insert("gamma".into(), gamma);
    report.parameters.insert("n_traj".into(), n_traj as f64);
    let mut table = Table::new(&["t", "mesh_point", "hits", "trials", "frequency"]);
    let mut best_lower: f64 = 0.0;
    for (g, &t) in t_list.iter().enumerate() {
        let mut worst = usize::MAX;
        for m in 0..mesh.len() {
            let k = (0..n_traj).filter(|&i| hits[m * n_traj + i][g]).count();
            worst = worst.min(k);
            table.push(vec![t, m as f64, k as f64, n_traj as f64, k as f64 / n_traj as f64]);
        }
        let lower = clopper_pearson_lower(worst, n_traj, 0.95)?;
        report
            .scalars
            .insert(format!("min_frequency_t{t}"), worst as f64 / n_traj as f64);
        report.scalars.insert(format!("cp_lower_t{t}"), lower);
        best_lower = best_lower.max(lower);
    }
    report.raw = table;
    for (m, (name, _)) in mesh.iter().enumerate() {
        report.tags.push(format!("mesh{m}={name}"));
    }
    report
        .verdicts
        .push(Verdict::above("best_cp_lower_bound", best_lower, 0.0));
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InvariantConfig {
    pub t_long: f64,
    /// Defaults to `t_long / 5`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<f64>,
    pub n_batches: usize,
    /// Record every `thin` steps.
    pub thin: usize,
    pub observables: Vec<Observable>,
    /// Effective samples per batch below which a warning is raised.
    pub min_effective_per_batch: f64,
}

impl Default for InvariantConfig {
    fn default() -> Self {
        Self {
            t_long: 500.0,
            burn_in: None,
            n_batches: 20,
            thin: 1,
            observables: Observable::default_set(),
            min_effective_per_batch: 5.0,
        }
    }
}

/// Post-burn-in time averages along one long trajectory per initial
/// condition, compared pairwise with batch-means standard errors.
pub fn invariant_statistics(lab: &Lab<'_>, u0s: &[SpectralState], cfg: &InvariantConfig) -> Result<EnsembleReport> {
    if u0s.len() < 2 {
        return Err(Error::Insufficient {
            what: "initial conditions",
            got: u0s.len(),
            need: 2,
        });
    }
    if cfg.observables.is_empty() {
        return Err(invalid("observables", "need at least one observable"));
    }
    let burn = cfg.burn_in.unwrap_or(cfg.t_long / 5.0);
    if !(burn >= 0.0 && burn < cfg.t_long) {
        return Err(invalid("burn_in", "burn-in must lie in [0, t_long)"));
    }
    let spec = lab.spectral();
    let p = *lab.params();
    let scheme = lab.stepper.scheme();
    let n_steps = scheme.steps_for(cfg.t_long)?;
    let first = scheme.steps_for(burn)?;
    let thin = cfg.thin.max(1);

    let series: Vec<Vec<Vec<f64>>> = u0s
        .par_iter()
        .enumerate()
        .map(|(a, u0)| {
            let incs = lab.noise(id::INVARIANT, a as u64, cfg.t_long)?;
            let mut out = vec![Vec::with_capacity((n_steps - first) / thin + 1); cfg.observables.len()];
            lab.stepper.run(u0, n_steps, lab.model, &incs, |i, u| {
                if i > first && (i - first) % thin == 0 {
                    for (o, s) in cfg.observables.iter().zip(out.iter_mut()) {
                        s.push(o.eval(spec, &p, u));
                    }
                }
            })?;
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut report = EnsembleReport::new("invariant", &lab.config_digest, lab.seed);
    report.parameters.insert("t_long".into(), cfg.t_long);
    report.parameters.insert("burn_in".into(), burn);
    report.parameters.insert("n_batches".into(), cfg.n_batches as f64);
    let mut table = Table::new(&["ic", "observable", "mean", "std_error", "effective_samples"]);
    for (o, obs) in cfg.observables.iter().enumerate() {
        let label = obs.label();
        let mut bms = Vec::new();
        for (a, s) in series.iter().enumerate() {
            let bm = batch_means(&s[o], cfg.n_batches)?;
            table.push(vec![a as f64, o as f64, bm.mean, bm.std_error, bm.effective_samples]);
            report.scalars.insert(format!("{label}_ic{a}_mean"), bm.mean);
            report.scalars.insert(format!("{label}_ic{a}_se"), bm.std_error);
            if bm.effective_samples < cfg.min_effective_per_batch * cfg.n_batches as f64 {
                report.warnings.push(format!(
                    "{label} from ic{a}: only {:.1} effective samples",
                    bm.effective_samples
                ));
            }
            bms.push(bm);
        }
        let mut worst: f64 = 0.0;
        for a in 0..bms.len() {
            for b in a + 1..bms.len() {
                let se = (bms[a].std_error.powi(2) + bms[b].std_error.powi(2)).sqrt();
                let d = (bms[a].mean - bms[b].mean).abs();
                let z = if se > 0.0 {
                    d / se
                } else if d <= 1e-12 {
                    0.0
                } else {
                    f64::INFINITY
                };
                worst = worst.max(z);
            }
        }
        report
            .verdicts
            .push(Verdict::at_most(format!("{label}_gap_in_se"), worst, 3.0));
    }
    report.raw = table;
    Ok(report)
}
