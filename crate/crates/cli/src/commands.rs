use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use boussinesq_core::ergodicity::{
    eproperty_probe, experiment_id, invariant_statistics, irreducibility_probe, moment_experiment,
    stopping_moment_experiment, Table, Verdict,
};
use boussinesq_core::hormander::{check_i1, span_generation, validate_identities};
use boussinesq_core::integrator::{energy_audit, RecordOptions};
use boussinesq_core::io::{write_jumps_csv, write_series_csv, write_snapshots, SnapshotHeader};
use boussinesq_core::noise::{increments_digest, sample_subordinator, subordinated_increments};
use boussinesq_core::rng::{purpose, stream, stream_id};
use boussinesq_core::tangent::{malliavin_consistency, min_eigen_probe};
use boussinesq_core::{EnsembleReport, Error, Lab, Result, RunConfig, SpectralState, Stepper};

use crate::{Command, Probe};

const SIMULATE_EXPERIMENT: u64 = 1;
const AUDIT_EXPERIMENT: u64 = 2;
const BRACKETS_EXPERIMENT: u64 = 71;
const CONSISTENCY_HORIZON: f64 = 0.5;
const CONSISTENCY_TOL: f64 = 1e-8;
const PSD_TOL: f64 = -1e-10;
const IDENTITY_TOL: f64 = 1e-4;
const JUMP_DEFECT_TOL: f64 = 1e-10;

/// What a subcommand produced.
#[derive(Debug)]
pub struct Outcome {
    pub command: &'static str,
    pub dir: PathBuf,
    pub passed: bool,
    pub lines: Vec<String>,
}

impl Outcome {
    fn new(command: &'static str, dir: PathBuf) -> Self {
        Self {
            command,
            dir,
            passed: true,
            lines: Vec::new(),
        }
    }

    fn absorb(&mut self, report: &EnsembleReport) {
        for v in &report.verdicts {
            self.verdict(&report.experiment, v);
        }
        if report.verdicts.is_empty() {
            self.passed = false;
        }
    }

    fn verdict(&mut self, experiment: &str, v: &Verdict) {
        self.passed &= v.passed;
        self.lines.push(format!(
            "{} {experiment}/{}: {:e} {} {:e}",
            if v.passed { "PASS" } else { "FAIL" },
            v.name,
            v.value,
            v.rule,
            v.threshold
        ));
    }

    pub fn summary(&self) -> String {
        let mut s = format!("{}: {}", self.command, self.dir.display());
        for l in &self.lines {
            s.push('\n');
            s.push_str(l);
        }
        s
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_report(dir: &Path, name: &str, report: &EnsembleReport) -> Result<()> {
    fs::write(dir.join(format!("{name}.json")), report.to_json()? + "\n")?;
    let mut f = create(&dir.join(format!("{name}.csv")))?;
    report.write_csv(&mut f)?;
    f.flush()?;
    Ok(())
}

/// Random state with `‖U‖ = norm` drawn from the initial-condition stream.
fn initial_state(stepper: &Stepper, seed: u64, experiment: u64, index: u64, norm: f64) -> SpectralState {
    let spec = stepper.spectral();
    if norm == 0.0 {
        return spec.zero_state();
    }
    let mut rng = stream(seed, stream_id(purpose::INITIAL, experiment, index));
    let d = spec.random_state(&mut rng, 1.0, 2.0);
    d.scaled(norm / stepper.norm(&d))
}

fn linspace(t_max: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| t_max * i as f64 / (n - 1) as f64).collect()
}

pub fn run(cfg: &RunConfig, command: &Command) -> Result<Outcome> {
    let digest = cfg.digest();
    let dir = Path::new(&cfg.out_dir).join(&digest);
    fs::create_dir_all(&dir)?;
    fs::write(
        dir.join("config.toml"),
        format!("# config_digest: {digest}\n{}", cfg.canonical_toml()?),
    )?;
    match command {
        Command::Simulate => simulate(cfg, &digest, dir),
        Command::Malliavin => malliavin(cfg, &digest, dir),
        Command::Brackets => brackets(cfg, &digest, dir),
        Command::Span => span(cfg, &digest, dir),
        Command::Ergodicity { probe } => ergodicity(cfg, &digest, dir, *probe),
        Command::Moments => moments(cfg, &digest, dir),
        Command::Audit => audit(cfg, &digest, dir),
    }
}

fn simulate(cfg: &RunConfig, digest: &str, dir: PathBuf) -> Result<Outcome> {
    let stepper = cfg.stepper()?;
    let model = cfg.noise_model()?;
    let lab = Lab::new(&stepper, &model, cfg.subordinator, cfg.seed, digest);
    let sub = lab.trajectory_subordinator();
    let t = cfg.simulate.t;
    let u0 = initial_state(&stepper, cfg.seed, SIMULATE_EXPERIMENT, 0, cfg.simulate.u0_norm);
    let mut r_sub = stream(cfg.seed, stream_id(purpose::SUBORDINATOR, SIMULATE_EXPERIMENT, 0));
    let mut r_bm = stream(cfg.seed, stream_id(purpose::BROWNIAN, SIMULATE_EXPERIMENT, 0));
    let path = sample_subordinator(&sub, t, &mut r_sub)?;
    let incs = subordinated_increments(&path, model.dim(), &mut r_bm)?;
    let opts = RecordOptions {
        stride: cfg.simulate.stride,
        full: false,
    };
    let traj = stepper.simulate(&u0, t, &model, &incs, opts)?;

    let mut f = create(&dir.join("simulate_series.csv"))?;
    write_series_csv(&mut f, &traj, digest, cfg.seed)?;
    f.flush()?;
    let mut f = create(&dir.join("simulate_jumps.csv"))?;
    write_jumps_csv(&mut f, &traj, digest, cfg.seed)?;
    f.flush()?;
    let mut f = create(&dir.join("simulate_path.csv"))?;
    path.write_csv(&mut f, &sub, cfg.seed, digest)?;
    f.flush()?;
    let header = SnapshotHeader {
        resolution: cfg.grid.resolution,
        params: cfg.physics,
        dt: stepper.dt(),
        seed: cfg.seed,
        stride: traj.stride,
        digest: digest.to_string(),
    };
    let snaps: Vec<(f64, &SpectralState)> = traj
        .snapshots
        .iter()
        .enumerate()
        .map(|(i, u)| (traj.time(i * traj.stride), u))
        .collect();
    let mut f = create(&dir.join("snapshots.bin"))?;
    write_snapshots(&mut f, &header, &snaps)?;
    f.flush()?;

    let max_norm = traj.norms.iter().copied().fold(0.0, f64::max);
    let summary = serde_json::json!({
        "experiment": "simulate",
        "config_digest": digest,
        "seed": cfg.seed,
        "horizon": traj.horizon(),
        "n_steps": traj.n_steps,
        "n_jumps": traj.jumps.len(),
        "noise_digest": increments_digest(&incs),
        "initial_norm": traj.norms[0],
        "final_norm": traj.norms[traj.n_steps],
        "max_norm": max_norm,
        "passed": true,
    });
    fs::write(dir.join("simulate.json"), to_pretty(&summary)? + "\n")?;
    let mut out = Outcome::new("simulate", dir);
    out.lines.push(format!(
        "steps {} jumps {} final norm {:e}",
        traj.n_steps,
        traj.jumps.len(),
        traj.norms[traj.n_steps]
    ));
    Ok(out)
}

fn to_pretty<T: serde::Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| Error::Format(e.to_string()))
}

fn malliavin(cfg: &RunConfig, digest: &str, dir: PathBuf) -> Result<Outcome> {
    let stepper = cfg.stepper()?;
    let model = cfg.noise_model()?;
    let mc = &cfg.malliavin;
    let u0 = initial_state(&stepper, cfg.seed, experiment_id::MIN_EIGEN, 0, mc.u0_norm);

    let checks = malliavin_consistency(
        &stepper,
        &model,
        &cfg.subordinator,
        &u0,
        CONSISTENCY_HORIZON,
        mc.check_windows,
        mc.probe.big_n,
        cfg.seed,
    )?;
    let mut cons = EnsembleReport::new("malliavin_consistency", digest, cfg.seed);
    cons.parameters.insert("big_n".into(), mc.probe.big_n as f64);
    cons.parameters.insert("horizon".into(), CONSISTENCY_HORIZON);
    cons.raw = Table::new(&["window", "s_idx", "t_idx", "jumps", "rel_diff", "min_eig_rel"]);
    for c in &checks {
        cons.raw.push(vec![
            c.window as f64,
            c.s_idx as f64,
            c.t_idx as f64,
            c.jumps as f64,
            c.rel_diff,
            c.min_eig_rel,
        ]);
    }
    let worst_diff = checks.iter().map(|c| c.rel_diff).fold(0.0, f64::max);
    let worst_eig = checks.iter().map(|c| c.min_eig_rel).fold(f64::INFINITY, f64::min);
    cons.verdicts.push(Verdict::at_most(
        "forward_backward_rel_diff",
        worst_diff,
        CONSISTENCY_TOL,
    ));
    cons.verdicts
        .push(Verdict::at_least("min_eigenvalue_over_frobenius", worst_eig, PSD_TOL));
    write_report(&dir, "malliavin_consistency", &cons)?;

    let probe = min_eigen_probe(&stepper, &model, &cfg.subordinator, &u0, &mc.probe, cfg.seed)?;
    let mut rep = EnsembleReport::new("min_eigen", digest, cfg.seed);
    rep.parameters.insert("big_n".into(), mc.probe.big_n as f64);
    rep.parameters.insert("alpha".into(), mc.probe.alpha);
    rep.parameters.insert("kappa".into(), mc.probe.kappa);
    rep.parameters.insert("n_paths".into(), mc.probe.n_paths as f64);
    rep.scalars.insert("degenerate".into(), probe.degenerate as f64);
    for (e, f) in probe.eps.iter().zip(&probe.fraction_below) {
        rep.scalars.insert(format!("fraction_below_{e:e}"), *f);
    }
    rep.raw = Table::new(&[
        "path",
        "eta",
        "jumps",
        "degenerate",
        "lambda_constrained",
        "lambda_full",
        "lambda_pn",
    ]);
    for s in &probe.samples {
        rep.raw.push(vec![
            s.path as f64,
            s.eta,
            s.jumps as f64,
            s.degenerate as u8 as f64,
            s.lambda_constrained,
            s.lambda_full,
            s.lambda_pn,
        ]);
    }
    if probe.degenerate > 0 {
        rep.warnings.push(format!(
            "{} windows without jumps reported separately",
            probe.degenerate
        ));
    }
    rep.verdicts.push(Verdict::flag(
        "fraction_below_eps_decreases_to_zero",
        probe.monotone_to_zero(),
    ));
    write_report(&dir, "min_eigen", &rep)?;

    let mut out = Outcome::new("malliavin", dir);
    out.absorb(&cons);
    out.absorb(&rep);
    Ok(out)
}

fn brackets(cfg: &RunConfig, digest: &str, dir: PathBuf) -> Result<Outcome> {
    let spec = cfg.spectral()?;
    let p = cfg.physics;
    let mut r1 = stream(cfg.seed, stream_id(purpose::INITIAL, BRACKETS_EXPERIMENT, 0));
    let mut r2 = stream(cfg.seed, stream_id(purpose::INITIAL, BRACKETS_EXPERIMENT, 1));
    let u = spec.random_state(&mut r1, 0.5, 2.0);
    let u2 = spec.random_state(&mut r2, 0.5, 2.0);
    let checks = validate_identities(&spec, &p, &u, &u2)?;
    let mut rep = EnsembleReport::new("brackets", digest, cfg.seed);
    rep.raw = Table::new(&["check", "max_error"]);
    let mut worst: std::collections::BTreeMap<String, f64> = Default::default();
    for (i, c) in checks.iter().enumerate() {
        rep.raw.push(vec![i as f64, c.max_error]);
        let w = worst.entry(c.identity.clone()).or_insert(0.0);
        *w = w.max(c.max_error);
    }
    for (name, w) in worst {
        rep.verdicts.push(Verdict::at_most(name, w, IDENTITY_TOL));
    }
    rep.tags = checks.iter().map(|c| format!("{}: {}", c.identity, c.case)).collect();
    write_report(&dir, "brackets", &rep)?;
    let mut out = Outcome::new("brackets", dir);
    out.absorb(&rep);
    Ok(out)
}

fn span(cfg: &RunConfig, digest: &str, dir: PathBuf) -> Result<Outcome> {
    let forcing = cfg.noise.mode_indices();
    let state = span_generation(&forcing, cfg.span.big_n)?;
    let replay = state.replay();
    let complete = state.is_complete();
    let i1 = check_i1();
    let cert = serde_json::json!({
        "config_digest": digest,
        "complete": complete,
        "replay_ok": replay.is_ok(),
        "i1_matches": i1,
        "span": serde_json::from_str::<serde_json::Value>(&state.to_json()?).map_err(|e| Error::Format(e.to_string()))?,
    });
    fs::write(dir.join("span.json"), to_pretty(&cert)? + "\n")?;
    let mut log = format!("# config_digest: {digest}\n# N = {}\n", cfg.span.big_n);
    log.push_str(&state.log_text());
    fs::write(dir.join("span.log"), log)?;

    let mut out = Outcome::new("span", dir);
    out.verdict("span", &Verdict::flag("complete", complete));
    out.verdict("span", &Verdict::flag("replay", replay.is_ok()));
    out.verdict("span", &Verdict::flag("i1", i1));
    if let Err(e) = replay {
        out.lines.push(format!("replay error: {e}"));
    }
    Ok(out)
}

fn ergodicity(cfg: &RunConfig, digest: &str, dir: PathBuf, probe: Probe) -> Result<Outcome> {
    let stepper = cfg.stepper()?;
    let model = cfg.noise_model()?;
    let lab = Lab::new(&stepper, &model, cfg.subordinator, cfg.seed, digest);
    let ec = &cfg.ergodicity;
    let mut out = Outcome::new("ergodicity", dir.clone());
    if matches!(probe, Probe::Invariant | Probe::All) {
        let u0s = [
            stepper.spectral().zero_state(),
            initial_state(&stepper, cfg.seed, experiment_id::INVARIANT, 0, ec.u0_large_norm),
        ];
        let rep = invariant_statistics(&lab, &u0s, &ec.invariant)?;
        write_report(&dir, "invariant", &rep)?;
        out.absorb(&rep);
    }
    if matches!(probe, Probe::Eproperty | Probe::All) {
        let pc = &ec.eproperty;
        let u0 = initial_state(&stepper, cfg.seed, experiment_id::EPROPERTY, 0, pc.u0_norm);
        let xi = initial_state(&stepper, cfg.seed, experiment_id::EPROPERTY, 1, 1.0);
        let rep = eproperty_probe(
            &lab,
            &u0,
            &xi,
            &pc.deltas,
            &pc.observable,
            &linspace(pc.t_max, pc.n_grid),
            pc.n_traj,
        )?;
        write_report(&dir, "eproperty", &rep)?;
        out.absorb(&rep);
    }
    if matches!(probe, Probe::Irreducibility | Probe::All) {
        let ic = &ec.irreducibility;
        let rep = irreducibility_probe(&lab, ic.c_ball, ic.gamma, ic.n_traj, &ic.t_list)?;
        write_report(&dir, "irreducibility", &rep)?;
        out.absorb(&rep);
    }
    Ok(out)
}

fn moments(cfg: &RunConfig, digest: &str, dir: PathBuf) -> Result<Outcome> {
    let stepper = cfg.stepper()?;
    let model = cfg.noise_model()?;
    let lab = Lab::new(&stepper, &model, cfg.subordinator, cfg.seed, digest);
    let mc = &cfg.moments;
    let u0s = [
        stepper.spectral().zero_state(),
        initial_state(&stepper, cfg.seed, experiment_id::MOMENT, 0, mc.u0_large_norm),
    ];
    let rep = moment_experiment(&lab, &u0s, &linspace(mc.t_max, mc.n_grid), mc.n_traj)?;
    write_report(&dir, "moments", &rep)?;
    let stop = stopping_moment_experiment(&lab, &mc.stopping)?;
    write_report(&dir, "stopping", &stop)?;
    let mut out = Outcome::new("moments", dir);
    out.absorb(&rep);
    out.absorb(&stop);
    Ok(out)
}

fn audit(cfg: &RunConfig, digest: &str, dir: PathBuf) -> Result<Outcome> {
    let stepper = cfg.stepper()?;
    let model = cfg.noise_model()?;
    let lab = Lab::new(&stepper, &model, cfg.subordinator, cfg.seed, digest);
    let u0 = initial_state(&stepper, cfg.seed, AUDIT_EXPERIMENT, 0, cfg.audit.u0_norm);
    let incs = lab.noise(AUDIT_EXPERIMENT, 0, cfg.audit.t)?;
    let traj = stepper.simulate(&u0, cfg.audit.t, &model, &incs, RecordOptions::full())?;
    let a = energy_audit(&stepper, &traj, &model)?;
    let dt = stepper.dt();
    let scale = traj.norms.iter().map(|n| n * n).fold(1.0, f64::max);

    let mut rep = EnsembleReport::new("audit", digest, cfg.seed);
    rep.parameters.insert("horizon".into(), traj.horizon());
    rep.parameters.insert("dt".into(), dt);
    rep.scalars.insert("max_residual_rate".into(), a.max_residual_rate);
    rep.scalars.insert("max_jump_defect".into(), a.max_jump_defect);
    rep.scalars.insert("quadratic_variation".into(), a.quadratic_variation);
    rep.scalars.insert("jumps_checked".into(), a.jumps_checked as f64);
    rep.raw = Table::new(&["step", "t", "norm", "norm1"]);
    for (i, (n0, n1)) in traj.norms.iter().zip(&traj.norms1).enumerate() {
        rep.raw.push(vec![i as f64, traj.time(i), *n0, *n1]);
    }
    // The transport and dissipation terms are split at first order in dt.
    rep.verdicts.push(Verdict::at_most(
        "residual_rate_over_energy_scale",
        a.max_residual_rate / scale,
        dt,
    ));
    rep.verdicts
        .push(Verdict::at_most("jump_defect", a.max_jump_defect, JUMP_DEFECT_TOL));
    write_report(&dir, "audit", &rep)?;
    let mut out = Outcome::new("audit", dir);
    out.absorb(&rep);
    Ok(out)
}
