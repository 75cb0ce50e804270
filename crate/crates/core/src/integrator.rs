//! Time stepping of `dU = F(U) dt + σ_θ dW_{ℓ_t}`.
//!
//! One step is `U' = E∘U + Φ∘N(U)` with `N(U) = -B(U,U) + GU` and diagonal
//! multipliers from the dissipative part, followed by the jumps that fall in
//! the step window. The same `(E, Φ)` pair drives the tangent and adjoint
//! steps in [`crate::tangent`].

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::noise::{LevyIncrement, NoiseModel};
use crate::spectral::{PhysicsParams, Spectral, SpectralField, SpectralState, TORUS_AREA};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    /// Exponential Euler: `E = e^{-ν|k|²dt}`, `Φ = (1 - E)/(ν|k|²)`.
    EtdEuler,
    /// Linearly implicit Euler: `E = 1/(1 + ν|k|²dt)`, `Φ = dt E`.
    ImexEuler,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepScheme {
    pub kind: SchemeKind,
    pub dt: f64,
}

impl Default for StepScheme {
    fn default() -> Self {
        Self {
            kind: SchemeKind::EtdEuler,
            dt: 1e-3,
        }
    }
}

impl StepScheme {
    pub fn new(kind: SchemeKind, dt: f64) -> Result<Self> {
        let s = Self { kind, dt };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid("dt", "dt must be positive"));
        }
        Ok(())
    }

    /// Number of steps covering `[0, t]`; `t` must be a multiple of `dt`.
    pub fn steps_for(&self, t: f64) -> Result<usize> {
        let n = (t / self.dt).round();
        if !(t >= 0.0) || (n * self.dt - t).abs() > 1e-9 * t.max(1.0) {
            return Err(invalid(
                "T",
                format!("horizon {t} is not a multiple of dt = {}", self.dt),
            ));
        }
        Ok(n as usize)
    }

    /// Index of the step whose window `(t_{i-1}, t_i]` contains `t`.
    pub fn step_index_of(&self, t: f64) -> usize {
        ((t / self.dt - 1e-9).ceil() as usize).max(1)
    }
}

/// Default blow-up ceiling on `‖U‖₁`.
pub const DEFAULT_CEILING: f64 = 1e6;

/// Precomputed step multipliers for one `(grid, params, scheme)`.
#[derive(Clone, Debug)]
pub struct Stepper {
    spec: Spectral,
    params: PhysicsParams,
    scheme: StepScheme,
    e_w: Vec<f64>,
    phi_w: Vec<f64>,
    e_t: Vec<f64>,
    phi_t: Vec<f64>,
    pub ceiling: f64,
}

impl Stepper {
    pub fn new(spec: Spectral, params: PhysicsParams, scheme: StepScheme) -> Result<Self> {
        params.validate()?;
        scheme.validate()?;
        let ksq = spec.ksq_table();
        let dt = scheme.dt;
        let make = |nu: f64| -> (Vec<f64>, Vec<f64>) {
            ksq.iter()
                .map(|&k2| {
                    if k2 == 0.0 {
                        return (0.0, 0.0);
                    }
                    let l = nu * k2;
                    match scheme.kind {
                        SchemeKind::EtdEuler => ((-l * dt).exp(), -(-l * dt).exp_m1() / l),
                        SchemeKind::ImexEuler => {
                            let r = 1.0 / (1.0 + l * dt);
                            (r, dt * r)
                        }
                    }
                })
                .unzip()
        };
        let (e_w, phi_w) = make(params.nu1);
        let (e_t, phi_t) = make(params.nu2);
        Ok(Self {
            spec,
            params,
            scheme,
            e_w,
            phi_w,
            e_t,
            phi_t,
            ceiling: DEFAULT_CEILING,
        })
    }

    pub fn spectral(&self) -> &Spectral {
        &self.spec
    }

    pub fn params(&self) -> &PhysicsParams {
        &self.params
    }

    pub fn scheme(&self) -> &StepScheme {
        &self.scheme
    }

    pub fn dt(&self) -> f64 {
        self.scheme.dt
    }

    /// `E∘U`.
    pub fn propagate(&self, u: &SpectralState) -> SpectralState {
        SpectralState {
            w: self.spec.apply_multiplier(&u.w, &self.e_w),
            theta: self.spec.apply_multiplier(&u.theta, &self.e_t),
        }
    }

    /// `Φ∘V`.
    pub fn weight(&self, v: &SpectralState) -> SpectralState {
        SpectralState {
            w: self.spec.apply_multiplier(&v.w, &self.phi_w),
            theta: self.spec.apply_multiplier(&v.theta, &self.phi_t),
        }
    }

    /// Deterministic part of one step.
    pub fn deterministic_step(&self, u: &SpectralState) -> Result<SpectralState> {
        let mut n = self.spec.nonlinear(u, u)?;
        n.scale(-1.0);
        n.axpy(1.0, &self.spec.apply_g(u, &self.params));
        let mut out = self.propagate(u);
        out.axpy(1.0, &self.weight(&n));
        Ok(out)
    }

    /// One full step: deterministic substep, then the jumps of the window.
    pub fn step(&self, u: &SpectralState, model: &NoiseModel, jumps: &[LevyIncrement]) -> Result<SpectralState> {
        let mut out = self.deterministic_step(u)?;
        for j in jumps {
            out.axpy(1.0, &model.forcing_increment(self.spec.resolution(), &j.dw)?);
        }
        Ok(out)
    }

    pub fn norm(&self, u: &SpectralState) -> f64 {
        self.spec.weighted_norm(u, &self.params, 0.0).expect("s >= 0")
    }

    pub fn norm1(&self, u: &SpectralState) -> f64 {
        self.spec.weighted_norm(u, &self.params, 1.0).expect("s >= 0")
    }

    /// Groups increments by the step that absorbs them.
    pub fn bucket_jumps<'a>(&self, n_steps: usize, incs: &'a [LevyIncrement]) -> Vec<(usize, &'a LevyIncrement)> {
        let mut out: Vec<(usize, &LevyIncrement)> = incs
            .iter()
            .map(|j| (self.scheme.step_index_of(j.time), j))
            .filter(|(i, _)| *i <= n_steps)
            .collect();
        out.sort_by_key(|(i, _)| *i);
        out
    }

    /// Runs `n_steps` steps, calling `observe(i, &U_i)` for `i = 0..=n_steps`.
    pub fn run<F>(
        &self,
        u0: &SpectralState,
        n_steps: usize,
        model: &NoiseModel,
        incs: &[LevyIncrement],
        mut observe: F,
    ) -> Result<SpectralState>
    where
        F: FnMut(usize, &SpectralState),
    {
        if u0.resolution() != self.spec.resolution() {
            return Err(Error::ResolutionMismatch(self.spec.resolution(), u0.resolution()));
        }
        let buckets = self.bucket_jumps(n_steps, incs);
        let mut cursor = 0;
        let mut u = u0.clone();
        observe(0, &u);
        let mut window: Vec<LevyIncrement> = Vec::new();
        for i in 1..=n_steps {
            window.clear();
            while cursor < buckets.len() && buckets[cursor].0 == i {
                window.push(buckets[cursor].1.clone());
                cursor += 1;
            }
            u = self.step(&u, model, &window)?;
            let n1 = self.norm1(&u);
            if !(n1 <= self.ceiling) {
                return Err(Error::BlowUp {
                    time: i as f64 * self.dt(),
                    norm: n1,
                    ceiling: self.ceiling,
                });
            }
            observe(i, &u);
        }
        Ok(u)
    }

    /// Records a trajectory over `[0, T]`.
    pub fn simulate(
        &self,
        u0: &SpectralState,
        horizon: f64,
        model: &NoiseModel,
        incs: &[LevyIncrement],
        opts: RecordOptions,
    ) -> Result<Trajectory> {
        let n_steps = self.scheme.steps_for(horizon)?;
        let stride = opts.stride.max(1);
        let mut traj = Trajectory {
            dt: self.dt(),
            n_steps,
            stride,
            norms: Vec::with_capacity(n_steps + 1),
            norms1: Vec::with_capacity(n_steps + 1),
            snapshots: Vec::new(),
            full: opts.full.then(Vec::new),
            jumps: Vec::new(),
        };
        self.run(u0, n_steps, model, incs, |i, u| {
            traj.norms.push(self.norm(u));
            traj.norms1.push(self.norm1(u));
            if i % stride == 0 {
                traj.snapshots.push(u.clone());
            }
            if let Some(full) = traj.full.as_mut() {
                full.push(u.clone());
            }
        })?;
        traj.jumps = self
            .bucket_jumps(n_steps, incs)
            .into_iter()
            .map(|(i, j)| JumpRecord {
                index: i,
                time: j.time,
                dell: j.dell,
                dw: j.dw.clone(),
            })
            .collect();
        Ok(traj)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct RecordOptions {
    /// Snapshot every `stride` steps.
    pub stride: usize,
    /// Keep every state (needed for tangent and adjoint solves).
    pub full: bool,
}

impl Default for RecordOptions {
    fn default() -> Self {
        Self {
            stride: 10,
            full: false,
        }
    }
}

impl RecordOptions {
    pub fn full() -> Self {
        Self { stride: 10, full: true }
    }
}

/// A jump absorbed at the end of step `index`.
#[derive(Clone, Debug, PartialEq)]
pub struct JumpRecord {
    pub index: usize,
    pub time: f64,
    pub dell: f64,
    pub dw: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub dt: f64,
    pub n_steps: usize,
    pub stride: usize,
    /// `‖U_{t_i}‖` for every step.
    pub norms: Vec<f64>,
    /// `‖U_{t_i}‖₁` for every step.
    pub norms1: Vec<f64>,
    /// States at steps `0, stride, 2 stride, ...`.
    pub snapshots: Vec<SpectralState>,
    full: Option<Vec<SpectralState>>,
    pub jumps: Vec<JumpRecord>,
}

impl Trajectory {
    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    pub fn horizon(&self) -> f64 {
        self.time(self.n_steps)
    }

    pub fn has_full_states(&self) -> bool {
        self.full.is_some()
    }

    /// State after step `i`.
    pub fn state(&self, i: usize) -> Result<&SpectralState> {
        if i > self.n_steps {
            return Err(Error::Window {
                start: 0.0,
                end: self.time(i),
            });
        }
        if let Some(full) = &self.full {
            return Ok(&full[i]);
        }
        if i % self.stride == 0 {
            return Ok(&self.snapshots[i / self.stride]);
        }
        Err(Error::Granularity(format!(
            "step {i} not recorded (stride {})",
            self.stride
        )))
    }

    pub fn final_state(&self) -> &SpectralState {
        match &self.full {
            Some(f) => f.last().expect("nonempty"),
            None => self.snapshots.last().expect("nonempty"),
        }
    }

    /// Step index of time `t`, snapped to the grid.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let i = (t / self.dt).round();
        if !(t >= -1e-12) || i as usize > self.n_steps {
            return Err(Error::Window {
                start: t,
                end: self.horizon(),
            });
        }
        Ok(i as usize)
    }

    /// Jumps absorbed by steps `s_idx + 1 ..= t_idx`.
    pub fn jumps_between(&self, s_idx: usize, t_idx: usize) -> impl Iterator<Item = &JumpRecord> {
        self.jumps.iter().filter(move |j| j.index > s_idx && j.index <= t_idx)
    }
}

/// Outcome of the pathwise temperature energy balance.
#[derive(Clone, Debug, Serialize)]
pub struct EnergyAudit {
    /// Largest `|Δ‖θ‖² + D_n - 2⟨θ, -B(U,θ)⟩ dt| / dt` over steps, where
    /// `D_n` is the dissipation integrated along the linear flow of the step.
    pub max_residual_rate: f64,
    /// Largest relative defect in `‖θ+Δ‖² - ‖θ‖² = 2⟨θ,Δ⟩ + ‖Δ‖²`.
    pub max_jump_defect: f64,
    /// `Σ ‖Δθ‖²` over jumps.
    pub quadratic_variation: f64,
    pub jumps_checked: usize,
}

fn theta_only(f: &SpectralField) -> SpectralState {
    SpectralState {
        w: SpectralField::zeros(f.resolution()),
        theta: f.clone(),
    }
}

/// Reconstructs the discrete balance for `‖θ‖²` step by step.
pub fn energy_audit(stepper: &Stepper, traj: &Trajectory, model: &NoiseModel) -> Result<EnergyAudit> {
    if !traj.has_full_states() {
        return Err(Error::Granularity("energy audit needs every step".into()));
    }
    let spec = stepper.spectral();
    let ksq = spec.ksq_table();
    let dt = traj.dt;
    let nu2 = stepper.params().nu2;
    let mut max_residual_rate = 0.0f64;
    let mut max_jump_defect = 0.0f64;
    let mut qv = 0.0;
    let mut jumps_checked = 0;
    let mut jump_iter = traj.jumps.iter().peekable();
    for i in 0..traj.n_steps {
        let u = traj.state(i)?;
        let pre = stepper.deterministic_step(u)?;
        let th0 = u.theta.inner(&u.theta);
        let th1 = pre.theta.inner(&pre.theta);
        let diss: f64 = TORUS_AREA
            * u.theta
                .coeffs()
                .iter()
                .zip(&ksq)
                .map(|(c, &k2)| c.norm_sqr() * -(-2.0 * nu2 * k2 * dt).exp_m1())
                .sum::<f64>();
        let transport = spec.nonlinear(u, &theta_only(&u.theta))?;
        let tr = -2.0 * transport.theta.inner(&u.theta) * dt;
        let res = (th1 - th0 + diss - tr).abs() / dt;
        max_residual_rate = max_residual_rate.max(res);

        let mut cur = pre;
        while let Some(j) = jump_iter.next_if(|j| j.index == i + 1) {
            let delta = model.forcing_increment(spec.resolution(), &j.dw)?;
            let before = cur.theta.inner(&cur.theta);
            cur.axpy(1.0, &delta);
            let after = cur.theta.inner(&cur.theta);
            let prev_theta = cur.plus(-1.0, &delta);
            let rhs = 2.0 * prev_theta.theta.inner(&delta.theta) + delta.theta.inner(&delta.theta);
            let defect = ((after - before) - rhs).abs() / after.max(before).max(1e-300);
            max_jump_defect = max_jump_defect.max(defect);
            qv += delta.theta.inner(&delta.theta);
            jumps_checked += 1;
        }
        let next = traj.state(i + 1)?;
        let drift = cur.plus(-1.0, next).max_abs();
        if drift > 1e-12 * next.max_abs().max(1.0) {
            return Err(Error::Granularity(format!(
                "step {} does not replay (defect {drift:e})",
                i + 1
            )));
        }
    }
    Ok(EnergyAudit {
        max_residual_rate,
        max_jump_defect,
        quadratic_variation: qv,
        jumps_checked,
    })
}
