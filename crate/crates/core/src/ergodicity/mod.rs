//! Ensemble experiments on the Galerkin dynamics.

mod experiments;
mod report;

pub use experiments::{
    eproperty_probe, invariant_statistics, irreducibility_mesh, irreducibility_probe, moment_experiment,
    stopping_moment_experiment, InvariantConfig, StoppingMomentConfig,
};
pub use report::{EnsembleReport, Table, Verdict};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::integrator::Stepper;
use crate::noise::{
    sample_subordinator, subordinated_increments, LevyIncrement, NoiseModel, SubordinatorFamily, SubordinatorSpec,
};
use crate::rng::{purpose, stream, stream_id};
use crate::spectral::{ModeIndex, PhysicsParams, Slot, Spectral, SpectralState};

pub mod experiment_id {
    pub const MOMENT: u64 = 11;
    pub const STOPPING: u64 = 21;
    pub const MIN_EIGEN: u64 = 31;
    pub const EPROPERTY: u64 = 41;
    pub const IRREDUCIBILITY: u64 = 51;
    pub const INVARIANT: u64 = 61;
}

/// Everything an experiment needs besides its own parameters.
#[derive(Clone, Debug)]
pub struct Lab<'a> {
    pub stepper: &'a Stepper,
    pub model: &'a NoiseModel,
    pub sub: SubordinatorSpec,
    pub seed: u64,
    pub config_digest: String,
    /// Run with `ℓ ≡ 0`.
    pub noiseless: bool,
}

impl<'a> Lab<'a> {
    pub fn new(
        stepper: &'a Stepper,
        model: &'a NoiseModel,
        sub: SubordinatorSpec,
        seed: u64,
        config_digest: impl Into<String>,
    ) -> Self {
        Self {
            stepper,
            model,
            sub,
            seed,
            config_digest: config_digest.into(),
            noiseless: false,
        }
    }

    pub fn without_noise(mut self) -> Self {
        self.noiseless = true;
        self
    }

    /// Subordinator used for state trajectories. Gamma increments finer than
    /// one step land in the same step and sum to a Gamma increment of the
    /// step, so the grid is coarsened to `dt` without changing the law.
    pub fn trajectory_subordinator(&self) -> SubordinatorSpec {
        let mut s = self.sub;
        if s.family == SubordinatorFamily::Gamma {
            s.grid_step = s.grid_step.max(self.stepper.dt());
        }
        s
    }

    /// Noise of trajectory `traj` in `experiment` on `[0, horizon]`.
    pub fn noise(&self, experiment: u64, traj: u64, horizon: f64) -> Result<Vec<LevyIncrement>> {
        if self.noiseless {
            return Ok(Vec::new());
        }
        let mut r_sub = stream(self.seed, stream_id(purpose::SUBORDINATOR, experiment, traj));
        let mut r_bm = stream(self.seed, stream_id(purpose::BROWNIAN, experiment, traj));
        let path = sample_subordinator(&self.trajectory_subordinator(), horizon, &mut r_sub)?;
        subordinated_increments(&path, self.model.dim(), &mut r_bm)
    }

    pub fn spectral(&self) -> &Spectral {
        self.stepper.spectral()
    }

    pub fn params(&self) -> &PhysicsParams {
        self.stepper.params()
    }

    /// Runs to the last grid time and calls `observe(g, U)` at each grid
    /// index `g` (times snapped to steps).
    pub(crate) fn sample_on_grid<F>(
        &self,
        u0: &SpectralState,
        incs: &[LevyIncrement],
        t_grid: &[f64],
        mut observe: F,
    ) -> Result<()>
    where
        F: FnMut(usize, &SpectralState),
    {
        let scheme = self.stepper.scheme();
        let idx: Vec<usize> = t_grid.iter().map(|&t| scheme.steps_for(t)).collect::<Result<_>>()?;
        let last = idx.iter().copied().max().unwrap_or(0);
        let mut g = 0;
        self.stepper.run(u0, last, self.model, incs, |i, u| {
            while g < idx.len() && idx[g] == i {
                observe(g, u);
                g += 1;
            }
        })?;
        Ok(())
    }
}

/// Bounded 1-Lipschitz building blocks, each composed with `x ↦ x/(1+x)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case")]
pub enum Profile {
    /// `‖U‖`.
    Norm,
    /// `‖P_N U‖`.
    LowModes { n: u32 },
    /// `‖Q_N U‖`.
    HighModes { n: u32 },
    /// A constant in `[0, 1]`, used unclamped.
    Constant { value: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tag", rename_all = "snake_case")]
pub enum Observable {
    /// `‖U‖²`.
    Energy,
    /// `Re Û_k` in one slot.
    ModeRe {
        slot: Slot,
        k: ModeIndex,
    },
    BoundedLipschitz(Profile),
}

fn clamp(x: f64) -> f64 {
    x / (1.0 + x)
}

impl Observable {
    pub fn is_bounded_lipschitz(&self) -> bool {
        matches!(self, Observable::BoundedLipschitz(_))
    }

    pub fn label(&self) -> String {
        match self {
            Observable::Energy => "energy".into(),
            Observable::ModeRe { slot, k } => format!("mode_re_{slot:?}_{}_{}", k.k1, k.k2).to_lowercase(),
            Observable::BoundedLipschitz(p) => match p {
                Profile::Norm => "bl_norm".into(),
                Profile::LowModes { n } => format!("bl_low_{n}"),
                Profile::HighModes { n } => format!("bl_high_{n}"),
                Profile::Constant { value } => format!("bl_const_{value}"),
            },
        }
    }

    pub fn eval(&self, spec: &Spectral, p: &PhysicsParams, u: &SpectralState) -> f64 {
        let norm = |v: &SpectralState| spec.weighted_norm(v, p, 0.0).expect("s >= 0");
        match self {
            Observable::Energy => norm(u).powi(2),
            Observable::ModeRe { slot, k } => match slot {
                Slot::W => u.w.get(*k).re,
                Slot::Theta => u.theta.get(*k).re,
            },
            Observable::BoundedLipschitz(profile) => match profile {
                Profile::Norm => clamp(norm(u)),
                Profile::LowModes { n } => clamp(norm(&spec.project_p(u, *n))),
                Profile::HighModes { n } => clamp(norm(&spec.project_q(u, *n))),
                Profile::Constant { value } => value.clamp(0.0, 1.0),
            },
        }
    }

    /// The three bounded-Lipschitz observables used for invariant statistics.
    pub fn default_set() -> Vec<Observable> {
        vec![
            Observable::BoundedLipschitz(Profile::Norm),
            Observable::BoundedLipschitz(Profile::LowModes { n: 1 }),
            Observable::BoundedLipschitz(Profile::HighModes { n: 1 }),
        ]
    }
}
