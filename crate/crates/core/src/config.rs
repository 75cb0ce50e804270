//! Run configuration in TOML.
//!
//! Every section and key is optional; missing values take the defaults
//! below, unknown keys are rejected. The digest of a run is taken over the
//! canonical re-serialisation with `out_dir` and `workers` blanked, since
//! neither changes any result.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ergodicity::{InvariantConfig, Observable, Profile, StoppingMomentConfig};
use crate::error::{Error, Result};
use crate::integrator::{StepScheme, Stepper};
use crate::noise::{NoiseModel, SubordinatorSpec};
use crate::spectral::{ModeIndex, PhysicsParams, Spectral};
use crate::tangent::MinEigenConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub resolution: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { resolution: 64 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub modes: Vec<[i32; 2]>,
    /// `[α_k^0, α_k^1]` per mode.
    pub alpha: Vec<[f64; 2]>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            modes: vec![[1, 0], [0, 1]],
            alpha: vec![[1.0, 1.0], [1.0, 1.0]],
        }
    }
}

impl NoiseConfig {
    pub fn mode_indices(&self) -> Vec<ModeIndex> {
        self.modes.iter().map(|m| ModeIndex::new(m[0], m[1])).collect()
    }

    pub fn model(&self) -> Result<NoiseModel> {
        NoiseModel::new(self.mode_indices(), self.alpha.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub t: f64,
    pub stride: usize,
    /// `‖U0‖` of the random initial condition; 0 starts at rest.
    pub u0_norm: f64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            t: 1.0,
            stride: 10,
            u0_norm: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MalliavinConfig {
    pub probe: MinEigenConfig,
    pub u0_norm: f64,
    /// Windows compared between the forward and backward assemblies.
    pub check_windows: usize,
}

impl Default for MalliavinConfig {
    fn default() -> Self {
        Self {
            probe: MinEigenConfig::default(),
            u0_norm: 0.0,
            check_windows: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpanConfig {
    pub big_n: u32,
}

impl Default for SpanConfig {
    fn default() -> Self {
        Self { big_n: 8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MomentsConfig {
    pub t_max: f64,
    pub n_grid: usize,
    pub n_traj: usize,
    /// `‖U0‖` of the second initial condition (the first is 0).
    pub u0_large_norm: f64,
    pub stopping: StoppingMomentConfig,
}

impl Default for MomentsConfig {
    fn default() -> Self {
        Self {
            t_max: 10.0,
            n_grid: 21,
            n_traj: 200,
            u0_large_norm: 10.0,
            stopping: StoppingMomentConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EPropertyConfig {
    pub deltas: Vec<f64>,
    pub t_max: f64,
    pub n_grid: usize,
    pub n_traj: usize,
    pub u0_norm: f64,
    pub observable: Observable,
}

impl Default for EPropertyConfig {
    fn default() -> Self {
        Self {
            deltas: vec![1e-1, 5e-2, 2.5e-2],
            t_max: 10.0,
            n_grid: 21,
            n_traj: 100,
            u0_norm: 10.0,
            observable: Observable::BoundedLipschitz(Profile::Norm),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IrreducibilityConfig {
    pub c_ball: f64,
    pub gamma: f64,
    pub n_traj: usize,
    pub t_list: Vec<f64>,
}

impl Default for IrreducibilityConfig {
    fn default() -> Self {
        Self {
            c_ball: 5.0,
            gamma: 0.5,
            n_traj: 100,
            t_list: vec![5.0, 10.0, 20.0, 50.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ErgodicityConfig {
    pub invariant: InvariantConfig,
    pub u0_large_norm: f64,
    pub eproperty: EPropertyConfig,
    pub irreducibility: IrreducibilityConfig,
}

impl Default for ErgodicityConfig {
    fn default() -> Self {
        Self {
            invariant: InvariantConfig::default(),
            u0_large_norm: 50.0,
            eproperty: EPropertyConfig::default(),
            irreducibility: IrreducibilityConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditConfig {
    pub t: f64,
    pub u0_norm: f64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self { t: 1.0, u0_norm: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: String,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    pub physics: PhysicsParams,
    pub grid: GridConfig,
    pub scheme: StepScheme,
    pub noise: NoiseConfig,
    pub subordinator: SubordinatorSpec,
    pub simulate: SimulateConfig,
    pub malliavin: MalliavinConfig,
    pub span: SpanConfig,
    pub moments: MomentsConfig,
    pub ergodicity: ErgodicityConfig,
    pub audit: AuditConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: "out".into(),
            workers: 0,
            physics: PhysicsParams::default(),
            grid: GridConfig::default(),
            scheme: StepScheme::default(),
            noise: NoiseConfig::default(),
            subordinator: SubordinatorSpec::default(),
            simulate: SimulateConfig::default(),
            malliavin: MalliavinConfig::default(),
            span: SpanConfig::default(),
            moments: MomentsConfig::default(),
            ergodicity: ErgodicityConfig::default(),
            audit: AuditConfig::default(),
        }
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn field_error(field: &str, e: Error) -> Error {
    match e {
        Error::InvalidParameter { reason, .. } => Error::ConfigInvalid(format!("{field}: {reason}")),
        other => Error::ConfigInvalid(format!("{field}: {other}")),
    }
}

fn positive(field: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::ConfigInvalid(format!("{field} must be positive")))
    }
}

/// Parses and validates a config; an empty string gives the defaults.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::ConfigParse {
        line: e.span().map(|s| line_of(text, s.start)).unwrap_or(0),
        message: e.message().to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.physics.validate().map_err(|e| field_error("physics", e))?;
        Spectral::new(self.grid.resolution).map_err(|e| field_error("grid.resolution", e))?;
        self.scheme.validate().map_err(|e| field_error("scheme", e))?;
        self.subordinator
            .validate()
            .map_err(|e| field_error("subordinator", e))?;
        let model = self.noise.model().map_err(|e| field_error("noise", e))?;
        model
            .forcing_increment(self.grid.resolution, &vec![0.0; model.dim()])
            .map_err(|e| field_error("noise.modes", e))?;
        positive("simulate.t", self.simulate.t)?;
        positive("audit.t", self.audit.t)?;
        positive("moments.t_max", self.moments.t_max)?;
        positive("ergodicity.invariant.t_long", self.ergodicity.invariant.t_long)?;
        positive("ergodicity.irreducibility.gamma", self.ergodicity.irreducibility.gamma)?;
        if self.moments.n_grid < 2 || self.ergodicity.eproperty.n_grid < 2 {
            return Err(Error::ConfigInvalid("n_grid must be at least 2".into()));
        }
        if !(self.moments.stopping.kappa0 > 0.0) {
            return Err(Error::ConfigInvalid("moments.stopping.kappa0 must be positive".into()));
        }
        if self.span.big_n == 0 {
            return Err(Error::ConfigInvalid("span.big_n must be at least 1".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    /// Serialisation with `out_dir` and `workers` blanked.
    pub fn canonical_toml(&self) -> Result<String> {
        let mut c = self.clone();
        c.out_dir.clear();
        c.workers = 0;
        c.to_toml()
    }

    /// First 16 hex digits of SHA-256 over [`Self::canonical_toml`].
    pub fn digest(&self) -> String {
        let text = self.canonical_toml().expect("config serialises");
        let h = Sha256::digest(text.as_bytes());
        hex::encode(h)[..16].to_string()
    }

    pub fn spectral(&self) -> Result<Spectral> {
        Spectral::new(self.grid.resolution)
    }

    pub fn stepper(&self) -> Result<Stepper> {
        Stepper::new(self.spectral()?, self.physics, self.scheme)
    }

    pub fn noise_model(&self) -> Result<NoiseModel> {
        self.noise.model()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_is_default() {
        assert_eq!(parse_config("").unwrap(), RunConfig::default());
    }

    #[test]
    fn negative_viscosity_names_field() {
        let e = parse_config("[physics]\nnu1 = -1.0\n").unwrap_err();
        assert!(e.to_string().contains("nu1 must be positive"), "{e}");
    }

    #[test]
    fn unknown_key_reports_line() {
        let e = parse_config("seed = 3\n\n[physics]\nnu3 = 1.0\n").unwrap_err();
        match e {
            Error::ConfigParse { line, .. } => assert_eq!(line, 4),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn round_trip_and_digest() {
        let mut c = RunConfig::default();
        c.seed = 9;
        c.ergodicity.invariant.burn_in = Some(3.0);
        c.noise.modes.push([1, 1]);
        c.noise.alpha.push([0.5, 2.0]);
        let back = parse_config(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.digest(), c.digest());
        let mut d = c.clone();
        d.out_dir = "elsewhere".into();
        assert_eq!(d.digest(), c.digest());
        d.seed = 10;
        assert_ne!(d.digest(), c.digest());
    }
}
