//! Numerical laboratory for the stochastic 2D Boussinesq system on the torus
//! driven by a degenerate subordinated-Brownian (pure-jump Lévy) forcing.

pub mod config;
pub mod ergodicity;
pub mod error;
pub mod hormander;
pub mod integrator;
pub mod io;
pub mod noise;
pub mod rng;
pub mod spectral;
pub mod stats;
pub mod tangent;

pub use config::{parse_config, RunConfig};
pub use ergodicity::{EnsembleReport, Lab, Observable};
pub use error::{Error, Result};
pub use integrator::{Stepper, Trajectory};
pub use noise::{NoiseModel, SubordinatorSpec};
pub use spectral::{ModeIndex, PhysicsParams, Spectral, SpectralField, SpectralState};
