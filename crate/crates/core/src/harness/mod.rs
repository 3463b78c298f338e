//! Experiment plumbing: RNG, slope fits, configuration and reports.

pub mod config;
pub mod experiments;
pub mod report;
pub mod rng;
pub mod slope;

use thiserror::Error;

pub use config::{ConfigError, Experiment, ExperimentConfig};
pub use report::{Check, Report};

/// Any numerical-module failure inside an experiment.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModuleError {
    #[error(transparent)]
    Bures(#[from] crate::bures::BuresError),
    #[error(transparent)]
    Grid(#[from] crate::grid1d::GridError),
    #[error(transparent)]
    Energy(#[from] crate::energies::EnergyError),
    #[error(transparent)]
    Particle(#[from] crate::particles1d::ParticleError),
    #[error(transparent)]
    Riemannian(#[from] crate::riemannian::RiemannianError),
    #[error(transparent)]
    Slope(#[from] slope::SlopeError),
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("experiment {experiment} failed: {source}")]
    Module {
        experiment: Experiment,
        #[source]
        source: ModuleError,
    },
    #[error("writing report files: {0}")]
    Io(#[from] std::io::Error),
}

/// Runs the configured experiment.
pub fn run(cfg: &ExperimentConfig) -> Result<Report, HarnessError> {
    experiments::run_experiment(cfg).map_err(|source| HarnessError::Module { experiment: cfg.experiment, source })
}
