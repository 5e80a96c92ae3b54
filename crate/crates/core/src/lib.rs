//! Spectral-Galerkin / backward-Euler laboratory for the stochastic Cahn-Hilliard-Cook
//! equation `dX + A(AX + F(X)) dt = dW` on a box with Neumann boundary conditions.

pub mod convergence;
pub mod dense_oracle;
pub mod error;
mod linsolve;
pub mod noise;
pub mod nonlinearity;
pub mod simulator;
pub mod spectral;
pub mod stepper;

pub use convergence::{
    fit_rate, galerkin_rate_study, strong_error_study, Axis, Experiment, LadderSpec, Level, RateFit, RateReport,
};
pub use error::{Error, Result};
pub use noise::{BrownianSkeleton, GammaCertificate, NoiseKind, NoiseModel};
pub use nonlinearity::Nonlinearity;
pub use simulator::{ensemble_moments, holder_probe, simulate_path, simulate_splitting_ensemble, Trajectory};
pub use spectral::{EigenBasis, SpectralField};
pub use stepper::{SchemeConfig, SolverKind, StepState, Stepper};
