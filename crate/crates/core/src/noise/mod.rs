//! Diagonal Q-Wiener noise: covariance models, the Gaussian skeleton and coupled increments.

mod convolution;
mod increments;
mod model;
mod skeleton;

pub use convolution::sample_stochastic_convolution;
pub use increments::NoiseIncrements;
pub use model::{GammaCertificate, NoiseKind, NoiseModel, GAMMA_CAP, GAMMA_MARGIN};
pub use skeleton::{path_seed, BrownianSkeleton};
