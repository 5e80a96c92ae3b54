//! Neumann-Laplacian eigenstructure, diagonal operators and grid transforms.

mod basis;
mod bounds;
mod field;

pub use basis::{EigenBasis, GridWorkspace};
pub use bounds::{verify_smoothing_bounds, BoundFamily, BoundRow, SmoothingReport};
pub use field::{ModeMap, SpectralField};
