//! Tomographic reconstruction of tracked 2D sweeps into voxel volumes.

mod reconstruct;
mod sweep;

pub use reconstruct::{
    output_grid, reconstruct, reconstruct_on_grid, Reconstruction,
    DEFAULT_RECONSTRUCTION_SPACING_MM, HOLE_FILL_MIN_NEIGHBORS, HOLE_FILL_PASSES,
};
pub use sweep::{Sweep, TrackedFrame};
