//! Volumetric grid types, rigid transforms, resampling, normalization,
//! cropping and NRRD serialization.

mod crop;
mod grid;
pub mod nrrd;
mod normalize;
mod resample;
mod volume;

pub use crop::{crop_range, sub_grid_offset};
pub use grid::{BoundingBox, Grid, Mat3, RigidTransform, Vec3};
pub use resample::Interpolation;
pub use volume::{Mask, ProbabilityMap, Volume};
