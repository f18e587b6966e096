//! Resampling to a new voxel spacing or onto an arbitrary target grid.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::{Grid, Vec3};
use super::volume::{nearest_index, trilinear, Mask, ProbabilityMap, Volume};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    Trilinear,
    Nearest,
}

/// Grid with the same orientation covering the same edge-to-edge extent at
/// `target_spacing`, plus the per-axis source-voxel coordinate of the first
/// target voxel and the step ratio.
fn respaced_grid(grid: &Grid, target_spacing: &Vec3) -> Result<(Grid, Vec3, Vec3)> {
    if target_spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "target spacing {:?} must be positive",
            target_spacing.as_slice()
        )));
    }
    let dims = grid.dims();
    let mut new_dims = [0usize; 3];
    let mut start = Vec3::zeros();
    let mut ratio = Vec3::zeros();
    for a in 0..3 {
        let r = target_spacing[a] / grid.spacing()[a];
        let n = (dims[a] as f64 / r).round();
        if n < 1.0 {
            return Err(Error::DegenerateExtent { axis: a });
        }
        new_dims[a] = n as usize;
        ratio[a] = r;
        // align the outer voxel edges of both grids
        start[a] = -0.5 + 0.5 * r;
    }
    let origin = grid.voxel_to_world(&start);
    let out = Grid::new(new_dims, *target_spacing, origin, *grid.orientation())?;
    Ok((out, start, ratio))
}

fn source_coords(start: &Vec3, ratio: &Vec3, v: [usize; 3]) -> Vec3 {
    Vec3::new(
        start.x + v[0] as f64 * ratio.x,
        start.y + v[1] as f64 * ratio.y,
        start.z + v[2] as f64 * ratio.z,
    )
}

fn resample_f64(src: &Grid, data: &[f64], target_spacing: &Vec3, interp: Interpolation) -> Result<(Grid, Vec<f64>)> {
    let (out, start, ratio) = respaced_grid(src, target_spacing)?;
    let values = (0..out.len())
        .into_par_iter()
        .map(|idx| {
            let c = source_coords(&start, &ratio, out.voxel_index(idx));
            match interp {
                Interpolation::Trilinear => trilinear(src, data, &c),
                Interpolation::Nearest => nearest_index(src, &c).map_or(0.0, |i| data[i]),
            }
        })
        .collect();
    Ok((out, values))
}

fn onto_f64(src: &Grid, data: &[f64], target: &Grid, interp: Interpolation) -> Vec<f64> {
    if src.matches(target) {
        return data.to_vec();
    }
    (0..target.len())
        .into_par_iter()
        .map(|idx| {
            let v = target.voxel_index(idx);
            let c = src.world_to_voxel(&target.voxel_center(v[0], v[1], v[2]));
            match interp {
                Interpolation::Trilinear => trilinear(src, data, &c),
                Interpolation::Nearest => nearest_index(src, &c).map_or(0.0, |i| data[i]),
            }
        })
        .collect()
}

impl Volume {
    /// Resamples to `target_spacing`, keeping origin alignment at the outer
    /// voxel edges and the orientation unchanged.
    pub fn resample(&self, target_spacing: &Vec3, interp: Interpolation) -> Result<Volume> {
        let (grid, data) = resample_f64(self.grid(), self.data(), target_spacing, interp)?;
        Volume::new(grid, data)
    }

    /// Samples this volume at every voxel center of `target`.
    pub fn resample_onto(&self, target: &Grid, interp: Interpolation) -> Volume {
        let data = onto_f64(self.grid(), self.data(), target, interp);
        Volume::new(target.clone(), data).expect("target length")
    }
}

impl ProbabilityMap {
    pub fn resample(&self, target_spacing: &Vec3, interp: Interpolation) -> Result<ProbabilityMap> {
        let (grid, data) = resample_f64(self.grid(), self.data(), target_spacing, interp)?;
        ProbabilityMap::new(grid, data)
    }

    pub fn resample_onto(&self, target: &Grid, interp: Interpolation) -> ProbabilityMap {
        let data = onto_f64(self.grid(), self.data(), target, interp)
            .into_iter()
            .map(|v| v.clamp(0.0, 1.0))
            .collect();
        ProbabilityMap::new(target.clone(), data).expect("values clamped")
    }
}

impl Mask {
    /// Nearest-neighbour resampling; masks stay binary.
    pub fn resample(&self, target_spacing: &Vec3) -> Result<Mask> {
        let (out, start, ratio) = respaced_grid(self.grid(), target_spacing)?;
        let src = self.grid();
        let data = (0..out.len())
            .into_par_iter()
            .map(|idx| {
                let c = source_coords(&start, &ratio, out.voxel_index(idx));
                nearest_index(src, &c).is_some_and(|i| self.data()[i])
            })
            .collect();
        Mask::new(out, data)
    }

    pub fn resample_onto(&self, target: &Grid) -> Mask {
        if self.grid().matches(target) {
            return Mask::new(target.clone(), self.data().to_vec()).expect("same length");
        }
        let src = self.grid();
        let data = (0..target.len())
            .into_par_iter()
            .map(|idx| {
                let v = target.voxel_index(idx);
                let c = src.world_to_voxel(&target.voxel_center(v[0], v[1], v[2]));
                nearest_index(src, &c).is_some_and(|i| self.data()[i])
            })
            .collect();
        Mask::new(target.clone(), data).expect("target length")
    }
}
