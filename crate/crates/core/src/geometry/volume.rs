//! Image carriers: intensity volumes, binary masks and probability maps.

use rayon::prelude::*;

use super::grid::{Grid, Vec3};
use crate::error::{Error, Result};

fn check_len(grid: &Grid, len: usize) -> Result<()> {
    if grid.len() != len {
        return Err(Error::DataLength {
            expected: grid.len(),
            actual: len,
        });
    }
    Ok(())
}

fn from_fn<T, F>(grid: &Grid, f: F) -> Vec<T>
where
    T: Send,
    F: Fn([usize; 3], Vec3) -> T + Sync,
{
    (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let v = grid.voxel_index(idx);
            f(v, grid.voxel_center(v[0], v[1], v[2]))
        })
        .collect()
}

/// Trilinear interpolation at continuous voxel coordinate `c`.
///
/// Points outside the edge-to-edge extent return 0; points within half a voxel
/// of the border are clamped onto the outermost voxel centers.
pub(crate) fn trilinear(grid: &Grid, data: &[f64], c: &Vec3) -> f64 {
    if !grid.contains_voxel_coord(c) {
        return 0.0;
    }
    let dims = grid.dims();
    let mut lo = [0usize; 3];
    let mut hi = [0usize; 3];
    let mut frac = [0.0f64; 3];
    for a in 0..3 {
        let x = c[a].clamp(0.0, (dims[a] - 1) as f64);
        let f = x.floor();
        lo[a] = f as usize;
        hi[a] = (lo[a] + 1).min(dims[a] - 1);
        frac[a] = x - f;
    }
    let at = |i: usize, j: usize, k: usize| data[grid.linear_index(i, j, k)];
    let lerp = |a: f64, b: f64, t: f64| if t == 0.0 { a } else { a + (b - a) * t };
    let c00 = lerp(at(lo[0], lo[1], lo[2]), at(hi[0], lo[1], lo[2]), frac[0]);
    let c10 = lerp(at(lo[0], hi[1], lo[2]), at(hi[0], hi[1], lo[2]), frac[0]);
    let c01 = lerp(at(lo[0], lo[1], hi[2]), at(hi[0], lo[1], hi[2]), frac[0]);
    let c11 = lerp(at(lo[0], hi[1], hi[2]), at(hi[0], hi[1], hi[2]), frac[0]);
    let c0 = lerp(c00, c10, frac[1]);
    let c1 = lerp(c01, c11, frac[1]);
    lerp(c0, c1, frac[2])
}

/// Nearest-voxel lookup at continuous voxel coordinate `c`, or `None` outside
/// the extent.
pub(crate) fn nearest_index(grid: &Grid, c: &Vec3) -> Option<usize> {
    if !grid.contains_voxel_coord(c) {
        return None;
    }
    let dims = grid.dims();
    let r = |a: usize| (c[a].round().max(0.0) as usize).min(dims[a] - 1);
    Some(grid.linear_index(r(0), r(1), r(2)))
}

// =============================================================================
// Volume
// =============================================================================

/// Scalar intensity volume.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    grid: Grid,
    data: Vec<f64>,
}

impl Volume {
    pub fn new(grid: Grid, data: Vec<f64>) -> Result<Self> {
        check_len(&grid, data.len())?;
        Ok(Self { grid, data })
    }

    pub fn filled(grid: Grid, value: f64) -> Self {
        let data = vec![value; grid.len()];
        Self { grid, data }
    }

    /// Evaluates `f(voxel index, world center)` at every voxel.
    pub fn from_fn<F>(grid: Grid, f: F) -> Self
    where
        F: Fn([usize; 3], Vec3) -> f64 + Sync,
    {
        let data = from_fn(&grid, f);
        Self { grid, data }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.grid.linear_index(i, j, k)]
    }

    pub fn sample_trilinear(&self, world: &Vec3) -> f64 {
        trilinear(&self.grid, &self.data, &self.grid.world_to_voxel(world))
    }

    pub fn sample_nearest(&self, world: &Vec3) -> f64 {
        nearest_index(&self.grid, &self.grid.world_to_voxel(world))
            .map_or(0.0, |idx| self.data[idx])
    }

    /// `(min, max)` over all voxels.
    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

// =============================================================================
// Mask
// =============================================================================

/// Binary segmentation on a voxel grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Mask {
    grid: Grid,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(grid: Grid, data: Vec<bool>) -> Result<Self> {
        check_len(&grid, data.len())?;
        Ok(Self { grid, data })
    }

    pub fn empty(grid: Grid) -> Self {
        let data = vec![false; grid.len()];
        Self { grid, data }
    }

    pub fn from_fn<F>(grid: Grid, f: F) -> Self
    where
        F: Fn([usize; 3], Vec3) -> bool + Sync,
    {
        let data = from_fn(&grid, f);
        Self { grid, data }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [bool] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<bool> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> bool {
        self.data[self.grid.linear_index(i, j, k)]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    pub fn volume_mm3(&self) -> f64 {
        self.count() as f64 * self.grid.voxel_volume_mm3()
    }

    pub fn volume_ml(&self) -> f64 {
        self.volume_mm3() / 1000.0
    }

    pub fn sample_nearest(&self, world: &Vec3) -> bool {
        nearest_index(&self.grid, &self.grid.world_to_voxel(world)).is_some_and(|idx| self.data[idx])
    }

    /// Diameter of the sphere with the same physical volume.
    pub fn equivalent_diameter_mm(&self) -> f64 {
        2.0 * (3.0 * self.volume_mm3() / (4.0 * std::f64::consts::PI)).cbrt()
    }
}

// =============================================================================
// Probability map
// =============================================================================

/// Per-voxel foreground probability in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityMap {
    grid: Grid,
    data: Vec<f64>,
}

impl ProbabilityMap {
    pub fn new(grid: Grid, data: Vec<f64>) -> Result<Self> {
        check_len(&grid, data.len())?;
        if let Some((index, &value)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::InvalidProbability { index, value });
        }
        Ok(Self { grid, data })
    }

    pub fn from_mask(mask: &Mask) -> Self {
        Self {
            grid: mask.grid.clone(),
            data: mask.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[self.grid.linear_index(i, j, k)]
    }

    /// Reinterprets the probabilities as an intensity volume.
    pub fn to_volume(&self) -> Volume {
        Volume {
            grid: self.grid.clone(),
            data: self.data.clone(),
        }
    }
}
