//! Cropping to world-space boxes.
//!
//! A voxel is kept when its center lies in the half-open box
//! `min <= center < max`. For axis-aligned grids the kept voxels form an
//! exact sub-grid. For rotated grids the result is the smallest index
//! sub-grid containing every selected voxel.

use super::grid::{BoundingBox, Grid, Vec3};
use super::volume::{Mask, ProbabilityMap, Volume};
use crate::error::{Error, Result};

/// Inclusive index range `(lo, hi)` of voxels whose centers fall in `b`.
pub fn crop_range(grid: &Grid, b: &BoundingBox) -> Result<([usize; 3], [usize; 3])> {
    let clipped = b
        .intersection(&grid.extent())
        .ok_or(Error::EmptyIntersection)?;
    let dims = grid.dims();

    // Conservative candidate index range from the clipped box corners.
    let mut cand_lo = [usize::MAX; 3];
    let mut cand_hi = [0usize; 3];
    for corner in clipped.corners() {
        let c = grid.world_to_voxel(&corner);
        for a in 0..3 {
            let lo = (c[a].floor() - 1.0).clamp(0.0, (dims[a] - 1) as f64) as usize;
            let hi = (c[a].ceil() + 1.0).clamp(0.0, (dims[a] - 1) as f64) as usize;
            cand_lo[a] = cand_lo[a].min(lo);
            cand_hi[a] = cand_hi[a].max(hi);
        }
    }

    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    let mut any = false;
    for k in cand_lo[2]..=cand_hi[2] {
        for j in cand_lo[1]..=cand_hi[1] {
            for i in cand_lo[0]..=cand_hi[0] {
                if b.contains_half_open(&grid.voxel_center(i, j, k)) {
                    any = true;
                    for (a, v) in [i, j, k].into_iter().enumerate() {
                        lo[a] = lo[a].min(v);
                        hi[a] = hi[a].max(v);
                    }
                }
            }
        }
    }
    if !any {
        return Err(Error::EmptyIntersection);
    }
    Ok((lo, hi))
}

pub(crate) fn copy_range<T: Copy>(grid: &Grid, data: &[T], lo: [usize; 3], hi: [usize; 3]) -> Vec<T> {
    let mut out = Vec::with_capacity((hi[0] - lo[0] + 1) * (hi[1] - lo[1] + 1) * (hi[2] - lo[2] + 1));
    for k in lo[2]..=hi[2] {
        for j in lo[1]..=hi[1] {
            let start = grid.linear_index(lo[0], j, k);
            let end = grid.linear_index(hi[0], j, k);
            out.extend_from_slice(&data[start..=end]);
        }
    }
    out
}

fn crop_parts<T: Copy>(grid: &Grid, data: &[T], b: &BoundingBox) -> Result<(Grid, Vec<T>)> {
    let (lo, hi) = crop_range(grid, b)?;
    Ok((grid.sub_grid(lo, hi)?, copy_range(grid, data, lo, hi)))
}

impl Volume {
    pub fn crop(&self, b: &BoundingBox) -> Result<Volume> {
        let (grid, data) = crop_parts(self.grid(), self.data(), b)?;
        Volume::new(grid, data)
    }
}

impl Mask {
    pub fn crop(&self, b: &BoundingBox) -> Result<Mask> {
        let (grid, data) = crop_parts(self.grid(), self.data(), b)?;
        Mask::new(grid, data)
    }
}

impl ProbabilityMap {
    pub fn crop(&self, b: &BoundingBox) -> Result<ProbabilityMap> {
        let (grid, data) = crop_parts(self.grid(), self.data(), b)?;
        ProbabilityMap::new(grid, data)
    }
}

/// Offset (in voxels of `outer`) of the sub-grid `inner`, when `inner` is an
/// index-aligned sub-grid of `outer` (same spacing and orientation).
pub fn sub_grid_offset(outer: &Grid, inner: &Grid) -> Option<[usize; 3]> {
    const TOL: f64 = 1e-6;
    if (outer.spacing() - inner.spacing()).abs().max() > TOL
        || (outer.orientation() - inner.orientation()).abs().max() > TOL
    {
        return None;
    }
    let c: Vec3 = outer.world_to_voxel(inner.origin());
    let mut off = [0usize; 3];
    for a in 0..3 {
        let r = c[a].round();
        if (c[a] - r).abs() > 1e-4 || r < 0.0 || r as usize + inner.dims()[a] > outer.dims()[a] {
            return None;
        }
        off[a] = r as usize;
    }
    Some(off)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize) -> Volume {
        let g = Grid::axis_aligned([n, n, n], Vec3::repeat(1.0), Vec3::zeros()).unwrap();
        Volume::from_fn(g, |v, _| (v[0] + 10 * v[1] + 100 * v[2]) as f64)
    }

    #[test]
    fn crop_full_extent_is_identity() {
        let v = ramp(10);
        let c = v.crop(&v.grid().extent()).unwrap();
        assert_eq!(c, v);
    }

    #[test]
    fn crop_hand_enumerated_example() {
        let v = ramp(10);
        let b = BoundingBox::from_arrays([2.0; 3], [5.0; 3]).unwrap();
        let c = v.crop(&b).unwrap();
        assert_eq!(c.grid().dims(), [3, 3, 3]);
        assert_eq!(*c.grid().origin(), Vec3::repeat(2.0));
        assert_eq!(c.get(0, 0, 0), 222.0);
        assert_eq!(c.get(2, 1, 0), 4.0 + 30.0 + 200.0);
    }

    #[test]
    fn crop_clamps_to_extent() {
        let v = ramp(10);
        let b = BoundingBox::from_arrays([7.0, -50.0, 0.0], [40.0, 2.0, 1.0]).unwrap();
        let c = v.crop(&b).unwrap();
        assert_eq!(c.grid().dims(), [3, 2, 1]);
        assert_eq!(*c.grid().origin(), Vec3::new(7.0, 0.0, 0.0));
    }

    #[test]
    fn crop_outside_is_error() {
        let v = ramp(4);
        let b = BoundingBox::from_arrays([20.0; 3], [30.0; 3]).unwrap();
        assert!(matches!(v.crop(&b), Err(Error::EmptyIntersection)));
        // intersects the extent but contains no voxel center
        let b = BoundingBox::from_arrays([0.1, 0.1, 0.1], [0.9, 0.9, 0.9]).unwrap();
        assert!(matches!(v.crop(&b), Err(Error::EmptyIntersection)));
    }

    #[test]
    fn offset_of_cropped_grid() {
        let v = ramp(10);
        let b = BoundingBox::from_arrays([2.0, 3.0, 4.0], [5.0, 6.0, 7.0]).unwrap();
        let c = v.crop(&b).unwrap();
        assert_eq!(sub_grid_offset(v.grid(), c.grid()), Some([2, 3, 4]));
    }
}
