//! Pixel-nearest-neighbour compounding of a tracked sweep into a voxel grid.
//!
//! Every frame pixel is binned into the voxel nearest to its world position.
//! Voxels hit several times take the arithmetic mean of their samples. The
//! mean is reduced in a fixed voxel-major order (samples sorted by voxel, then
//! by value), so the result does not depend on frame order or thread count.
//! Two bounded hole-filling passes then give each empty voxel with at least
//! [`HOLE_FILL_MIN_NEIGHBORS`] filled 26-neighbours the mean of those
//! neighbours.

use rayon::prelude::*;

use super::sweep::Sweep;
use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, Grid, Mask, Vec3, Volume};

pub const DEFAULT_RECONSTRUCTION_SPACING_MM: f64 = 0.5;
pub const HOLE_FILL_MIN_NEIGHBORS: usize = 7;
pub const HOLE_FILL_PASSES: usize = 2;

/// Output of [`reconstruct`].
#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub volume: Volume,
    /// Voxels filled by binning or by hole filling.
    pub filled: Mask,
    /// Voxels hit directly by at least one pixel.
    pub hit_voxels: usize,
}

fn check_spacing(spacing: &Vec3) -> Result<()> {
    if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "voxel spacing {:?} must be positive",
            spacing.as_slice()
        )));
    }
    Ok(())
}

/// Axis-aligned grid covering every frame pixel center, padded by one voxel
/// on each side.
pub fn output_grid(sweep: &Sweep, spacing: &Vec3) -> Result<Grid> {
    check_spacing(spacing)?;
    // Frames are planar, so the pixel cloud's bounding box is spanned by the
    // frame corners.
    let corners: Vec<Vec3> = sweep
        .frames()
        .iter()
        .flat_map(|f| f.corner_positions())
        .collect();
    let bounds = BoundingBox::enclosing(corners.iter())
        .ok_or_else(|| Error::InvalidSweep("sweep has no frames".into()))?;
    let mut dims = [0usize; 3];
    for a in 0..3 {
        let span = bounds.size()[a] / spacing[a];
        // tolerate rounding noise so exact multiples don't gain a voxel
        let cells = (span - 1e-9).ceil().max(0.0) as usize;
        dims[a] = cells + 3;
    }
    Grid::axis_aligned(dims, *spacing, bounds.min() - spacing)
}

/// Reconstructs onto the sweep's [`output_grid`].
pub fn reconstruct(sweep: &Sweep, spacing: &Vec3) -> Result<Reconstruction> {
    let grid = output_grid(sweep, spacing)?;
    reconstruct_on_grid(sweep, grid)
}

/// Reconstructs onto a caller-provided grid. Pixels falling outside the grid
/// are ignored.
pub fn reconstruct_on_grid(sweep: &Sweep, grid: Grid) -> Result<Reconstruction> {
    if sweep.is_empty() {
        return Err(Error::InvalidSweep("sweep has no frames".into()));
    }
    if grid.len() > u32::MAX as usize {
        return Err(Error::InvalidGrid("grid too large for reconstruction".into()));
    }

    let mut samples: Vec<(u32, f32)> = sweep
        .frames()
        .par_iter()
        .flat_map_iter(|frame| {
            // voxel coordinates are affine in (u, v)
            let base = grid.world_to_voxel(&frame.pixel_to_world(0.0, 0.0));
            let du = grid.world_to_voxel(&frame.pixel_to_world(1.0, 0.0)) - base;
            let dv = grid.world_to_voxel(&frame.pixel_to_world(0.0, 1.0)) - base;
            let grid = &grid;
            (0..frame.height()).flat_map(move |v| {
                let row = base + dv * v as f64;
                (0..frame.width()).filter_map(move |u| {
                    let c = row + du * u as f64;
                    let dims = grid.dims();
                    let mut idx = [0usize; 3];
                    for a in 0..3 {
                        let r = c[a].round();
                        if !(r >= 0.0 && r < dims[a] as f64) {
                            return None;
                        }
                        idx[a] = r as usize;
                    }
                    let lin = grid.linear_index(idx[0], idx[1], idx[2]) as u32;
                    Some((lin, frame.pixel(u, v)))
                })
            })
        })
        .collect();
    samples.par_sort_unstable_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let n = grid.len();
    let mut values = vec![0.0f64; n];
    let mut filled = vec![false; n];
    let mut hit_voxels = 0;
    for run in samples.chunk_by(|a, b| a.0 == b.0) {
        let sum: f64 = run.iter().fold(0.0, |acc, s| acc + s.1 as f64);
        let idx = run[0].0 as usize;
        values[idx] = sum / run.len() as f64;
        filled[idx] = true;
        hit_voxels += 1;
    }
    drop(samples);

    for _ in 0..HOLE_FILL_PASSES {
        let updates: Vec<(usize, f64)> = (0..n)
            .into_par_iter()
            .filter(|&idx| !filled[idx])
            .filter_map(|idx| fill_value(&grid, &values, &filled, idx).map(|v| (idx, v)))
            .collect();
        if updates.is_empty() {
            break;
        }
        for (idx, v) in updates {
            values[idx] = v;
            filled[idx] = true;
        }
    }

    Ok(Reconstruction {
        volume: Volume::new(grid.clone(), values)?,
        filled: Mask::new(grid, filled)?,
        hit_voxels,
    })
}

fn fill_value(grid: &Grid, values: &[f64], filled: &[bool], idx: usize) -> Option<f64> {
    let [i, j, k] = grid.voxel_index(idx);
    let dims = grid.dims();
    let mut count = 0usize;
    let mut sum = 0.0;
    for dk in -1i64..=1 {
        for dj in -1i64..=1 {
            for di in -1i64..=1 {
                if di == 0 && dj == 0 && dk == 0 {
                    continue;
                }
                let (x, y, z) = (i as i64 + di, j as i64 + dj, k as i64 + dk);
                if x < 0 || y < 0 || z < 0 {
                    continue;
                }
                let (x, y, z) = (x as usize, y as usize, z as usize);
                if x >= dims[0] || y >= dims[1] || z >= dims[2] {
                    continue;
                }
                let n = grid.linear_index(x, y, z);
                if filled[n] {
                    count += 1;
                    sum += values[n];
                }
            }
        }
    }
    (count >= HOLE_FILL_MIN_NEIGHBORS).then(|| sum / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::RigidTransform;
    use crate::reconstruction::TrackedFrame;

    fn flat_frame(w: usize, h: usize, value: f32, pose: RigidTransform, t: f64) -> TrackedFrame {
        TrackedFrame::new(w, h, vec![value; w * h], [1.0, 1.0], pose, t).unwrap()
    }

    #[test]
    fn single_frame_grid_matches_hand_corners() {
        let s = Sweep::new(vec![flat_frame(11, 11, 1.0, RigidTransform::identity(), 0.0)], "p").unwrap();
        let g = output_grid(&s, &Vec3::repeat(1.0)).unwrap();
        assert_eq!(g.dims(), [13, 13, 3]);
        assert_eq!(*g.origin(), Vec3::new(-1.0, -1.0, -1.0));
        let far = g.voxel_center(12, 12, 2);
        assert_eq!(far, Vec3::new(11.0, 11.0, 1.0));
    }

    #[test]
    fn grid_translates_with_poses() {
        let t = Vec3::new(3.25, -7.5, 12.0);
        let pose = RigidTransform::from_axis_angle(Vec3::new(1.0, 1.0, 0.0), 0.3, Vec3::zeros()).unwrap();
        let moved = RigidTransform::from_translation(t).compose(&pose);
        let a = Sweep::new(vec![flat_frame(8, 5, 1.0, pose, 0.0)], "p").unwrap();
        let b = Sweep::new(vec![flat_frame(8, 5, 1.0, moved, 0.0)], "p").unwrap();
        let ga = output_grid(&a, &Vec3::repeat(0.5)).unwrap();
        let gb = output_grid(&b, &Vec3::repeat(0.5)).unwrap();
        assert_eq!(ga.dims(), gb.dims());
        assert!((gb.origin() - ga.origin() - t).norm() < 1e-9);
    }

    #[test]
    fn duplicate_frames_keep_grid() {
        let f = flat_frame(6, 4, 1.0, RigidTransform::identity(), 0.0);
        let one = Sweep::new(vec![f.clone()], "p").unwrap();
        let two = Sweep::new(vec![f.clone(), f], "p").unwrap();
        assert_eq!(
            output_grid(&one, &Vec3::repeat(1.0)).unwrap(),
            output_grid(&two, &Vec3::repeat(1.0)).unwrap()
        );
    }

    #[test]
    fn constant_frames_give_constant_volume() {
        let frames = (0..6)
            .map(|n| {
                let pose = RigidTransform::from_axis_angle(
                    Vec3::new(1.0, 0.0, 0.0),
                    0.05 * n as f64,
                    Vec3::new(0.0, 0.0, 0.7 * n as f64),
                )
                .unwrap();
                flat_frame(20, 20, 42.5, pose, n as f64)
            })
            .collect();
        let s = Sweep::new(frames, "p").unwrap();
        let r = reconstruct(&s, &Vec3::repeat(1.0)).unwrap();
        assert!(r.filled.count() > 0);
        for (v, f) in r.volume.data().iter().zip(r.filled.data()) {
            if *f {
                assert!((v - 42.5).abs() < 1e-12);
            } else {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn pixel_bins_into_nearest_voxel() {
        // pixel (0,0) of a frame translated to (3.4, 2.6, 0)
        let pose = RigidTransform::from_translation(Vec3::new(3.4, 2.6, 0.0));
        let s = Sweep::new(vec![flat_frame(1, 1, 9.0, pose, 0.0)], "p").unwrap();
        let grid = Grid::axis_aligned([6, 6, 2], Vec3::repeat(1.0), Vec3::zeros()).unwrap();
        let r = reconstruct_on_grid(&s, grid).unwrap();
        assert_eq!(r.hit_voxels, 1);
        assert_eq!(r.volume.get(3, 3, 0), 9.0);
        assert!(r.filled.get(3, 3, 0));
        assert_eq!(r.filled.count(), 1);
    }

    #[test]
    fn hole_filling_needs_seven_neighbours() {
        // two parallel planes at z=0 and z=2 leave z=1 empty; each hole there
        // has 18 filled neighbours in the interior
        let frames = vec![
            flat_frame(5, 5, 1.0, RigidTransform::identity(), 0.0),
            flat_frame(5, 5, 3.0, RigidTransform::from_translation(Vec3::new(0.0, 0.0, 2.0)), 1.0),
        ];
        let s = Sweep::new(frames, "p").unwrap();
        let grid = Grid::axis_aligned([5, 5, 3], Vec3::repeat(1.0), Vec3::zeros()).unwrap();
        let r = reconstruct_on_grid(&s, grid).unwrap();
        assert!(r.filled.get(2, 2, 1));
        assert!((r.volume.get(2, 2, 1) - 2.0).abs() < 1e-12);
        // the corner hole (0,0,1) sees 4 filled neighbours in each plane
        assert!(r.filled.get(0, 0, 1));

        // a single plane: the corner above it never reaches 7 neighbours and
        // nothing fills three layers away
        let s = Sweep::new(vec![flat_frame(5, 5, 1.0, RigidTransform::identity(), 0.0)], "p").unwrap();
        let grid = Grid::axis_aligned([5, 5, 5], Vec3::repeat(1.0), Vec3::zeros()).unwrap();
        let r = reconstruct_on_grid(&s, grid).unwrap();
        assert!(r.filled.get(2, 2, 1));
        assert!(!r.filled.get(0, 0, 1)); // only 4 filled neighbours at the corner
        assert!(!r.filled.get(2, 2, 3));
    }
}
