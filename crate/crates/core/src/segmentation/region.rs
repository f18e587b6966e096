use serde::{Deserialize, Serialize};

use super::components::{flood, postprocess, Connectivity};
use crate::error::{Error, Result};
use crate::geometry::{Mask, Vec3, Volume};

/// A user-placed seed in world millimetres.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedPoint {
    pub position: Vec3,
}

impl SeedPoint {
    pub fn new(position: Vec3) -> Self {
        Self { position }
    }
}

/// Seeded region growing: floods from the seed voxels through neighbours
/// whose intensity lies within `tolerance` of the mean seed intensity, then
/// keeps the largest component.
pub fn region_grow(v: &Volume, seeds: &[SeedPoint], tolerance: f64, conn: Connectivity) -> Result<Mask> {
    if seeds.is_empty() {
        return Err(Error::InvalidParameter("region growing needs at least one seed".into()));
    }
    if !(tolerance >= 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance {tolerance} must be >= 0")));
    }
    let grid = v.grid();
    let seed_idx = seed_indices(v, seeds)?;
    let mean = seed_idx.iter().map(|&i| v.data()[i]).sum::<f64>() / seed_idx.len() as f64;
    let data = v.data();
    let grown = flood(grid, &seed_idx, conn, |i| (data[i] - mean).abs() <= tolerance);
    Ok(postprocess(&Mask::new(grid.clone(), grown)?))
}

pub(crate) fn seed_indices(v: &Volume, seeds: &[SeedPoint]) -> Result<Vec<usize>> {
    let grid = v.grid();
    seeds
        .iter()
        .map(|s| {
            grid.nearest_voxel(&s.position)
                .map(|[i, j, k]| grid.linear_index(i, j, k))
                .ok_or(Error::SeedOutside {
                    position: s.position.into(),
                })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Grid;

    fn two_valued() -> (Volume, Mask) {
        let g = Grid::axis_aligned([20, 20, 20], Vec3::repeat(1.0), Vec3::zeros()).unwrap();
        let c = Vec3::new(9.5, 9.5, 9.5);
        let gt = Mask::from_fn(g.clone(), |_, p| (p - c).norm() <= 5.0);
        let data = gt.data().iter().map(|&b| if b { 150.0 } else { 100.0 }).collect();
        (Volume::new(g, data).unwrap(), gt)
    }

    #[test]
    fn uniform_volume_fills_completely() {
        let g = Grid::axis_aligned([5, 4, 3], Vec3::repeat(1.0), Vec3::zeros()).unwrap();
        let v = Volume::filled(g, 3.0);
        let m = region_grow(&v, &[SeedPoint::new(Vec3::new(2.0, 1.0, 1.0))], 0.0, Connectivity::Six).unwrap();
        assert_eq!(m.count(), 60);
    }

    #[test]
    fn recovers_lesion_exactly() {
        let (v, gt) = two_valued();
        let seed = [SeedPoint::new(Vec3::new(9.5, 9.5, 9.5))];
        let m = region_grow(&v, &seed, 49.0, Connectivity::TwentySix).unwrap();
        assert_eq!(m, gt);
    }

    #[test]
    fn background_seed_gives_background() {
        let (v, gt) = two_valued();
        let m = region_grow(&v, &[SeedPoint::new(Vec3::new(1.0, 1.0, 1.0))], 10.0, Connectivity::TwentySix).unwrap();
        assert_eq!(m.count(), gt.grid().len() - gt.count());
        assert!(m.data().iter().zip(gt.data()).all(|(a, b)| !(*a && *b)));
    }

    #[test]
    fn seed_outside_is_error() {
        let (v, _) = two_valued();
        let r = region_grow(&v, &[SeedPoint::new(Vec3::new(-3.0, 1.0, 1.0))], 1.0, Connectivity::Six);
        assert!(matches!(r, Err(Error::SeedOutside { .. })));
        assert!(region_grow(&v, &[], 1.0, Connectivity::Six).is_err());
    }
}
