//! Voxel grids, rigid transforms and world-space boxes.
//!
//! Conventions used throughout the crate:
//!
//! * voxel data is stored x-fastest: `index = i + nx * (j + ny * k)`;
//! * world coordinates are right-handed millimetres;
//! * `origin` is the world position of the *center* of voxel `(0, 0, 0)`;
//! * `orientation` maps voxel axes to world directions (columns are the
//!   world direction of the i, j and k axes).

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

const ORTHONORMAL_TOL: f64 = 1e-6;

fn check_rotation(r: &Mat3) -> std::result::Result<(), String> {
    if r.iter().any(|v| !v.is_finite()) {
        return Err("non-finite rotation entry".into());
    }
    let err = (r.transpose() * r - Mat3::identity()).abs().max();
    if err > ORTHONORMAL_TOL {
        return Err(format!("matrix is not orthonormal (error {err:.3e})"));
    }
    let det = r.determinant();
    if (det - 1.0).abs() > ORTHONORMAL_TOL {
        return Err(format!("determinant {det} is not +1"));
    }
    Ok(())
}

// =============================================================================
// Rigid transform
// =============================================================================

/// Proper rigid motion `p -> rotation * p + translation` (millimetres).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform {
    rotation: Mat3,
    translation: Vec3,
}

impl RigidTransform {
    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self> {
        check_rotation(&rotation).map_err(Error::InvalidTransform)?;
        if translation.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidTransform("non-finite translation".into()));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self {
            rotation: Mat3::identity(),
            translation,
        }
    }

    /// Rotation of `angle` radians about `axis`, followed by `translation`.
    pub fn from_axis_angle(axis: Vec3, angle: f64, translation: Vec3) -> Result<Self> {
        if axis.norm() == 0.0 {
            return Err(Error::InvalidTransform("zero rotation axis".into()));
        }
        let rot = Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle);
        Self::new(*rot.matrix(), translation)
    }

    /// Builds a transform from 12 numbers: the row-major 3x3 rotation followed
    /// by the translation.
    pub fn from_row_major(values: &[f64; 12]) -> Result<Self> {
        let rotation = Mat3::new(
            values[0], values[1], values[2], values[3], values[4], values[5], values[6],
            values[7], values[8],
        );
        Self::new(rotation, Vec3::new(values[9], values[10], values[11]))
    }

    pub fn to_row_major(&self) -> [f64; 12] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            t.x,
            t.y,
            t.z,
        ]
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }
}

// =============================================================================
// Bounding box
// =============================================================================

/// Axis-aligned box in world millimetres.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBox", into = "RawBox")]
pub struct BoundingBox {
    min: Vec3,
    max: Vec3,
}

#[derive(Serialize, Deserialize)]
struct RawBox {
    min: [f64; 3],
    max: [f64; 3],
}

impl TryFrom<RawBox> for BoundingBox {
    type Error = Error;
    fn try_from(raw: RawBox) -> Result<Self> {
        BoundingBox::new(Vec3::from(raw.min), Vec3::from(raw.max))
    }
}

impl From<BoundingBox> for RawBox {
    fn from(b: BoundingBox) -> Self {
        RawBox {
            min: b.min.into(),
            max: b.max.into(),
        }
    }
}

impl BoundingBox {
    pub fn new(min: Vec3, max: Vec3) -> Result<Self> {
        let finite = min.iter().chain(max.iter()).all(|v| v.is_finite());
        if !finite || (0..3).any(|a| min[a] > max[a]) {
            return Err(Error::InvalidBox {
                min: min.into(),
                max: max.into(),
            });
        }
        Ok(Self { min, max })
    }

    pub fn from_arrays(min: [f64; 3], max: [f64; 3]) -> Result<Self> {
        Self::new(Vec3::from(min), Vec3::from(max))
    }

    /// Smallest box containing all `points`. Returns `None` for no points.
    pub fn enclosing<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = *it.next()?;
        let (min, max) = it.fold((first, first), |(lo, hi), p| (lo.inf(p), hi.sup(p)));
        Some(Self { min, max })
    }

    pub fn min(&self) -> &Vec3 {
        &self.min
    }

    pub fn max(&self) -> &Vec3 {
        &self.max
    }

    pub fn size(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn volume_mm3(&self) -> f64 {
        self.size().product()
    }

    /// Grows every face outward by `margin` millimetres.
    pub fn expanded(&self, margin: f64) -> Self {
        let m = Vec3::repeat(margin);
        Self {
            min: self.min - m,
            max: self.max + m,
        }
    }

    /// Intersection as a closed box; `None` when the boxes are disjoint.
    pub fn intersection(&self, other: &BoundingBox) -> Option<Self> {
        let min = self.min.sup(&other.min);
        let max = self.max.inf(&other.max);
        (0..3).all(|a| min[a] <= max[a]).then_some(Self { min, max })
    }

    /// Closed containment test.
    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    /// Half-open containment test `min <= p < max`, used for voxel selection.
    pub fn contains_half_open(&self, p: &Vec3) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] < self.max[a])
    }

    pub fn corners(&self) -> [Vec3; 8] {
        let (lo, hi) = (&self.min, &self.max);
        std::array::from_fn(|n| {
            Vec3::new(
                if n & 1 == 0 { lo.x } else { hi.x },
                if n & 2 == 0 { lo.y } else { hi.y },
                if n & 4 == 0 { lo.z } else { hi.z },
            )
        })
    }
}

// =============================================================================
// Grid
// =============================================================================

/// Geometry of a regular voxel grid. Shared by volumes, masks and
/// probability maps.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    dims: [usize; 3],
    spacing: Vec3,
    origin: Vec3,
    orientation: Mat3,
}

impl Grid {
    pub fn new(dims: [usize; 3], spacing: Vec3, origin: Vec3, orientation: Mat3) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidGrid(format!("dims {dims:?} must be positive")));
        }
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "spacing {:?} must be positive",
                spacing.as_slice()
            )));
        }
        if origin.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid("non-finite origin".into()));
        }
        check_rotation(&orientation).map_err(|e| Error::InvalidGrid(format!("orientation: {e}")))?;
        dims.iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::InvalidGrid(format!("dims {dims:?} overflow")))?;
        Ok(Self {
            dims,
            spacing,
            origin,
            orientation,
        })
    }

    /// Axis-aligned grid with identity orientation.
    pub fn axis_aligned(dims: [usize; 3], spacing: Vec3, origin: Vec3) -> Result<Self> {
        Self::new(dims, spacing, origin, Mat3::identity())
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> &Vec3 {
        &self.spacing
    }

    pub fn origin(&self) -> &Vec3 {
        &self.origin
    }

    pub fn orientation(&self) -> &Mat3 {
        &self.orientation
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn voxel_volume_mm3(&self) -> f64 {
        self.spacing.product()
    }

    #[inline]
    pub fn linear_index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn voxel_index(&self, idx: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [idx % nx, (idx / nx) % ny, idx / (nx * ny)]
    }

    /// World direction (scaled by spacing) of one step along voxel axis `axis`.
    pub fn axis_step(&self, axis: usize) -> Vec3 {
        self.orientation.column(axis) * self.spacing[axis]
    }

    pub fn voxel_to_world(&self, v: &Vec3) -> Vec3 {
        self.origin + self.orientation * v.component_mul(&self.spacing)
    }

    pub fn world_to_voxel(&self, p: &Vec3) -> Vec3 {
        (self.orientation.transpose() * (p - self.origin)).component_div(&self.spacing)
    }

    pub fn voxel_center(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.voxel_to_world(&Vec3::new(i as f64, j as f64, k as f64))
    }

    /// Nearest voxel to a world point, if it lies inside the grid.
    pub fn nearest_voxel(&self, p: &Vec3) -> Option<[usize; 3]> {
        let c = self.world_to_voxel(p);
        let mut out = [0usize; 3];
        for a in 0..3 {
            let r = c[a].round();
            if !(r >= 0.0 && r < self.dims[a] as f64) {
                return None;
            }
            out[a] = r as usize;
        }
        Some(out)
    }

    /// Whether a continuous voxel coordinate falls inside the grid's voxel
    /// cells (edge to edge).
    pub fn contains_voxel_coord(&self, c: &Vec3) -> bool {
        (0..3).all(|a| c[a] >= -0.5 && c[a] < self.dims[a] as f64 - 0.5)
    }

    pub fn contains_world(&self, p: &Vec3) -> bool {
        self.contains_voxel_coord(&self.world_to_voxel(p))
    }

    /// World-space axis-aligned bounds of the grid, measured from voxel edge
    /// to voxel edge.
    pub fn extent(&self) -> BoundingBox {
        let hi = Vec3::new(
            self.dims[0] as f64 - 0.5,
            self.dims[1] as f64 - 0.5,
            self.dims[2] as f64 - 0.5,
        );
        let corners = BoundingBox {
            min: Vec3::repeat(-0.5),
            max: hi,
        }
        .corners()
        .map(|c| self.voxel_to_world(&c));
        BoundingBox::enclosing(corners.iter()).expect("eight corners")
    }

    /// Physical volume covered by the grid in millilitres.
    pub fn volume_ml(&self) -> f64 {
        self.len() as f64 * self.voxel_volume_mm3() / 1000.0
    }

    /// Same geometry restricted to the index range `lo..=hi`.
    pub fn sub_grid(&self, lo: [usize; 3], hi: [usize; 3]) -> Result<Grid> {
        if (0..3).any(|a| lo[a] > hi[a] || hi[a] >= self.dims[a]) {
            return Err(Error::InvalidGrid(format!(
                "sub-grid {lo:?}..={hi:?} outside dims {:?}",
                self.dims
            )));
        }
        let origin = self.voxel_center(lo[0], lo[1], lo[2]);
        Grid::new(
            [hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, hi[2] - lo[2] + 1],
            self.spacing,
            origin,
            self.orientation,
        )
    }

    /// Geometric equality up to floating-point noise introduced by file
    /// round trips.
    pub fn matches(&self, other: &Grid) -> bool {
        const TOL: f64 = 1e-6;
        self.dims == other.dims
            && (self.spacing - other.spacing).abs().max() <= TOL
            && (self.origin - other.origin).abs().max() <= TOL
            && (self.orientation - other.orientation).abs().max() <= TOL
    }

    pub fn ensure_matches(&self, other: &Grid) -> Result<()> {
        if self.matches(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "dims {:?} spacing {:?} origin {:?} vs dims {:?} spacing {:?} origin {:?}",
                self.dims,
                self.spacing.as_slice(),
                self.origin.as_slice(),
                other.dims,
                other.spacing.as_slice(),
                other.origin.as_slice()
            )))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn world_to_voxel_identity() {
        let g = Grid::axis_aligned([10, 10, 10], Vec3::repeat(1.0), Vec3::zeros()).unwrap();
        let v = g.world_to_voxel(&Vec3::new(3.0, 4.0, 5.0));
        assert_eq!(v, Vec3::new(3.0, 4.0, 5.0));
    }

    #[test]
    fn world_to_voxel_uniform_scale() {
        let g = Grid::axis_aligned([10, 10, 10], Vec3::repeat(0.5), Vec3::zeros()).unwrap();
        let v = g.world_to_voxel(&Vec3::new(1.0, 1.0, 1.0));
        assert_eq!(v, Vec3::new(2.0, 2.0, 2.0));
    }

    #[test]
    fn world_to_voxel_rotated_round_trip() {
        let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), std::f64::consts::FRAC_PI_2);
        let g = Grid::new(
            [4, 4, 4],
            Vec3::new(1.0, 2.0, 3.0),
            Vec3::new(5.0, -1.0, 2.0),
            *rot.matrix(),
        )
        .unwrap();
        let p = g.voxel_to_world(&Vec3::new(1.0, 0.0, 0.0));
        // a 90 degree turn about z sends the i axis to +y
        assert!((p - Vec3::new(5.0, 0.0, 2.0)).norm() < 1e-12);
        let back = g.world_to_voxel(&p);
        assert!((back - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(Grid::axis_aligned([0, 1, 1], Vec3::repeat(1.0), Vec3::zeros()).is_err());
        assert!(Grid::axis_aligned([1, 1, 1], Vec3::new(1.0, 0.0, 1.0), Vec3::zeros()).is_err());
        let reflect = Mat3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0));
        assert!(Grid::new([1, 1, 1], Vec3::repeat(1.0), Vec3::zeros(), reflect).is_err());
        let shear = Mat3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(Grid::new([1, 1, 1], Vec3::repeat(1.0), Vec3::zeros(), shear).is_err());
    }

    #[test]
    fn extent_is_edge_to_edge() {
        let g = Grid::axis_aligned([10, 10, 10], Vec3::repeat(1.0), Vec3::zeros()).unwrap();
        let e = g.extent();
        assert_eq!(*e.min(), Vec3::repeat(-0.5));
        assert_eq!(*e.max(), Vec3::repeat(9.5));
    }

    #[test]
    fn transform_inverse_and_rows() {
        let t = RigidTransform::from_axis_angle(Vec3::new(1.0, 2.0, 3.0), 0.7, Vec3::new(4.0, 5.0, 6.0))
            .unwrap();
        let p = Vec3::new(-1.0, 0.5, 2.0);
        let q = t.inverse().apply(&t.apply(&p));
        assert!((p - q).norm() < 1e-12);
        let again = RigidTransform::from_row_major(&t.to_row_major()).unwrap();
        assert_eq!(again, t);
        assert!(RigidTransform::from_row_major(&[2.0, 0., 0., 0., 1., 0., 0., 0., 1., 0., 0., 0.]).is_err());
    }

    #[test]
    fn box_validation_and_serde() {
        assert!(BoundingBox::from_arrays([1.0, 0.0, 0.0], [0.0, 1.0, 1.0]).is_err());
        let b = BoundingBox::from_arrays([0.0, 1.0, 2.0], [3.0, 4.0, 5.0]).unwrap();
        let s = serde_json::to_string(&b).unwrap();
        assert_eq!(s, r#"{"min":[0.0,1.0,2.0],"max":[3.0,4.0,5.0]}"#);
        let back: BoundingBox = serde_json::from_str(&s).unwrap();
        assert_eq!(back, b);
        assert!(serde_json::from_str::<BoundingBox>(r#"{"min":[5,0,0],"max":[0,0,0]}"#).is_err());
    }
}
