use std::io::Cursor;
use std::time::Instant;

use image::{GrayAlphaImage, GrayImage, ImageFormat, LumaA};
use segbench_core::geometry::{BoundingBox, Grid, Mask, ProbabilityMap, Vec3, Volume};
use segbench_core::segmentation::embed_mask;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditKind {
    Paint,
    Erase,
}

/// A spherical brush stroke in world mm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EditOp {
    pub kind: EditKind,
    pub sphere_center: [f64; 3],
    pub sphere_radius: f64,
}

impl EditOp {
    pub fn is_valid(&self) -> bool {
        self.sphere_radius > 0.0 && self.sphere_radius.is_finite() && self.sphere_center.iter().all(|c| c.is_finite())
    }
}

/// Sets (paint) or clears (erase) every voxel whose center lies within the
/// sphere.
pub fn apply_edit(mask: &mut Mask, op: &EditOp) {
    let grid = mask.grid().clone();
    let c = Vec3::from(op.sphere_center);
    let r2 = op.sphere_radius * op.sphere_radius;
    let value = op.kind == EditKind::Paint;
    // Index range of the sphere's bounding box, then exact distance test.
    let corners = BoundingBox::new(c.add_scalar(-op.sphere_radius), c.add_scalar(op.sphere_radius))
        .expect("valid sphere")
        .corners();
    let mut lo = [i64::MAX; 3];
    let mut hi = [i64::MIN; 3];
    for p in &corners {
        let v = grid.world_to_voxel(p);
        for a in 0..3 {
            lo[a] = lo[a].min(v[a].floor() as i64);
            hi[a] = hi[a].max(v[a].ceil() as i64);
        }
    }
    let dims = grid.dims();
    let clamp = |v: i64, a: usize| v.clamp(0, dims[a] as i64 - 1) as usize;
    if (0..3).any(|a| hi[a] < 0 || lo[a] >= dims[a] as i64) {
        return;
    }
    let data = mask.data_mut();
    for k in clamp(lo[2], 2)..=clamp(hi[2], 2) {
        for j in clamp(lo[1], 1)..=clamp(hi[1], 1) {
            for i in clamp(lo[0], 0)..=clamp(hi[0], 0) {
                if (grid.voxel_center(i, j, k) - c).norm_squared() <= r2 {
                    data[grid.linear_index(i, j, k)] = value;
                }
            }
        }
    }
}

/// Replays `log` on a copy of `base`.
pub fn replay(base: &Mask, log: &[EditOp]) -> Mask {
    let mut m = base.clone();
    for op in log {
        apply_edit(&mut m, op);
    }
    m
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub reconstruction_s: Option<f64>,
    pub segmentation_s: Option<f64>,
    /// Time from the end of segmentation to the last correction.
    pub correction_s: f64,
    /// Segmentation plus corrections.
    pub total_s: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskSummary {
    pub voxel_count: usize,
    pub volume_ml: f64,
    pub elapsed_s: f64,
    pub edit_count: usize,
}

/// Mutable part of a session.
#[derive(Debug, Default)]
pub struct SessionState {
    /// Box as placed by the user.
    pub requested_roi: Option<BoundingBox>,
    /// Box with the margin applied and clipped; the crop used for
    /// segmentation.
    pub roi: Option<BoundingBox>,
    pub predictor: Option<String>,
    pub tau: Option<f64>,
    pub probability: Option<ProbabilityMap>,
    /// Mask as produced by the predictor, before any edit.
    pub predicted_mask: Option<Mask>,
    /// Current mask on the ROI-cropped grid.
    pub mask: Option<Mask>,
    pub edit_log: Vec<EditOp>,
    pub timings: Timings,
    pub segmented_at: Option<Instant>,
}

impl SessionState {
    pub fn clear_segmentation(&mut self) {
        self.predictor = None;
        self.tau = None;
        self.probability = None;
        self.predicted_mask = None;
        self.mask = None;
        self.edit_log.clear();
        self.timings.segmentation_s = None;
        self.timings.correction_s = 0.0;
        self.timings.total_s = None;
        self.segmented_at = None;
    }

    pub fn summary(&self) -> Option<MaskSummary> {
        let m = self.mask.as_ref()?;
        Some(MaskSummary {
            voxel_count: m.count(),
            volume_ml: m.volume_ml(),
            elapsed_s: self.timings.total_s.unwrap_or_default(),
            edit_count: self.edit_log.len(),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    /// Volume axes shown as image columns and rows.
    pub fn image_axes(self) -> (usize, usize) {
        match self {
            Axis::X => (1, 2),
            Axis::Y => (0, 2),
            Axis::Z => (0, 1),
        }
    }
}

/// How slice pixels map to world mm: pixel `(col, row)` has its center at
/// `origin + col * col_step + row * row_step`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceGeometry {
    pub axis: Axis,
    pub index: usize,
    pub width: usize,
    pub height: usize,
    pub origin: [f64; 3],
    pub col_step: [f64; 3],
    pub row_step: [f64; 3],
    /// mm per pixel along columns and rows.
    pub pixel_spacing: [f64; 2],
    pub has_mask: bool,
}

impl SliceGeometry {
    pub fn pixel_to_world(&self, col: f64, row: f64) -> [f64; 3] {
        std::array::from_fn(|a| self.origin[a] + col * self.col_step[a] + row * self.row_step[a])
    }
}

/// Voxel index of slice pixel `(col, row)`.
fn voxel_of(axis: Axis, index: usize, col: usize, row: usize) -> [usize; 3] {
    let (c, r) = axis.image_axes();
    let mut v = [0; 3];
    v[axis.index()] = index;
    v[c] = col;
    v[r] = row;
    v
}

pub fn slice_geometry(grid: &Grid, axis: Axis, index: usize, has_mask: bool) -> Option<SliceGeometry> {
    let dims = grid.dims();
    if index >= dims[axis.index()] {
        return None;
    }
    let (c, r) = axis.image_axes();
    let at = |v: [usize; 3]| grid.voxel_center(v[0], v[1], v[2]);
    let o = at(voxel_of(axis, index, 0, 0));
    let step = |a: usize| -> [f64; 3] {
        let mut unit = Vec3::zeros();
        unit[a] = 1.0;
        (grid.orientation() * unit * grid.spacing()[a]).into()
    };
    Some(SliceGeometry {
        axis,
        index,
        width: dims[c],
        height: dims[r],
        origin: o.into(),
        col_step: step(c),
        row_step: step(r),
        pixel_spacing: [grid.spacing()[c], grid.spacing()[r]],
        has_mask,
    })
}

/// Display window; `None` fields default to the volume's min/max.
#[derive(Clone, Copy, Debug, Default, Deserialize)]
pub struct Window {
    pub level: Option<f64>,
    pub width: Option<f64>,
}

/// Renders one slice as an 8-bit PNG. With a mask (on the full grid) the
/// image is gray+alpha and the alpha channel carries the mask (255 inside).
pub fn render_slice(
    v: &Volume,
    mask: Option<&Mask>,
    axis: Axis,
    index: usize,
    window: Window,
) -> Option<(Vec<u8>, SliceGeometry)> {
    let geom = slice_geometry(v.grid(), axis, index, mask.is_some())?;
    let (lo, hi) = v.min_max();
    let level = window.level.unwrap_or(0.5 * (lo + hi));
    let width = window.width.filter(|w| *w > 0.0).unwrap_or(if hi > lo { hi - lo } else { 1.0 });
    let gray = |col: usize, row: usize| -> u8 {
        let [i, j, k] = voxel_of(axis, index, col, row);
        let t = (v.get(i, j, k) - (level - 0.5 * width)) / width;
        (t.clamp(0.0, 1.0) * 255.0).round() as u8
    };
    let (w, h) = (geom.width as u32, geom.height as u32);
    let mut bytes = Cursor::new(Vec::new());
    let written = match mask {
        None => GrayImage::from_fn(w, h, |c, r| image::Luma([gray(c as usize, r as usize)]))
            .write_to(&mut bytes, ImageFormat::Png),
        Some(m) => GrayAlphaImage::from_fn(w, h, |c, r| {
            let [i, j, k] = voxel_of(axis, index, c as usize, r as usize);
            LumaA([gray(c as usize, r as usize), if m.get(i, j, k) { 255 } else { 0 }])
        })
        .write_to(&mut bytes, ImageFormat::Png),
    };
    written.expect("PNG encoding into memory");
    Some((bytes.into_inner(), geom))
}

/// The session mask on the volume's full grid, for display.
pub fn full_grid_mask(state: &SessionState, grid: &Grid) -> Option<Mask> {
    state.mask.as_ref().and_then(|m| embed_mask(m, grid).ok())
}
