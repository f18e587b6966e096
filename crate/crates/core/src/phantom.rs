//! Synthetic liver-like phantoms with one ellipsoidal lesion, and simulated
//! tracked sweeps over them.
//!
//! Intensity model: `background + contrast * blur(indicator)`, then
//! multiplicative log-normal speckle `exp(N(0, speckle_sigma))`. The ground
//! truth mask is the exact (pre-blur) ellipsoid indicator at voxel centers.
//! All randomness is drawn from ChaCha8 streams seeded by the spec.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, Grid, Mask, Mat3, RigidTransform, Vec3, Volume};
use crate::reconstruction::{Sweep, TrackedFrame};

/// Lesion diameters seen in the prospective cohort (min, max), in mm.
pub const LESION_DIAMETER_RANGE_MM: (f64, f64) = (10.1, 40.6);
/// Median lesion diameter of the prospective cohort, in mm.
pub const MEDIAN_LESION_DIAMETER_MM: f64 = 15.9;
/// Frames per acquired sweep (min, max).
pub const SWEEP_FRAME_RANGE: (usize, usize) = (38, 95);
/// Reconstructed volume sizes (min, max), in mL.
pub const VOLUME_ML_RANGE: (f64, f64) = (160.0, 355.0);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    /// Edge-to-edge size of the volume in mm; the volume spans `[0, extent]`.
    pub volume_extent: [f64; 3],
    /// Voxel spacing in mm.
    pub spacing: [f64; 3],
    pub background_level: f64,
    pub lesion_center: [f64; 3],
    /// Ellipsoid semi-axes in mm.
    pub lesion_radii: [f64; 3],
    /// Additive, signed: positive is hyperechoic, negative hypoechoic.
    pub lesion_contrast: f64,
    pub speckle_sigma: f64,
    /// Gaussian blur of the lesion boundary, in mm.
    pub boundary_blur_sigma: f64,
    pub rng_seed: u64,
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidPhantom(m));
        let all = self
            .volume_extent
            .iter()
            .chain(&self.spacing)
            .chain(&self.lesion_center)
            .chain(&self.lesion_radii)
            .chain([&self.background_level, &self.lesion_contrast, &self.speckle_sigma, &self.boundary_blur_sigma]);
        if all.into_iter().any(|v| !v.is_finite()) {
            return bad("non-finite parameter".into());
        }
        if self.volume_extent.iter().any(|&e| e <= 0.0) {
            return bad(format!("extent {:?} must be positive", self.volume_extent));
        }
        if self.spacing.iter().any(|&s| s <= 0.0) {
            return bad(format!("spacing {:?} must be positive", self.spacing));
        }
        if self.lesion_radii.iter().any(|&r| r <= 0.0) {
            return bad(format!("radii {:?} must be positive", self.lesion_radii));
        }
        if self.speckle_sigma < 0.0 || self.boundary_blur_sigma < 0.0 {
            return bad("noise and blur sigmas must be >= 0".into());
        }
        for a in 0..3 {
            let (c, r) = (self.lesion_center[a], self.lesion_radii[a]);
            if c - r < 0.0 || c + r > self.volume_extent[a] {
                return bad(format!("lesion leaves the volume along axis {a}"));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        let spacing = Vec3::from(self.spacing);
        let mut dims = [0usize; 3];
        for a in 0..3 {
            dims[a] = (self.volume_extent[a] / self.spacing[a]).round().max(1.0) as usize;
        }
        Grid::axis_aligned(dims, spacing, spacing * 0.5)
    }

    /// Axis-aligned box tightly enclosing the lesion ellipsoid; the stand-in
    /// for a manually placed tumor box.
    pub fn lesion_box(&self) -> BoundingBox {
        let c = Vec3::from(self.lesion_center);
        let r = Vec3::from(self.lesion_radii);
        BoundingBox::new(c - r, c + r).expect("radii are positive")
    }

    pub fn analytic_lesion_volume_mm3(&self) -> f64 {
        4.0 / 3.0 * std::f64::consts::PI * self.lesion_radii.iter().product::<f64>()
    }

    pub fn equivalent_diameter_mm(&self) -> f64 {
        2.0 * self.lesion_radii.iter().product::<f64>().cbrt()
    }

    /// A lesion is isoechoic when its contrast is below the speckle noise floor
    /// of the parenchyma.
    pub fn is_isoechoic(&self) -> bool {
        self.lesion_contrast.abs() <= self.background_level.abs() * self.speckle_sigma
    }

    pub fn inside_lesion(&self, p: &Vec3) -> bool {
        (0..3)
            .map(|a| ((p[a] - self.lesion_center[a]) / self.lesion_radii[a]).powi(2))
            .sum::<f64>()
            <= 1.0
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<PhantomSpec> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("plain data");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Phantom volume and its exact ground truth.
#[derive(Clone, Debug)]
pub struct Phantom {
    pub volume: Volume,
    pub ground_truth: Mask,
}

pub fn make_phantom(spec: &PhantomSpec) -> Result<Phantom> {
    spec.validate()?;
    let grid = spec.grid()?;
    let ground_truth = Mask::from_fn(grid.clone(), |_, p| spec.inside_lesion(&p));

    let indicator: Vec<f64> = ground_truth
        .data()
        .iter()
        .map(|&b| if b { 1.0 } else { 0.0 })
        .collect();
    let smooth = if spec.boundary_blur_sigma > 0.0 {
        gaussian_blur(&grid, indicator, spec.boundary_blur_sigma)
    } else {
        indicator
    };

    let mut data: Vec<f64> = smooth
        .iter()
        .map(|&s| spec.background_level + spec.lesion_contrast * s)
        .collect();
    if spec.speckle_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
        let normal = Normal::new(0.0, spec.speckle_sigma).expect("sigma > 0");
        for v in data.iter_mut() {
            *v *= normal.sample(&mut rng).exp();
        }
    }
    Ok(Phantom {
        volume: Volume::new(grid, data)?,
        ground_truth,
    })
}

/// Separable Gaussian smoothing with replicated borders.
fn gaussian_blur(grid: &Grid, mut data: Vec<f64>, sigma_mm: f64) -> Vec<f64> {
    let dims = grid.dims();
    for axis in 0..3 {
        let sigma = sigma_mm / grid.spacing()[axis];
        let radius = (3.0 * sigma).ceil() as i64;
        if radius == 0 {
            continue;
        }
        let mut kernel: Vec<f64> = (-radius..=radius)
            .map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp())
            .collect();
        let total: f64 = kernel.iter().sum();
        kernel.iter_mut().for_each(|w| *w /= total);

        let n = dims[axis] as i64;
        let stride = match axis {
            0 => 1,
            1 => dims[0],
            _ => dims[0] * dims[1],
        };
        let src = data.clone();
        data.par_iter_mut().enumerate().for_each(|(idx, out)| {
            let pos = grid.voxel_index(idx)[axis] as i64;
            let line_start = idx - pos as usize * stride;
            *out = kernel
                .iter()
                .enumerate()
                .map(|(t, w)| {
                    let q = (pos + t as i64 - radius).clamp(0, n - 1) as usize;
                    w * src[line_start + q * stride]
                })
                .sum();
        });
    }
    data
}

// =============================================================================
// Default phantom suite
// =============================================================================

/// Parameter ranges for randomly drawn default phantoms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomSampler {
    pub extent_range_mm: (f64, f64),
    pub spacing_mm: f64,
    pub diameter_range_mm: (f64, f64),
    /// Relative spread of semi-axes around the equivalent radius.
    pub axis_ratio_spread: f64,
    pub background_level: f64,
    /// Magnitude of the lesion contrast relative to the background.
    pub relative_contrast_range: (f64, f64),
    pub speckle_sigma: f64,
    pub boundary_blur_sigma: f64,
    /// Minimum distance between lesion and volume border, in mm.
    pub border_margin_mm: f64,
}

impl Default for PhantomSampler {
    fn default() -> Self {
        Self {
            extent_range_mm: (55.0, 70.0),
            spacing_mm: 1.0,
            diameter_range_mm: LESION_DIAMETER_RANGE_MM,
            axis_ratio_spread: 0.15,
            background_level: 100.0,
            relative_contrast_range: (0.4, 0.6),
            speckle_sigma: 0.1,
            boundary_blur_sigma: 0.5,
            border_margin_mm: 2.0,
        }
    }
}

impl PhantomSampler {
    /// Draws one phantom spec. Isoechoic draws are rejected and redrawn.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> PhantomSpec {
        loop {
            let spec = self.sample_once(rng);
            if !spec.is_isoechoic() && spec.validate().is_ok() {
                return spec;
            }
        }
    }

    fn sample_once<R: Rng>(&self, rng: &mut R) -> PhantomSpec {
        let (elo, ehi) = self.extent_range_mm;
        let extent: [f64; 3] = std::array::from_fn(|_| rng.random_range(elo..=ehi));
        let (dlo, dhi) = self.diameter_range_mm;
        let diameter = rng.random_range(dlo..=dhi);
        let s = self.axis_ratio_spread;
        let mut factors: [f64; 3] = std::array::from_fn(|_| rng.random_range(1.0 - s..=1.0 + s));
        let geo = factors.iter().product::<f64>().cbrt();
        factors.iter_mut().for_each(|f| *f /= geo);
        let radii: [f64; 3] = std::array::from_fn(|a| 0.5 * diameter * factors[a]);
        let center: [f64; 3] = std::array::from_fn(|a| {
            let lo = radii[a] + self.border_margin_mm;
            let hi = extent[a] - radii[a] - self.border_margin_mm;
            if hi > lo {
                rng.random_range(lo..=hi)
            } else {
                0.5 * extent[a]
            }
        });
        let (clo, chi) = self.relative_contrast_range;
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let contrast = sign * self.background_level * rng.random_range(clo..=chi);
        PhantomSpec {
            volume_extent: extent,
            spacing: [self.spacing_mm; 3],
            background_level: self.background_level,
            lesion_center: center,
            lesion_radii: radii,
            lesion_contrast: contrast,
            speckle_sigma: self.speckle_sigma,
            boundary_blur_sigma: self.boundary_blur_sigma,
            rng_seed: rng.random(),
        }
    }
}

// =============================================================================
// Sweep simulation
// =============================================================================

/// Linear probe trajectory with an optional progressive tilt.
///
/// Frame `n` has its pixel `(0, 0)` at `origin + n * step`. The image plane is
/// spanned by `u_axis` and `v_axis`, rotated about `u_axis` by a tilt that
/// grows linearly from 0 to `total_tilt_deg` over the sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub origin: [f64; 3],
    pub u_axis: [f64; 3],
    pub v_axis: [f64; 3],
    pub step: [f64; 3],
    #[serde(default)]
    pub total_tilt_deg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub n_frames: usize,
    /// Frame width and height in mm; pixel centers span `[0, size]`.
    pub frame_size: [f64; 2],
    pub pixel_spacing: [f64; 2],
    pub path: Trajectory,
    /// Tracking noise: translation sigma in mm and rotation sigma in degrees.
    pub pose_noise_sigma: (f64, f64),
    /// Seconds between frames.
    #[serde(default = "default_frame_interval")]
    pub frame_interval_s: f64,
    pub rng_seed: u64,
}

fn default_frame_interval() -> f64 {
    0.05
}

impl SweepSpec {
    /// Noiseless parallel xy-slices stepping along +z through the whole grid,
    /// one slice every `pitch` mm starting at the first voxel layer.
    pub fn parallel_slices(grid: &Grid, pitch: f64, pixel_spacing: f64) -> SweepSpec {
        let first = grid.voxel_center(0, 0, 0);
        let last = grid.voxel_center(grid.dims()[0] - 1, grid.dims()[1] - 1, grid.dims()[2] - 1);
        let n_frames = ((last.z - first.z) / pitch + 1e-9).floor() as usize + 1;
        SweepSpec {
            n_frames,
            frame_size: [last.x - first.x, last.y - first.y],
            pixel_spacing: [pixel_spacing; 2],
            path: Trajectory {
                origin: [first.x, first.y, first.z],
                u_axis: [1.0, 0.0, 0.0],
                v_axis: [0.0, 1.0, 0.0],
                step: [0.0, 0.0, pitch],
                total_tilt_deg: 0.0,
            },
            pose_noise_sigma: (0.0, 0.0),
            frame_interval_s: default_frame_interval(),
            rng_seed: 0,
        }
    }

    /// A sweep of `n_frames` xy-frames spread evenly across the grid's z
    /// extent; the default acquisition used for dataset generation.
    pub fn covering(grid: &Grid, n_frames: usize, pixel_spacing: f64, rng_seed: u64) -> SweepSpec {
        let first = grid.voxel_center(0, 0, 0);
        let last = grid.voxel_center(grid.dims()[0] - 1, grid.dims()[1] - 1, grid.dims()[2] - 1);
        let pitch = if n_frames > 1 {
            (last.z - first.z) / (n_frames - 1) as f64
        } else {
            0.0
        };
        SweepSpec {
            n_frames,
            frame_size: [last.x - first.x, last.y - first.y],
            pixel_spacing: [pixel_spacing; 2],
            path: Trajectory {
                origin: [first.x, first.y, first.z],
                u_axis: [1.0, 0.0, 0.0],
                v_axis: [0.0, 1.0, 0.0],
                step: [0.0, 0.0, pitch],
                total_tilt_deg: 0.0,
            },
            pose_noise_sigma: (0.0, 0.0),
            frame_interval_s: default_frame_interval(),
            rng_seed,
        }
    }

    fn frame_pixels(&self) -> (usize, usize) {
        let w = (self.frame_size[0] / self.pixel_spacing[0] + 1e-9).floor() as usize + 1;
        let h = (self.frame_size[1] / self.pixel_spacing[1] + 1e-9).floor() as usize + 1;
        (w, h)
    }

    /// True (noise-free) pose of frame `n`.
    pub fn true_pose(&self, n: usize) -> Result<RigidTransform> {
        let u = Vec3::from(self.path.u_axis).normalize();
        let v = Vec3::from(self.path.v_axis).normalize();
        if u.dot(&v).abs() > 1e-9 {
            return Err(Error::InvalidParameter("trajectory axes are not orthogonal".into()));
        }
        let base = Mat3::from_columns(&[u, v, u.cross(&v)]);
        let frac = if self.n_frames > 1 {
            n as f64 / (self.n_frames - 1) as f64
        } else {
            0.0
        };
        let tilt = RigidTransform::from_axis_angle(u, (self.path.total_tilt_deg * frac).to_radians(), Vec3::zeros())?;
        let t = Vec3::from(self.path.origin) + Vec3::from(self.path.step) * n as f64;
        RigidTransform::new(tilt.rotation() * base, t)
    }

    fn validate(&self) -> Result<()> {
        if self.n_frames == 0 {
            return Err(Error::InvalidParameter("n_frames must be >= 1".into()));
        }
        if self.pixel_spacing.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::InvalidParameter("pixel spacing must be positive".into()));
        }
        if self.frame_size.iter().any(|&s| !(s >= 0.0)) {
            return Err(Error::InvalidParameter("frame size must be >= 0".into()));
        }
        let (tn, rn) = self.pose_noise_sigma;
        if !(tn >= 0.0) || !(rn >= 0.0) {
            return Err(Error::InvalidParameter("pose noise must be >= 0".into()));
        }
        Ok(())
    }
}

/// Samples `volume` on each posed frame plane (trilinear) and records poses
/// perturbed by the tracking noise.
pub fn simulate_sweep(volume: &Volume, spec: &SweepSpec) -> Result<Sweep> {
    spec.validate()?;
    let (w, h) = spec.frame_pixels();
    let grid = volume.grid();
    let poses: Vec<RigidTransform> = (0..spec.n_frames)
        .map(|n| spec.true_pose(n))
        .collect::<Result<_>>()?;

    let mut any_inside = false;
    let frames_pixels: Vec<(Vec<f32>, bool)> = poses
        .par_iter()
        .map(|pose| {
            let mut inside = false;
            let mut px = Vec::with_capacity(w * h);
            for v in 0..h {
                for u in 0..w {
                    let p = pose.apply(&Vec3::new(
                        u as f64 * spec.pixel_spacing[0],
                        v as f64 * spec.pixel_spacing[1],
                        0.0,
                    ));
                    inside |= grid.contains_world(&p);
                    px.push(volume.sample_trilinear(&p) as f32);
                }
            }
            (px, inside)
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let (t_sigma, r_sigma) = spec.pose_noise_sigma;
    let t_noise = Normal::new(0.0, t_sigma.max(f64::MIN_POSITIVE)).expect("finite sigma");
    let r_noise = Normal::new(0.0, r_sigma.to_radians().max(f64::MIN_POSITIVE)).expect("finite sigma");

    let mut frames = Vec::with_capacity(spec.n_frames);
    for (n, ((pixels, inside), pose)) in frames_pixels.into_iter().zip(&poses).enumerate() {
        any_inside |= inside;
        let recorded = if t_sigma > 0.0 || r_sigma > 0.0 {
            let dt = Vec3::from_fn(|_, _| if t_sigma > 0.0 { t_noise.sample(&mut rng) } else { 0.0 });
            let rv = Vec3::from_fn(|_, _| if r_sigma > 0.0 { r_noise.sample(&mut rng) } else { 0.0 });
            let angle = rv.norm();
            let jitter = if angle > 0.0 {
                RigidTransform::from_axis_angle(rv, angle, dt)?
            } else {
                RigidTransform::from_translation(dt)
            };
            // perturb about the frame origin
            let to_origin = RigidTransform::from_translation(-pose.translation());
            let back = RigidTransform::from_translation(*pose.translation());
            back.compose(&jitter).compose(&to_origin).compose(pose)
        } else {
            *pose
        };
        frames.push(TrackedFrame::new(
            w,
            h,
            pixels,
            spec.pixel_spacing,
            recorded,
            n as f64 * spec.frame_interval_s,
        )?);
    }
    if !any_inside {
        return Err(Error::TrajectoryMisses);
    }
    Sweep::new(frames, "simulated")
}
