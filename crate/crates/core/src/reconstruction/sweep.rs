//! Tracked 2D frames and their on-disk sweep directory format.
//!
//! A sweep directory holds `sweep.json` plus one little-endian `f32` raw
//! image per frame (`frame_0000.raw`, ...), stored u-fastest.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{RigidTransform, Vec3};

/// One tracked ultrasound frame. Pixel `(u, v)` sits at plane position
/// `(u * su, v * sv, 0)` which `pose` maps into world millimetres.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackedFrame {
    width: usize,
    height: usize,
    pixels: Vec<f32>,
    pixel_spacing: [f64; 2],
    pose: RigidTransform,
    timestamp: f64,
}

impl TrackedFrame {
    pub fn new(
        width: usize,
        height: usize,
        pixels: Vec<f32>,
        pixel_spacing: [f64; 2],
        pose: RigidTransform,
        timestamp: f64,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidSweep(format!("frame size {width}x{height}")));
        }
        if pixels.len() != width * height {
            return Err(Error::DataLength {
                expected: width * height,
                actual: pixels.len(),
            });
        }
        if pixel_spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidSweep(format!(
                "pixel spacing {pixel_spacing:?} must be positive"
            )));
        }
        if !timestamp.is_finite() {
            return Err(Error::InvalidSweep("non-finite timestamp".into()));
        }
        Ok(Self {
            width,
            height,
            pixels,
            pixel_spacing,
            pose,
            timestamp,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn pixel(&self, u: usize, v: usize) -> f32 {
        self.pixels[u + self.width * v]
    }

    pub fn pixel_spacing(&self) -> [f64; 2] {
        self.pixel_spacing
    }

    pub fn pose(&self) -> &RigidTransform {
        &self.pose
    }

    pub fn timestamp(&self) -> f64 {
        self.timestamp
    }

    pub fn pixel_to_world(&self, u: f64, v: f64) -> Vec3 {
        self.pose.apply(&Vec3::new(
            u * self.pixel_spacing[0],
            v * self.pixel_spacing[1],
            0.0,
        ))
    }

    /// World positions of the four corner pixel centers.
    pub fn corner_positions(&self) -> [Vec3; 4] {
        let (w, h) = ((self.width - 1) as f64, (self.height - 1) as f64);
        [
            self.pixel_to_world(0.0, 0.0),
            self.pixel_to_world(w, 0.0),
            self.pixel_to_world(0.0, h),
            self.pixel_to_world(w, h),
        ]
    }

    pub fn with_pose(mut self, pose: RigidTransform) -> Self {
        self.pose = pose;
        self
    }
}

/// Ordered tracked frames from one acquisition.
#[derive(Clone, Debug, PartialEq)]
pub struct Sweep {
    frames: Vec<TrackedFrame>,
    probe_id: String,
}

impl Sweep {
    pub fn new(frames: Vec<TrackedFrame>, probe_id: impl Into<String>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::InvalidSweep("sweep has no frames".into()));
        }
        if let Some(w) = frames
            .windows(2)
            .position(|w| w[1].timestamp < w[0].timestamp)
        {
            return Err(Error::InvalidSweep(format!(
                "timestamps decrease at frame {}",
                w + 1
            )));
        }
        Ok(Self {
            frames,
            probe_id: probe_id.into(),
        })
    }

    pub fn frames(&self) -> &[TrackedFrame] {
        &self.frames
    }

    pub fn probe_id(&self) -> &str {
        &self.probe_id
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    // =========================================================================
    // Directory IO
    // =========================================================================

    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        let first = &self.frames[0];
        let (w, h, sp) = (first.width, first.height, first.pixel_spacing);
        if self
            .frames
            .iter()
            .any(|f| f.width != w || f.height != h || f.pixel_spacing != sp)
        {
            return Err(Error::InvalidSweep(
                "sweep directories require frames of equal size and spacing".into(),
            ));
        }
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut entries = Vec::with_capacity(self.frames.len());
        for (n, frame) in self.frames.iter().enumerate() {
            let file = format!("frame_{n:04}.raw");
            let path = dir.join(&file);
            let bytes: Vec<u8> = frame.pixels.iter().flat_map(|p| p.to_le_bytes()).collect();
            fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
            entries.push(FrameEntry {
                file,
                pose: frame.pose.to_row_major(),
                timestamp: frame.timestamp,
            });
        }
        let manifest = SweepFile {
            probe_id: self.probe_id.clone(),
            pixel_spacing: sp,
            dims: [w, h],
            frames: entries,
        };
        let path = dir.join("sweep.json");
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Json {
            path: path.clone(),
            source: e,
        })?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn read_dir(dir: impl AsRef<Path>) -> Result<Sweep> {
        let dir = dir.as_ref();
        let path = dir.join("sweep.json");
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: SweepFile =
            serde_json::from_str(&text).map_err(|e| Error::Json { path, source: e })?;
        let [w, h] = manifest.dims;
        let mut frames = Vec::with_capacity(manifest.frames.len());
        for entry in manifest.frames {
            let fpath = dir.join(&entry.file);
            let bytes = fs::read(&fpath).map_err(|e| Error::io(&fpath, e))?;
            if bytes.len() != 4 * w * h {
                return Err(Error::InvalidSweep(format!(
                    "{}: expected {} bytes for a {w}x{h} frame, found {}",
                    fpath.display(),
                    4 * w * h,
                    bytes.len()
                )));
            }
            let pixels = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let pose = RigidTransform::from_row_major(&entry.pose)?;
            frames.push(TrackedFrame::new(
                w,
                h,
                pixels,
                manifest.pixel_spacing,
                pose,
                entry.timestamp,
            )?);
        }
        Sweep::new(frames, manifest.probe_id)
    }
}

#[derive(Serialize, Deserialize)]
struct SweepFile {
    probe_id: String,
    pixel_spacing: [f64; 2],
    /// Frame width and height in pixels.
    dims: [usize; 2],
    frames: Vec<FrameEntry>,
}

#[derive(Serialize, Deserialize)]
struct FrameEntry {
    file: String,
    /// Row-major rotation followed by translation.
    pose: [f64; 12],
    timestamp: f64,
}
