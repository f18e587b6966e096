//! Predictor handles and the `run_predictor` dispatch.
//!
//! Every predictor sees the same input: the volume cropped to the ROI,
//! resampled to isotropic spacing (0.5 mm unless overridden) and
//! z-normalized. Each returns a probability map on that grid.
//!
//! Handles are written as `kind[:key=value;key=value...]`, for example
//! `region_growing:tolerance=auto;connectivity=26` or
//! `external:cmd=my-net {input} {output};timeout_s=60`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::path::Path;
use std::process::{Command, Stdio};
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::components::{binarize, postprocess, Connectivity};
use super::region::{region_grow, seed_indices, SeedPoint};
use crate::error::{Error, Result};
use crate::geometry::{crop_range, BoundingBox, Grid, Interpolation, Mask, ProbabilityMap, Vec3, Volume};
use crate::stats::percentile_sorted;

pub const DEFAULT_PREDICTOR_SPACING_MM: f64 = 0.5;
pub const DEFAULT_TIMEOUT_S: f64 = 300.0;
pub const TIMEOUT_ENV: &str = "SEGBENCH_PREDICTOR_TIMEOUT_S";
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Offset of the extra region-growing seeds around the central one, in mm.
const SEED_OFFSET_MM: f64 = 2.0;
/// Radius of the sphere used to decide lesion polarity, in mm.
const POLARITY_RADIUS_MM: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    RegionGrowing,
    ThresholdModel,
    External,
}

impl PredictorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PredictorKind::RegionGrowing => "region_growing",
            PredictorKind::ThresholdModel => "threshold_model",
            PredictorKind::External => "external",
        }
    }
}

impl FromStr for PredictorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "region_growing" => Ok(PredictorKind::RegionGrowing),
            "threshold_model" => Ok(PredictorKind::ThresholdModel),
            "external" => Ok(PredictorKind::External),
            _ => Err(Error::InvalidParameter(format!(
                "unknown predictor kind {s:?} (expected region_growing, threshold_model or external)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Tolerance {
    /// Half the distance between the seed mean and the ROI median.
    Auto,
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Polarity {
    Auto,
    Bright,
    Dark,
}

#[derive(Clone, Debug, PartialEq)]
enum Config {
    RegionGrowing {
        tolerance: Tolerance,
        connectivity: Connectivity,
    },
    ThresholdModel {
        polarity: Polarity,
        low_pct: f64,
        high_pct: f64,
    },
    External {
        command: Vec<String>,
        timeout_s: f64,
    },
}

/// A validated predictor configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictorHandle {
    kind: PredictorKind,
    params: BTreeMap<String, String>,
    config: Config,
    tau: Option<f64>,
    spacing_mm: f64,
}

fn parse_f64(key: &str, value: &str) -> Result<f64> {
    value
        .trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::InvalidParameter(format!("{key}={value:?} is not a number")))
}

impl PredictorHandle {
    pub fn new(kind: PredictorKind, params: BTreeMap<String, String>) -> Result<Self> {
        let allowed: &[&str] = match kind {
            PredictorKind::RegionGrowing => &["tolerance", "connectivity"],
            PredictorKind::ThresholdModel => &["polarity", "low_pct", "high_pct"],
            PredictorKind::External => &["cmd", "timeout_s"],
        };
        if let Some(k) = params
            .keys()
            .find(|k| !allowed.contains(&k.as_str()) && !["tau", "spacing"].contains(&k.as_str()))
        {
            return Err(Error::InvalidParameter(format!(
                "unknown parameter {k:?} for {} (allowed: {}, tau, spacing)",
                kind.as_str(),
                allowed.join(", ")
            )));
        }
        let get = |k: &str| params.get(k).map(String::as_str);

        let tau = get("tau").map(|v| parse_f64("tau", v)).transpose()?;
        if let Some(t) = tau {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::InvalidParameter(format!("tau={t} outside [0, 1]")));
            }
        }
        let spacing_mm = get("spacing")
            .map(|v| parse_f64("spacing", v))
            .transpose()?
            .unwrap_or(DEFAULT_PREDICTOR_SPACING_MM);
        if spacing_mm <= 0.0 {
            return Err(Error::InvalidParameter(format!("spacing={spacing_mm} must be positive")));
        }

        let config = match kind {
            PredictorKind::RegionGrowing => {
                let tolerance = match get("tolerance") {
                    None | Some("auto") => Tolerance::Auto,
                    Some(v) => {
                        let t = parse_f64("tolerance", v)?;
                        if t < 0.0 {
                            return Err(Error::InvalidParameter(format!("tolerance={t} must be >= 0")));
                        }
                        Tolerance::Fixed(t)
                    }
                };
                let connectivity = match get("connectivity") {
                    None => Connectivity::TwentySix,
                    Some(v) => v
                        .trim()
                        .parse::<u8>()
                        .map_err(|e| e.to_string())
                        .and_then(Connectivity::try_from)
                        .map_err(|e| Error::InvalidParameter(format!("connectivity={v:?}: {e}")))?,
                };
                Config::RegionGrowing {
                    tolerance,
                    connectivity,
                }
            }
            PredictorKind::ThresholdModel => {
                let polarity = match get("polarity") {
                    None | Some("auto") => Polarity::Auto,
                    Some("bright") => Polarity::Bright,
                    Some("dark") => Polarity::Dark,
                    Some(v) => {
                        return Err(Error::InvalidParameter(format!(
                            "polarity={v:?} (expected auto, bright or dark)"
                        )))
                    }
                };
                let low_pct = get("low_pct").map(|v| parse_f64("low_pct", v)).transpose()?.unwrap_or(0.5);
                let high_pct = get("high_pct").map(|v| parse_f64("high_pct", v)).transpose()?.unwrap_or(99.5);
                if !(0.0..100.0).contains(&low_pct) || !(low_pct < high_pct && high_pct <= 100.0) {
                    return Err(Error::InvalidParameter(format!(
                        "percentiles low_pct={low_pct}, high_pct={high_pct} must satisfy 0 <= low < high <= 100"
                    )));
                }
                Config::ThresholdModel {
                    polarity,
                    low_pct,
                    high_pct,
                }
            }
            PredictorKind::External => {
                let template = get("cmd")
                    .ok_or_else(|| Error::InvalidParameter("external predictor needs cmd=<command template>".into()))?;
                let command: Vec<String> = template.split_whitespace().map(str::to_owned).collect();
                if command.is_empty() {
                    return Err(Error::InvalidParameter("empty external command".into()));
                }
                if !template.contains("{input}") || !template.contains("{output}") {
                    return Err(Error::InvalidParameter(
                        "external command must contain {input} and {output} placeholders".into(),
                    ));
                }
                let timeout_s = match get("timeout_s") {
                    Some(v) => parse_f64("timeout_s", v)?,
                    None => match std::env::var(TIMEOUT_ENV) {
                        Ok(v) => parse_f64(TIMEOUT_ENV, &v)?,
                        Err(_) => DEFAULT_TIMEOUT_S,
                    },
                };
                if timeout_s <= 0.0 {
                    return Err(Error::InvalidParameter(format!("timeout {timeout_s} s must be positive")));
                }
                Config::External { command, timeout_s }
            }
        };
        Ok(Self {
            kind,
            params,
            config,
            tau,
            spacing_mm,
        })
    }

    pub fn kind(&self) -> PredictorKind {
        self.kind
    }

    pub fn params(&self) -> &BTreeMap<String, String> {
        &self.params
    }

    /// Decision threshold carried by the handle, if any.
    pub fn tau(&self) -> Option<f64> {
        self.tau
    }

    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        let mut params = self.params.clone();
        params.insert("tau".into(), tau.to_string());
        Self::new(self.kind, params)
    }

    pub fn spacing_mm(&self) -> f64 {
        self.spacing_mm
    }

    /// Region growing produces hard masks, so its threshold is irrelevant.
    pub fn is_binary(&self) -> bool {
        self.kind == PredictorKind::RegionGrowing
    }
}

impl FromStr for PredictorHandle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = match s.split_once(':') {
            Some((k, r)) => (k, r),
            None => (s, ""),
        };
        let kind: PredictorKind = kind.trim().parse()?;
        let mut params = BTreeMap::new();
        for part in rest.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::InvalidParameter(format!("expected key=value, got {part:?}")))?;
            if params.insert(k.trim().to_owned(), v.trim().to_owned()).is_some() {
                return Err(Error::InvalidParameter(format!("duplicate parameter {k:?}")));
            }
        }
        PredictorHandle::new(kind, params)
    }
}

impl fmt::Display for PredictorHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.kind.as_str())?;
        for (n, (k, v)) in self.params.iter().enumerate() {
            write!(f, "{}{k}={v}", if n == 0 { ':' } else { ';' })?;
        }
        Ok(())
    }
}

impl Serialize for PredictorHandle {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PredictorHandle {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

// =============================================================================
// Dispatch
// =============================================================================

/// Crops to the ROI, resamples to isotropic `spacing_mm` and z-normalizes.
pub fn prepare_input(v: &Volume, roi: &BoundingBox, spacing_mm: f64) -> Result<Volume> {
    v.crop(roi)?
        .resample(&Vec3::repeat(spacing_mm), Interpolation::Trilinear)?
        .znormalize()
}

/// Runs the predictor on `v` restricted to `roi`, with the ROI center as the
/// lesion hint. Returns the map on the predictor grid and the wall-clock time.
pub fn run_predictor(h: &PredictorHandle, v: &Volume, roi: &BoundingBox) -> Result<(ProbabilityMap, f64)> {
    run_predictor_with_hint(h, v, roi, &roi.center())
}

/// Like [`run_predictor`], with an explicit lesion hint (the tumor box
/// center) used for seeding and polarity.
pub fn run_predictor_with_hint(
    h: &PredictorHandle,
    v: &Volume,
    roi: &BoundingBox,
    hint: &Vec3,
) -> Result<(ProbabilityMap, f64)> {
    let start = Instant::now();
    let input = prepare_input(v, roi, h.spacing_mm)?;
    let p = match &h.config {
        Config::RegionGrowing {
            tolerance,
            connectivity,
        } => predict_region_growing(&input, hint, *tolerance, *connectivity)?,
        Config::ThresholdModel {
            polarity,
            low_pct,
            high_pct,
        } => predict_threshold_model(&input, hint, *polarity, *low_pct, *high_pct)?,
        Config::External { command, timeout_s } => predict_external(&input, command, *timeout_s)?,
    };
    Ok((p, start.elapsed().as_secs_f64()))
}

fn sorted_values(v: &Volume) -> Vec<f64> {
    let mut s = v.data().to_vec();
    s.sort_unstable_by(f64::total_cmp);
    s
}

fn predict_region_growing(input: &Volume, hint: &Vec3, tol: Tolerance, conn: Connectivity) -> Result<ProbabilityMap> {
    let grid = input.grid();
    if grid.nearest_voxel(hint).is_none() {
        return Err(Error::SeedOutside {
            position: (*hint).into(),
        });
    }
    let mut seeds = vec![SeedPoint::new(*hint)];
    for a in 0..3 {
        for sign in [-1.0, 1.0] {
            let mut p = *hint;
            p[a] += sign * SEED_OFFSET_MM;
            if grid.nearest_voxel(&p).is_some() {
                seeds.push(SeedPoint::new(p));
            }
        }
    }
    let tolerance = match tol {
        Tolerance::Fixed(t) => t,
        Tolerance::Auto => {
            let idx = seed_indices(input, &seeds)?;
            let seed_mean = idx.iter().map(|&i| input.data()[i]).sum::<f64>() / idx.len() as f64;
            let median = percentile_sorted(&sorted_values(input), 50.0);
            0.5 * (seed_mean - median).abs()
        }
    };
    let mask = region_grow(input, &seeds, tolerance, conn)?;
    Ok(ProbabilityMap::from_mask(&mask))
}

fn predict_threshold_model(
    input: &Volume,
    hint: &Vec3,
    polarity: Polarity,
    low_pct: f64,
    high_pct: f64,
) -> Result<ProbabilityMap> {
    let sorted = sorted_values(input);
    let lo = percentile_sorted(&sorted, low_pct);
    let hi = percentile_sorted(&sorted, high_pct);
    let dark = match polarity {
        Polarity::Bright => false,
        Polarity::Dark => true,
        Polarity::Auto => {
            let grid = input.grid();
            let (n, sum) = (0..grid.len())
                .filter(|&i| {
                    let [x, y, z] = grid.voxel_index(i);
                    (grid.voxel_center(x, y, z) - hint).norm() <= POLARITY_RADIUS_MM
                })
                .fold((0usize, 0.0), |(n, s), i| (n + 1, s + input.data()[i]));
            if n == 0 {
                return Err(Error::SeedOutside {
                    position: (*hint).into(),
                });
            }
            sum / (n as f64) < percentile_sorted(&sorted, 50.0)
        }
    };
    let range = hi - lo;
    let data = input
        .data()
        .iter()
        .map(|&x| {
            if !(range > 0.0) {
                return 0.0;
            }
            let p = if dark { (hi - x) / range } else { (x - lo) / range };
            p.clamp(0.0, 1.0)
        })
        .collect();
    ProbabilityMap::new(input.grid().clone(), data)
}

fn predict_external(input: &Volume, command: &[String], timeout_s: f64) -> Result<ProbabilityMap> {
    let dir = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
    let in_path = dir.path().join("input.nrrd");
    let out_path = dir.path().join("output.nrrd");
    let err_path = dir.path().join("stderr.txt");
    input.write_nrrd(&in_path)?;

    let args: Vec<String> = command
        .iter()
        .map(|t| {
            t.replace("{input}", &in_path.to_string_lossy())
                .replace("{output}", &out_path.to_string_lossy())
        })
        .collect();
    let stderr = File::create(&err_path).map_err(|e| Error::io(&err_path, e))?;
    let mut child = Command::new(&args[0])
        .args(&args[1..])
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(stderr)
        .spawn()
        .map_err(|e| Error::PredictorFailed {
            status: format!("could not start {:?}", args[0]),
            stderr: e.to_string(),
        })?;

    let deadline = Instant::now() + Duration::from_secs_f64(timeout_s);
    let mut wait = Duration::from_millis(2);
    let status = loop {
        if let Some(status) = child.try_wait().map_err(|e| Error::io(&args[0], e))? {
            break status;
        }
        if Instant::now() >= deadline {
            let _ = child.kill();
            let _ = child.wait();
            return Err(Error::PredictorTimeout { seconds: timeout_s });
        }
        std::thread::sleep(wait);
        wait = (wait * 2).min(Duration::from_millis(50));
    };
    if !status.success() {
        return Err(Error::PredictorFailed {
            status: status.to_string(),
            stderr: read_tail(&err_path),
        });
    }
    let out = Volume::read_nrrd(&out_path)?;
    input.grid().ensure_matches(out.grid())?;
    ProbabilityMap::new(input.grid().clone(), out.into_data())
}

fn read_tail(path: &Path) -> String {
    const MAX: usize = 2000;
    let text = std::fs::read_to_string(path).unwrap_or_default();
    let text = text.trim();
    match text.char_indices().rev().nth(MAX) {
        Some((cut, _)) => format!("...{}", &text[cut..]),
        None => text.to_owned(),
    }
}

// =============================================================================
// Full segmentation
// =============================================================================

/// Result of [`segment`], on the cropped grid of the original volume.
#[derive(Clone, Debug)]
pub struct Segmentation {
    pub probability: ProbabilityMap,
    pub mask: Mask,
    /// Wall-clock seconds from dispatch to final mask.
    pub elapsed_s: f64,
}

/// Grid of `v` cropped to `roi`.
pub fn crop_grid(grid: &Grid, roi: &BoundingBox) -> Result<Grid> {
    let (lo, hi) = crop_range(grid, roi)?;
    grid.sub_grid(lo, hi)
}

/// Runs the predictor, maps the probabilities back onto the cropped original
/// grid (trilinear), thresholds at `tau` and keeps the largest component.
pub fn segment(
    h: &PredictorHandle,
    v: &Volume,
    roi: &BoundingBox,
    hint: &Vec3,
    tau: f64,
) -> Result<Segmentation> {
    let start = Instant::now();
    let (p, _) = run_predictor_with_hint(h, v, roi, hint)?;
    let target = crop_grid(v.grid(), roi)?;
    let probability = p.resample_onto(&target, Interpolation::Trilinear);
    let mask = postprocess(&binarize(&probability, tau)?);
    Ok(Segmentation {
        probability,
        mask,
        elapsed_s: start.elapsed().as_secs_f64(),
    })
}
