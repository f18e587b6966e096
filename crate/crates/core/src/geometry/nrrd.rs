//! Minimal NRRD reader/writer for 3D volumes.
//!
//! Supports attached-header files with `raw` encoding. Intensities are written
//! as little-endian `float`, masks as `uchar` (0/1). Grid geometry travels in
//! `space directions` (per-axis world step, i.e. orientation column times
//! spacing) and `space origin` (center of voxel 0). Reading also accepts
//! `double`, the `spacings` field, and big-endian data.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::grid::{Grid, Mat3, Vec3};
use super::volume::{Mask, ProbabilityMap, Volume};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum NrrdData {
    U8(Vec<u8>),
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl NrrdData {
    pub fn len(&self) -> usize {
        match self {
            NrrdData::U8(v) => v.len(),
            NrrdData::F32(v) => v.len(),
            NrrdData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            NrrdData::U8(v) => v.iter().map(|&x| x as f64).collect(),
            NrrdData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            NrrdData::F64(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct NrrdImage {
    pub grid: Grid,
    pub data: NrrdData,
}

#[derive(Clone, Copy)]
enum ScalarType {
    U8,
    F32,
    F64,
}

impl ScalarType {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "uchar" | "unsigned char" | "uint8" | "uint8_t" => Some(ScalarType::U8),
            "float" => Some(ScalarType::F32),
            "double" => Some(ScalarType::F64),
            _ => None,
        }
    }

    fn size(self) -> usize {
        match self {
            ScalarType::U8 => 1,
            ScalarType::F32 => 4,
            ScalarType::F64 => 8,
        }
    }
}

fn parse_vector(s: &str) -> Option<Vec3> {
    let inner = s.trim().strip_prefix('(')?.strip_suffix(')')?;
    let parts: Vec<f64> = inner
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .ok()?;
    (parts.len() == 3).then(|| Vec3::new(parts[0], parts[1], parts[2]))
}

fn parse_vectors(s: &str) -> Option<Vec<Vec3>> {
    // vectors look like "(a,b,c) (d,e,f) (g,h,i)", possibly with inner spaces
    let mut out = Vec::new();
    let mut rest = s.trim();
    while !rest.is_empty() {
        let end = rest.find(')')?;
        out.push(parse_vector(&rest[..=end])?);
        rest = rest[end + 1..].trim_start();
    }
    Some(out)
}

/// Parses an NRRD file held in memory. `path` is only used in diagnostics.
pub fn parse_nrrd(bytes: &[u8], path: &Path) -> Result<NrrdImage> {
    let err = |m: String| Error::nrrd(path, m);
    if !bytes.starts_with(b"NRRD000") {
        return Err(err("missing NRRD magic".into()));
    }
    let header_end = bytes
        .windows(2)
        .position(|w| w == b"\n\n")
        .ok_or_else(|| err("header is not terminated by a blank line".into()))?;
    let header = std::str::from_utf8(&bytes[..header_end])
        .map_err(|_| err("header is not valid UTF-8".into()))?;
    let payload = &bytes[header_end + 2..];

    let mut scalar = None;
    let mut dimension = None;
    let mut sizes: Option<Vec<usize>> = None;
    let mut encoding = None;
    let mut big_endian = false;
    let mut directions: Option<Vec<Vec3>> = None;
    let mut spacings: Option<Vec<f64>> = None;
    let mut origin = Vec3::zeros();

    for (lineno, line) in header.lines().enumerate().skip(1) {
        let line = line.trim_end_matches('\r');
        if line.starts_with('#') || line.trim().is_empty() || line.contains(":=") {
            continue;
        }
        let (key, value) = line
            .split_once(": ")
            .ok_or_else(|| err(format!("line {}: malformed field `{line}`", lineno + 1)))?;
        let value = value.trim();
        match key.trim() {
            "type" => {
                scalar = Some(
                    ScalarType::parse(value)
                        .ok_or_else(|| err(format!("unsupported type `{value}`")))?,
                )
            }
            "dimension" => {
                dimension = Some(
                    value
                        .parse::<usize>()
                        .map_err(|_| err(format!("bad dimension `{value}`")))?,
                )
            }
            "sizes" => {
                sizes = Some(
                    value
                        .split_whitespace()
                        .map(|s| s.parse::<usize>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| err(format!("bad sizes `{value}`")))?,
                )
            }
            "encoding" => encoding = Some(value.to_string()),
            "endian" => match value {
                "little" => big_endian = false,
                "big" => big_endian = true,
                _ => return Err(err(format!("bad endian `{value}`"))),
            },
            "space directions" => {
                directions = Some(
                    parse_vectors(value)
                        .ok_or_else(|| err(format!("bad space directions `{value}`")))?,
                )
            }
            "spacings" => {
                spacings = Some(
                    value
                        .split_whitespace()
                        .map(|s| s.parse::<f64>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| err(format!("bad spacings `{value}`")))?,
                )
            }
            "space origin" => {
                origin = parse_vector(value)
                    .ok_or_else(|| err(format!("bad space origin `{value}`")))?
            }
            "data file" | "datafile" => {
                return Err(err("detached data files are not supported".into()))
            }
            "line skip" | "lineskip" | "byte skip" | "byteskip" => {
                if value != "0" {
                    return Err(err(format!("`{key}` is not supported")));
                }
            }
            // space, space dimension, kinds, units and friends carry no
            // information this reader needs
            _ => {}
        }
    }

    let scalar = scalar.ok_or_else(|| err("missing `type`".into()))?;
    if dimension != Some(3) {
        return Err(err(format!("expected dimension 3, got {dimension:?}")));
    }
    let sizes = sizes.ok_or_else(|| err("missing `sizes`".into()))?;
    if sizes.len() != 3 {
        return Err(err(format!("expected 3 sizes, got {}", sizes.len())));
    }
    match encoding.as_deref() {
        Some("raw") => {}
        Some(other) => return Err(err(format!("unsupported encoding `{other}`"))),
        None => return Err(err("missing `encoding`".into())),
    }

    let (spacing, orientation) = match (directions, spacings) {
        (Some(dirs), _) => {
            if dirs.len() != 3 {
                return Err(err(format!("expected 3 space directions, got {}", dirs.len())));
            }
            let spacing = Vec3::new(dirs[0].norm(), dirs[1].norm(), dirs[2].norm());
            if spacing.iter().any(|&s| !(s > 0.0)) {
                return Err(err("zero-length space direction".into()));
            }
            let orient = Mat3::from_columns(&[
                dirs[0] / spacing.x,
                dirs[1] / spacing.y,
                dirs[2] / spacing.z,
            ]);
            (spacing, orient)
        }
        (None, Some(sp)) if sp.len() == 3 => (Vec3::new(sp[0], sp[1], sp[2]), Mat3::identity()),
        (None, Some(_)) => return Err(err("expected 3 spacings".into())),
        (None, None) => (Vec3::repeat(1.0), Mat3::identity()),
    };
    let grid = Grid::new([sizes[0], sizes[1], sizes[2]], spacing, origin, orientation)
        .map_err(|e| err(e.to_string()))?;

    let n = grid.len();
    let expected = n * scalar.size();
    if payload.len() < expected {
        return Err(err(format!(
            "data truncated: expected {expected} bytes, found {}",
            payload.len()
        )));
    }
    let payload = &payload[..expected];
    let data = match scalar {
        ScalarType::U8 => NrrdData::U8(payload.to_vec()),
        ScalarType::F32 => NrrdData::F32(
            payload
                .chunks_exact(4)
                .map(|c| {
                    let b = [c[0], c[1], c[2], c[3]];
                    if big_endian { f32::from_be_bytes(b) } else { f32::from_le_bytes(b) }
                })
                .collect(),
        ),
        ScalarType::F64 => NrrdData::F64(
            payload
                .chunks_exact(8)
                .map(|c| {
                    let b: [u8; 8] = c.try_into().expect("chunk of 8");
                    if big_endian { f64::from_be_bytes(b) } else { f64::from_le_bytes(b) }
                })
                .collect(),
        ),
    };
    Ok(NrrdImage { grid, data })
}

pub fn read_nrrd(path: impl AsRef<Path>) -> Result<NrrdImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_nrrd(&bytes, path)
}

fn header(grid: &Grid, type_name: &str) -> String {
    let d = grid.dims();
    let dir = |a: usize| {
        let v = grid.axis_step(a);
        format!("({},{},{})", v.x, v.y, v.z)
    };
    let o = grid.origin();
    let mut h = String::new();
    h.push_str("NRRD0004\n");
    h.push_str("# Complete NRRD file format specification at:\n");
    h.push_str("# http://teem.sourceforge.net/nrrd/format.html\n");
    h.push_str(&format!("type: {type_name}\n"));
    h.push_str("dimension: 3\n");
    h.push_str("space: 3D-right-handed\n");
    h.push_str(&format!("sizes: {} {} {}\n", d[0], d[1], d[2]));
    h.push_str(&format!("space directions: {} {} {}\n", dir(0), dir(1), dir(2)));
    h.push_str("kinds: domain domain domain\n");
    h.push_str("endian: little\n");
    h.push_str("encoding: raw\n");
    h.push_str(&format!("space origin: ({},{},{})\n", o.x, o.y, o.z));
    h.push('\n');
    h
}

/// Serializes a grid and its data into NRRD bytes.
pub fn encode_nrrd(grid: &Grid, data: &NrrdData) -> Result<Vec<u8>> {
    if data.len() != grid.len() {
        return Err(Error::DataLength {
            expected: grid.len(),
            actual: data.len(),
        });
    }
    let (type_name, size) = match data {
        NrrdData::U8(_) => ("uchar", 1),
        NrrdData::F32(_) => ("float", 4),
        NrrdData::F64(_) => ("double", 8),
    };
    let head = header(grid, type_name);
    let mut out = Vec::with_capacity(head.len() + size * data.len());
    out.extend_from_slice(head.as_bytes());
    match data {
        NrrdData::U8(v) => out.extend_from_slice(v),
        NrrdData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        NrrdData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
    }
    Ok(out)
}

pub fn write_nrrd(path: impl AsRef<Path>, grid: &Grid, data: &NrrdData) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_nrrd(grid, data)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

impl Volume {
    pub fn read_nrrd(path: impl AsRef<Path>) -> Result<Volume> {
        let img = read_nrrd(path)?;
        Volume::new(img.grid, img.data.to_f64())
    }

    /// Writes the volume as 32-bit float NRRD.
    pub fn write_nrrd(&self, path: impl AsRef<Path>) -> Result<()> {
        let data = NrrdData::F32(self.data().iter().map(|&v| v as f32).collect());
        write_nrrd(path, self.grid(), &data)
    }
}

impl Mask {
    /// Reads a mask; any nonzero voxel is foreground.
    pub fn read_nrrd(path: impl AsRef<Path>) -> Result<Mask> {
        let img = read_nrrd(path)?;
        let data = match img.data {
            NrrdData::U8(v) => v.into_iter().map(|x| x != 0).collect(),
            other => other.to_f64().into_iter().map(|x| x != 0.0).collect(),
        };
        Mask::new(img.grid, data)
    }

    /// Writes the mask as unsigned 8-bit NRRD with values 0/1.
    pub fn write_nrrd(&self, path: impl AsRef<Path>) -> Result<()> {
        let data = NrrdData::U8(self.data().iter().map(|&b| b as u8).collect());
        write_nrrd(path, self.grid(), &data)
    }
}

impl ProbabilityMap {
    pub fn read_nrrd(path: impl AsRef<Path>) -> Result<ProbabilityMap> {
        let img = read_nrrd(path)?;
        ProbabilityMap::new(img.grid, img.data.to_f64())
    }

    pub fn write_nrrd(&self, path: impl AsRef<Path>) -> Result<()> {
        let data = NrrdData::F32(self.data().iter().map(|&v| v as f32).collect());
        write_nrrd(path, self.grid(), &data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Rotation3, Vector3};

    fn rotated_grid() -> Grid {
        let r = Rotation3::from_axis_angle(&Vector3::y_axis(), 0.3);
        Grid::new([3, 4, 5], Vec3::new(0.5, 0.75, 1.25), Vec3::new(-10.0, 2.5, 7.0), *r.matrix())
            .unwrap()
    }

    #[test]
    fn header_layout() {
        let g = Grid::axis_aligned([2, 3, 4], Vec3::new(0.5, 1.0, 2.0), Vec3::new(1.0, 2.0, 3.0)).unwrap();
        let bytes = encode_nrrd(&g, &NrrdData::U8(vec![0; 24])).unwrap();
        let text = String::from_utf8_lossy(&bytes[..bytes.len() - 24]).to_string();
        assert!(text.starts_with("NRRD0004\n"));
        assert!(text.contains("type: uchar\n"));
        assert!(text.contains("sizes: 2 3 4\n"));
        assert!(text.contains("space directions: (0.5,0,0) (0,1,0) (0,0,2)\n"));
        assert!(text.contains("space origin: (1,2,3)\n"));
        assert!(text.contains("endian: little\n"));
        assert!(text.ends_with("\n\n"));
    }

    #[test]
    fn volume_round_trip_keeps_geometry() {
        let g = rotated_grid();
        let v = Volume::from_fn(g.clone(), |i, _| (i[0] + 3 * i[1] + 12 * i[2]) as f64 * 0.5);
        let bytes = encode_nrrd(v.grid(), &NrrdData::F32(v.data().iter().map(|&x| x as f32).collect())).unwrap();
        let img = parse_nrrd(&bytes, Path::new("mem")).unwrap();
        assert!(img.grid.matches(&g));
        assert_eq!(img.data.to_f64(), v.data());
    }

    #[test]
    fn spacings_field_and_big_endian() {
        let mut bytes = b"NRRD0004\ntype: float\ndimension: 3\nsizes: 1 1 2\nspacings: 2 3 4\nendian: big\nencoding: raw\n\n".to_vec();
        bytes.extend_from_slice(&1.5f32.to_be_bytes());
        bytes.extend_from_slice(&(-2.0f32).to_be_bytes());
        let img = parse_nrrd(&bytes, Path::new("mem")).unwrap();
        assert_eq!(*img.grid.spacing(), Vec3::new(2.0, 3.0, 4.0));
        assert_eq!(img.data, NrrdData::F32(vec![1.5, -2.0]));
    }

    #[test]
    fn diagnostics() {
        let p = Path::new("mem");
        let cases: [(&[u8], &str); 6] = [
            (b"P6\n", "magic"),
            (b"NRRD0004\ntype: float\n", "blank line"),
            (b"NRRD0004\ntype: short\n\n", "unsupported type"),
            (b"NRRD0004\ntype: float\ndimension: 3\nsizes: 2 2 2\nencoding: gzip\n\n", "encoding"),
            (b"NRRD0004\ntype: float\ndimension: 3\nsizes: 2 2 2\nencoding: raw\n\n\0\0", "truncated"),
            (b"NRRD0004\nthis is not a field\n\n", "malformed"),
        ];
        for (bytes, needle) in cases {
            let msg = parse_nrrd(bytes, p).unwrap_err().to_string();
            assert!(msg.contains(needle), "{msg} lacks {needle}");
        }
    }
}
