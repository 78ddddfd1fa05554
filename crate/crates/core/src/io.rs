//! Binary artifact formats.
//!
//! Every file starts with one ASCII header line; numbers in headers use the
//! shortest representation that parses back to the same `f64`. Payloads are
//! 64-bit IEEE floats, little endian.

use crate::elastic::{DisplacementHistory, NodeKind, Snapshot};
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::projection::{ScanGeometry, Sinogram, TimeMap};
use crate::recon::{Image, ImageSpec};
use std::fs;
use std::io::Write;
use std::path::Path;

const SINO_MAGIC: &str = "DYNACT-SINO";
const FIELD_MAGIC: &str = "DYNACT-FIELD";
const IMAGE_MAGIC: &str = "DYNACT-IMG";

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    if !path.exists() {
        return Err(Error::MissingInput(path.to_path_buf()));
    }
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn push_f64s(out: &mut Vec<u8>, values: &[f64]) {
    out.reserve(values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Header tokens and payload of a file with the given magic and version 1.
struct Parsed<'a> {
    kind: &'static str,
    path: &'a Path,
    fields: Vec<String>,
    payload: &'a [u8],
    cursor: usize,
}

impl<'a> Parsed<'a> {
    fn new(kind: &'static str, magic: &str, path: &'a Path, bytes: &'a [u8], fields: usize) -> Result<Self> {
        let bad = |reason: String| Error::Format {
            kind,
            path: path.to_path_buf(),
            reason,
        };
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| bad("missing header line".into()))?;
        let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| bad("header is not ASCII".into()))?;
        let mut tokens = header.split(' ');
        if tokens.next() != Some(magic) {
            return Err(bad(format!("expected magic {magic}")));
        }
        if tokens.next() != Some("v1") {
            return Err(bad("unsupported version".into()));
        }
        let rest: Vec<String> = tokens.map(str::to_string).collect();
        if rest.len() != fields {
            return Err(bad(format!("expected {fields} header fields, found {}", rest.len())));
        }
        Ok(Parsed {
            kind,
            path,
            fields: rest,
            payload: &bytes[nl + 1..],
            cursor: 0,
        })
    }

    fn error(&self, reason: impl Into<String>) -> Error {
        Error::Format {
            kind: self.kind,
            path: self.path.to_path_buf(),
            reason: reason.into(),
        }
    }

    fn usize(&self, k: usize) -> Result<usize> {
        self.fields[k]
            .parse()
            .map_err(|_| self.error(format!("header field {} is not an integer", k + 1)))
    }

    fn f64(&self, k: usize) -> Result<f64> {
        self.fields[k]
            .parse()
            .map_err(|_| self.error(format!("header field {} is not a number", k + 1)))
    }

    fn expect_len(&self, bytes: usize) -> Result<()> {
        if self.payload.len() != bytes {
            return Err(self.error(format!("payload has {} bytes, expected {bytes}", self.payload.len())));
        }
        Ok(())
    }

    fn f64s(&mut self, n: usize) -> Vec<f64> {
        let out = self.payload[self.cursor..self.cursor + 8 * n]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        self.cursor += 8 * n;
        out
    }

    fn bytes(&mut self, n: usize) -> &'a [u8] {
        let out = &self.payload[self.cursor..self.cursor + n];
        self.cursor += n;
        out
    }
}

pub fn sinogram_bytes(sino: &Sinogram) -> Vec<u8> {
    let g = &sino.geometry;
    let mut out = format!(
        "{SINO_MAGIC} v1 {} {} {} {} {} {}\n",
        g.num_angles, g.num_detectors, g.angle_start, g.angle_end, g.detector_min, g.detector_max
    )
    .into_bytes();
    push_f64s(&mut out, &sino.values);
    out
}

pub fn write_sinogram(path: &Path, sino: &Sinogram) -> Result<()> {
    write_file(path, &sinogram_bytes(sino))
}

/// Read a sinogram; the file does not carry the time map, so it is supplied.
pub fn read_sinogram(path: &Path, time_map: TimeMap) -> Result<Sinogram> {
    let bytes = read_file(path)?;
    let mut p = Parsed::new("sinogram", SINO_MAGIC, path, &bytes, 6)?;
    let geometry = ScanGeometry {
        num_angles: p.usize(0)?,
        num_detectors: p.usize(1)?,
        angle_start: p.f64(2)?,
        angle_end: p.f64(3)?,
        detector_min: p.f64(4)?,
        detector_max: p.f64(5)?,
        time_map,
    };
    geometry.validate().map_err(|e| p.error(e.to_string()))?;
    let n = geometry.num_angles * geometry.num_detectors;
    p.expect_len(8 * n)?;
    Ok(Sinogram {
        geometry,
        values: p.f64s(n),
    })
}

pub fn field_bytes(history: &DisplacementHistory) -> Vec<u8> {
    let (nx, ny) = (history.nx(), history.ny());
    let mut out = format!("{FIELD_MAGIC} v1 {nx} {ny} {}\n", history.snapshots.len()).into_bytes();
    push_f64s(&mut out, &history.x_coords);
    push_f64s(&mut out, &history.y_coords);
    out.extend(history.kinds.iter().map(|&k| k as u8));
    for s in &history.snapshots {
        push_f64s(&mut out, &[s.time]);
        push_f64s(&mut out, &s.u1);
        push_f64s(&mut out, &s.u2);
    }
    out
}

pub fn write_field(path: &Path, history: &DisplacementHistory) -> Result<()> {
    write_file(path, &field_bytes(history))
}

pub fn read_field(path: &Path) -> Result<DisplacementHistory> {
    let bytes = read_file(path)?;
    let mut p = Parsed::new("field", FIELD_MAGIC, path, &bytes, 3)?;
    let (nx, ny, ns) = (p.usize(0)?, p.usize(1)?, p.usize(2)?);
    let len = nx * ny;
    p.expect_len(8 * (nx + ny) + len + ns * 8 * (1 + 2 * len))?;
    let x_coords = p.f64s(nx);
    let y_coords = p.f64s(ny);
    let kinds = p
        .bytes(len)
        .iter()
        .map(|&b| NodeKind::from_byte(b).ok_or_else(|| p.error(format!("unknown node class {b}"))))
        .collect::<Result<Vec<_>>>()?;
    let snapshots = (0..ns)
        .map(|_| {
            let time = p.f64s(1)[0];
            Snapshot {
                time,
                u1: p.f64s(len),
                u2: p.f64s(len),
            }
        })
        .collect();
    Ok(DisplacementHistory {
        x_coords,
        y_coords,
        kinds,
        snapshots,
    })
}

/// Boundary observations in the field container: the grid header and node
/// classes as in a displacement file, then per time only the values at the
/// boundary nodes (row-major node order, all `u1` then all `u2`).
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryRecord {
    pub x_coords: Vec<f64>,
    pub y_coords: Vec<f64>,
    pub kinds: Vec<NodeKind>,
    pub times: Vec<f64>,
    /// Time-major, one entry per boundary node.
    pub values: Vec<Vec2>,
}

impl BoundaryRecord {
    pub fn num_boundary(&self) -> usize {
        self.kinds.iter().filter(|&&k| k == NodeKind::Boundary).count()
    }
}

pub fn boundary_field_bytes(rec: &BoundaryRecord) -> Vec<u8> {
    let (nx, ny) = (rec.x_coords.len(), rec.y_coords.len());
    let nb = rec.num_boundary();
    assert_eq!(
        rec.values.len(),
        nb * rec.times.len(),
        "boundary values do not match the node classes"
    );
    let mut out = format!("{FIELD_MAGIC} v1 {nx} {ny} {}\n", rec.times.len()).into_bytes();
    push_f64s(&mut out, &rec.x_coords);
    push_f64s(&mut out, &rec.y_coords);
    out.extend(rec.kinds.iter().map(|&k| k as u8));
    for (k, &t) in rec.times.iter().enumerate() {
        let level = &rec.values[k * nb..(k + 1) * nb];
        push_f64s(&mut out, &[t]);
        push_f64s(&mut out, &level.iter().map(|v| v.x).collect::<Vec<_>>());
        push_f64s(&mut out, &level.iter().map(|v| v.y).collect::<Vec<_>>());
    }
    out
}

pub fn write_boundary_field(path: &Path, rec: &BoundaryRecord) -> Result<()> {
    write_file(path, &boundary_field_bytes(rec))
}

pub fn read_boundary_field(path: &Path) -> Result<BoundaryRecord> {
    let bytes = read_file(path)?;
    let mut p = Parsed::new("boundary field", FIELD_MAGIC, path, &bytes, 3)?;
    let (nx, ny, ns) = (p.usize(0)?, p.usize(1)?, p.usize(2)?);
    let len = nx * ny;
    let head = 8 * (nx + ny) + len;
    if p.payload.len() < head {
        return Err(p.error("payload too short for the grid header"));
    }
    let x_coords = p.f64s(nx);
    let y_coords = p.f64s(ny);
    let kinds = p
        .bytes(len)
        .iter()
        .map(|&b| NodeKind::from_byte(b).ok_or_else(|| p.error(format!("unknown node class {b}"))))
        .collect::<Result<Vec<_>>>()?;
    let nb = kinds.iter().filter(|&&k| k == NodeKind::Boundary).count();
    p.expect_len(head + ns * 8 * (1 + 2 * nb))?;
    let mut times = Vec::with_capacity(ns);
    let mut values = Vec::with_capacity(ns * nb);
    for _ in 0..ns {
        times.push(p.f64s(1)[0]);
        let u1 = p.f64s(nb);
        let u2 = p.f64s(nb);
        values.extend(u1.into_iter().zip(u2).map(|(a, b)| Vec2::new(a, b)));
    }
    Ok(BoundaryRecord {
        x_coords,
        y_coords,
        kinds,
        times,
        values,
    })
}

pub fn image_bytes(img: &Image) -> Vec<u8> {
    let s = &img.spec;
    let mut out = format!(
        "{IMAGE_MAGIC} v1 {} {} {} {} {} {}\n",
        s.nx, s.ny, s.xmin, s.xmax, s.ymin, s.ymax
    )
    .into_bytes();
    push_f64s(&mut out, &img.values);
    out
}

pub fn write_image(path: &Path, img: &Image) -> Result<()> {
    write_file(path, &image_bytes(img))
}

pub fn read_image(path: &Path) -> Result<Image> {
    let bytes = read_file(path)?;
    let mut p = Parsed::new("image", IMAGE_MAGIC, path, &bytes, 6)?;
    let spec = ImageSpec {
        nx: p.usize(0)?,
        ny: p.usize(1)?,
        xmin: p.f64(2)?,
        xmax: p.f64(3)?,
        ymin: p.f64(4)?,
        ymax: p.f64(5)?,
    };
    spec.validate().map_err(|e| p.error(e.to_string()))?;
    p.expect_len(8 * spec.nx * spec.ny)?;
    Ok(Image {
        spec,
        values: p.f64s(spec.nx * spec.ny),
    })
}

/// 16-bit binary PGM, top row at the largest `y`. The grey window is
/// `[lo, hi]`, or the image range when `None`, and is recorded in a comment
/// line `# window <lo> <hi>`.
pub fn pgm_bytes(img: &Image, window: Option<(f64, f64)>) -> Vec<u8> {
    let (lo, hi) = window.unwrap_or_else(|| {
        img.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)))
    });
    let (nx, ny) = (img.spec.nx, img.spec.ny);
    let mut out = format!("P5\n# window {lo} {hi}\n{nx} {ny}\n65535\n").into_bytes();
    let span = hi - lo;
    for j in (0..ny).rev() {
        for i in 0..nx {
            let v = img.get(i, j);
            let g = if span > 0.0 {
                ((v - lo) / span).clamp(0.0, 1.0)
            } else {
                0.0
            };
            out.extend_from_slice(&((g * 65535.0).round() as u16).to_be_bytes());
        }
    }
    out
}

pub fn write_pgm(path: &Path, img: &Image, window: Option<(f64, f64)>) -> Result<()> {
    write_file(path, &pgm_bytes(img, window))
}
