//! Image comparison against the rasterised initial state.

use crate::elastic::{Domain, EllipseDomain};
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::phantom::PhantomSpec;
use crate::recon::{Image, ImageSpec};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::collections::BTreeMap;

/// Samples per pixel along each axis when rasterising a phantom.
pub const SUPERSAMPLE: usize = 4;

/// Pixel-averaged `f0` on `spec` with `k × k` samples per pixel.
pub fn rasterize(phantom: &PhantomSpec, spec: &ImageSpec, k: usize) -> Image {
    let (hx, hy) = spec.spacing();
    let offsets: Vec<f64> = (0..k).map(|i| (i as f64 + 0.5) / k as f64 - 0.5).collect();
    let inv = 1.0 / (k * k) as f64;
    Image::from_fn(*spec, |p| {
        let mut acc = 0.0;
        for &oy in &offsets {
            for &ox in &offsets {
                acc += phantom.eval_f0(Vec2::new(p.x + ox * hx, p.y + oy * hy));
            }
        }
        acc * inv
    })
}

/// Error statistics over one pixel mask.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionStats {
    pub pixels: usize,
    pub rmse: f64,
    pub mean: f64,
    pub reference_mean: f64,
}

/// Artifact metrics of one reconstruction against the reference image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rmse: f64,
    pub relative_l2: f64,
    /// dB; infinite when the images agree.
    #[serde(serialize_with = "ser_psnr", deserialize_with = "de_psnr")]
    pub psnr: f64,
    pub regions: BTreeMap<String, RegionStats>,
}

fn ser_psnr<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() && *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

fn de_psnr<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }
    match Raw::deserialize(d)? {
        Raw::Num(v) => Ok(v),
        Raw::Text(t) if t == "inf" => Ok(f64::INFINITY),
        Raw::Text(t) => Err(serde::de::Error::custom(format!("unexpected psnr value {t:?}"))),
    }
}

/// A named pixel mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub name: String,
    pub mask: Vec<bool>,
}

impl Region {
    pub fn from_fn(name: &str, spec: &ImageSpec, inside: impl Fn(Vec2) -> bool) -> Self {
        Region {
            name: name.to_owned(),
            mask: spec.points().into_iter().map(inside).collect(),
        }
    }
}

/// Masks of the labelled phantom parts (`tumour`, `lung`, `spine`) plus
/// `interior`, the body ellipse shrunk by `interior_factor`.
pub fn phantom_regions(phantom: &PhantomSpec, spec: &ImageSpec, interior_factor: f64) -> Vec<Region> {
    let mut regions = Vec::new();
    for label in ["tumour", "lung", "spine"] {
        let parts: Vec<_> = phantom.by_label(label).collect();
        if !parts.is_empty() {
            regions.push(Region::from_fn(label, spec, |p| parts.iter().any(|e| e.contains(p))));
        }
    }
    if let Some(body) = phantom.by_label("body").next() {
        let inner = EllipseDomain::new(body.clone()).scaled(interior_factor);
        regions.push(Region::from_fn("interior", spec, |p| inner.contains(p)));
    }
    regions
}

fn check_same_grid(a: &Image, b: &Image) -> Result<()> {
    if a.spec != b.spec || a.values.len() != b.values.len() {
        return Err(Error::Mismatch(format!(
            "image grids differ: {}x{} on [{}, {}]x[{}, {}] vs {}x{} on [{}, {}]x[{}, {}]",
            a.spec.nx,
            a.spec.ny,
            a.spec.xmin,
            a.spec.xmax,
            a.spec.ymin,
            a.spec.ymax,
            b.spec.nx,
            b.spec.ny,
            b.spec.xmin,
            b.spec.xmax,
            b.spec.ymin,
            b.spec.ymax
        )));
    }
    Ok(())
}

pub fn rmse(a: &Image, b: &Image) -> Result<f64> {
    check_same_grid(a, b)?;
    let sum: f64 = a.values.iter().zip(&b.values).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((sum / a.values.len() as f64).sqrt())
}

pub fn region_stats(a: &Image, b: &Image, mask: &[bool]) -> Result<RegionStats> {
    check_same_grid(a, b)?;
    if mask.len() != a.values.len() {
        return Err(Error::Mismatch("region mask does not match the image".into()));
    }
    let (mut n, mut se, mut sa, mut sb) = (0usize, 0.0, 0.0, 0.0);
    for ((&x, &y), _) in a.values.iter().zip(&b.values).zip(mask).filter(|(_, &m)| m) {
        n += 1;
        se += (x - y) * (x - y);
        sa += x;
        sb += y;
    }
    let k = (n.max(1)) as f64;
    Ok(RegionStats {
        pixels: n,
        rmse: (se / k).sqrt(),
        mean: sa / k,
        reference_mean: sb / k,
    })
}

/// Compare `recon` with `reference`.
pub fn evaluate(recon: &Image, reference: &Image, regions: &[Region]) -> Result<MetricsReport> {
    let rmse = rmse(recon, reference)?;
    let diff2: f64 = recon
        .values
        .iter()
        .zip(&reference.values)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    let ref2: f64 = reference.values.iter().map(|y| y * y).sum();
    let relative_l2 = if ref2 > 0.0 {
        (diff2 / ref2).sqrt()
    } else if diff2 == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    let (lo, hi) = reference
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let range = hi - lo;
    let psnr = if rmse == 0.0 {
        f64::INFINITY
    } else if range > 0.0 {
        20.0 * (range / rmse).log10()
    } else {
        // a flat reference has no dynamic range; report the signal level instead
        20.0 * (hi.abs().max(f64::MIN_POSITIVE) / rmse).log10()
    };
    let regions = regions
        .iter()
        .map(|r| Ok((r.name.clone(), region_stats(recon, reference, &r.mask)?)))
        .collect::<Result<_>>()?;
    Ok(MetricsReport {
        rmse,
        relative_l2,
        psnr,
        regions,
    })
}
