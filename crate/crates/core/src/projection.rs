//! Analytic dynamic Radon data of a moving ellipse phantom, plus a
//! brute-force line quadrature used to check it.

use crate::error::{Error, Result};
use crate::geometry::{Mat2, Vec2};
use crate::phantom::{AffineMotion, Ellipse, PhantomSpec};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Affine map from source-position index to physical time: `t_n = start + n·step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeMap {
    pub start: f64,
    pub step: f64,
}

impl TimeMap {
    pub fn time(&self, n: usize) -> f64 {
        self.start + self.step * n as f64
    }

    /// Spread `num_angles` views over `periods` cycles of a motion with period `period`.
    pub fn covering(period: f64, periods: f64, num_angles: usize) -> Self {
        TimeMap {
            start: 0.0,
            step: periods * period / num_angles as f64,
        }
    }
}

/// Parallel-beam acquisition layout.
///
/// View `n` is taken at angle `angle_start + n·(angle_end − angle_start)/num_angles`
/// (end point excluded) and time `time_map.time(n)`. Detector bins sample
/// `[detector_min, detector_max]` including both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanGeometry {
    pub num_angles: usize,
    pub angle_start: f64,
    pub angle_end: f64,
    pub num_detectors: usize,
    pub detector_min: f64,
    pub detector_max: f64,
    pub time_map: TimeMap,
}

impl ScanGeometry {
    /// 660 views over half a turn, 451 bins on `[-1, 1]`, one breathing period.
    pub fn standard() -> Self {
        let period = crate::phantom::Breathing::default().period();
        ScanGeometry {
            num_angles: 660,
            angle_start: 0.0,
            angle_end: std::f64::consts::PI,
            num_detectors: 451,
            detector_min: -1.0,
            detector_max: 1.0,
            time_map: TimeMap::covering(period, 1.0, 660),
        }
    }

    pub fn angle_step(&self) -> f64 {
        (self.angle_end - self.angle_start) / self.num_angles as f64
    }

    pub fn angle(&self, n: usize) -> f64 {
        self.angle_start + self.angle_step() * n as f64
    }

    pub fn direction(&self, n: usize) -> Vec2 {
        Vec2::from_angle(self.angle(n))
    }

    pub fn time(&self, n: usize) -> f64 {
        self.time_map.time(n)
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.num_angles).map(|n| self.time(n)).collect()
    }

    pub fn detector_spacing(&self) -> f64 {
        (self.detector_max - self.detector_min) / (self.num_detectors - 1) as f64
    }

    pub fn detector(&self, m: usize) -> f64 {
        if m + 1 == self.num_detectors {
            self.detector_max
        } else {
            self.detector_min + self.detector_spacing() * m as f64
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        self.collect_errors(&mut errors);
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errors))
        }
    }

    pub(crate) fn collect_errors(&self, errors: &mut Vec<String>) {
        if self.num_angles < 1 {
            errors.push("scan: num_angles must be at least 1".into());
        }
        if self.num_detectors < 2 {
            errors.push("scan: num_detectors must be at least 2".into());
        }
        if !(self.detector_min < self.detector_max) {
            errors.push("scan: detector_min must be below detector_max".into());
        }
        if !(self.angle_start < self.angle_end) {
            errors.push("scan: angles must be strictly increasing (angle_start < angle_end)".into());
        }
        if !(self.time_map.start.is_finite() && self.time_map.step.is_finite()) {
            errors.push("scan: time map must be finite".into());
        }
    }
}

/// Dynamic Radon data `g(t_n, y_m)`, rows indexed by view.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    pub geometry: ScanGeometry,
    pub values: Vec<f64>,
}

impl Sinogram {
    pub fn zeros(geometry: ScanGeometry) -> Self {
        Sinogram {
            geometry,
            values: vec![0.0; geometry.num_angles * geometry.num_detectors],
        }
    }

    pub fn row(&self, n: usize) -> &[f64] {
        let w = self.geometry.num_detectors;
        &self.values[n * w..(n + 1) * w]
    }

    pub fn get(&self, n: usize, m: usize) -> f64 {
        self.values[n * self.geometry.num_detectors + m]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.geometry.num_detectors)
    }
}

/// Line integral of an ellipse's density along `{x : x·(cos θ, sin θ) = s}`.
pub fn radon_ellipse(e: &Ellipse, theta: f64, s: f64) -> f64 {
    radon_ellipse_dir(e, Vec2::from_angle(theta), s)
}

/// As [`radon_ellipse`] with the line normal given as a unit vector.
pub fn radon_ellipse_dir(e: &Ellipse, omega: Vec2, s: f64) -> f64 {
    let axis = Vec2::from_angle(e.rotation);
    let c = omega.dot(axis);
    let sn = omega.y * axis.x - omega.x * axis.y;
    let (a, b) = (e.semi_axes.x, e.semi_axes.y);
    let r2 = a * a * c * c + b * b * sn * sn;
    let d = s - e.center.dot(omega);
    let gap = r2 - d * d;
    if gap <= 0.0 {
        0.0
    } else {
        2.0 * e.density * a * b * gap.sqrt() / r2
    }
}

/// A measured line mapped back to the reference configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineTransform {
    pub omega: Vec2,
    pub s: f64,
    pub scale: f64,
}

/// Pull the line `{z : z·θ = y}` back through `Φx = Ax + b`.
///
/// For a mass-preserving object the line integral of `f_t` equals
/// `scale · (R f0)(omega, s)`.
pub fn transform_line(a: &Mat2, b: Vec2, theta: Vec2, y: f64) -> Result<LineTransform> {
    if a.inverse().is_none() {
        return Err(Error::InvalidArgument("transform_line: singular matrix".into()));
    }
    let at = a.transpose().apply(theta);
    let norm = at.norm();
    Ok(LineTransform {
        omega: Vec2::new(at.x / norm, at.y / norm),
        s: (y - b.dot(theta)) / norm,
        scale: 1.0 / norm,
    })
}

/// Radon data of the moving phantom for every (view, detector) pair.
pub fn simulate_scan(spec: &PhantomSpec, motion: &AffineMotion, geometry: &ScanGeometry) -> Result<Sinogram> {
    geometry.validate()?;
    let width = geometry.num_detectors;
    let mut values = vec![0.0; geometry.num_angles * width];
    values
        .par_chunks_mut(width)
        .enumerate()
        .try_for_each(|(n, row)| -> Result<()> {
            let t = geometry.time(n);
            let (a, b) = motion.affine(t);
            if a.inverse().is_none() {
                return Err(Error::SingularMotion { t });
            }
            let theta = geometry.direction(n);
            for (m, out) in row.iter_mut().enumerate() {
                let line = transform_line(&a, b, theta, geometry.detector(m))?;
                *out = spec
                    .ellipses
                    .iter()
                    .map(|e| line.scale * radon_ellipse_dir(e, line.omega, line.s))
                    .sum();
            }
            Ok(())
        })?;
    Ok(Sinogram {
        geometry: *geometry,
        values,
    })
}

/// Composite midpoint rule for `∫ f` along `{x·θ = s}` restricted to the
/// chord of the unit disk. The step is an upper bound on the node spacing.
pub fn radon_numeric_oracle<F>(f: F, theta: f64, s: f64, step: f64) -> f64
where
    F: Fn(Vec2) -> f64,
{
    assert!(step > 0.0, "quadrature step must be positive");
    if s.abs() >= 1.0 {
        return 0.0;
    }
    let half = (1.0 - s * s).sqrt();
    let n = ((2.0 * half / step).ceil() as usize).max(1);
    let h = 2.0 * half / n as f64;
    let dir = Vec2::from_angle(theta);
    let along = dir.perp();
    let base = s * dir;
    let mut sum = 0.0;
    for k in 0..n {
        let tau = -half + (k as f64 + 0.5) * h;
        sum += f(base + tau * along);
    }
    sum * h
}
