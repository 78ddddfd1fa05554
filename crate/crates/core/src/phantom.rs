//! Analytic ellipse phantoms, the affine breathing motion and the
//! mass-preserving time-dependent object built from them.

use crate::error::{Error, Result};
use crate::geometry::{Mat2, Vec2};
use serde::{Deserialize, Serialize};

/// Ellipse with constant additive density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    /// Optional role tag (`body`, `lung`, `spine`, `tumour`, ...).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub center: Vec2,
    pub semi_axes: Vec2,
    /// Rotation of the first semi-axis against the x axis, radians.
    #[serde(default)]
    pub rotation: f64,
    pub density: f64,
}

impl Ellipse {
    pub fn new(center: Vec2, semi_axes: Vec2, rotation: f64, density: f64) -> Self {
        Ellipse {
            label: None,
            center,
            semi_axes,
            rotation,
            density,
        }
    }

    pub fn disk(center: Vec2, radius: f64, density: f64) -> Self {
        Ellipse::new(center, Vec2::new(radius, radius), 0.0, density)
    }

    pub fn with_label(mut self, label: &str) -> Self {
        self.label = Some(label.to_owned());
        self
    }

    /// Coordinates of `p` in the ellipse frame (centered, axis aligned).
    pub fn to_local(&self, p: Vec2) -> Vec2 {
        let d = p - self.center;
        let (s, c) = self.rotation.sin_cos();
        Vec2::new(c * d.x + s * d.y, -s * d.x + c * d.y)
    }

    pub fn from_local(&self, q: Vec2) -> Vec2 {
        let (s, c) = self.rotation.sin_cos();
        self.center + Vec2::new(c * q.x - s * q.y, s * q.x + c * q.y)
    }

    /// Quadratic form; `<= 1` inside.
    pub fn quadratic_form(&self, p: Vec2) -> f64 {
        let q = self.to_local(p);
        (q.x / self.semi_axes.x).powi(2) + (q.y / self.semi_axes.y).powi(2)
    }

    pub fn contains(&self, p: Vec2) -> bool {
        self.quadratic_form(p) <= 1.0
    }

    /// Point on the boundary at parameter angle `s`.
    pub fn boundary_point(&self, s: f64) -> Vec2 {
        let (sn, cs) = s.sin_cos();
        self.from_local(Vec2::new(self.semi_axes.x * cs, self.semi_axes.y * sn))
    }

    pub fn area(&self) -> f64 {
        std::f64::consts::PI * self.semi_axes.x * self.semi_axes.y
    }

    pub(crate) fn validate(&self, errors: &mut Vec<String>, ctx: &str) {
        if !(self.semi_axes.x > 0.0 && self.semi_axes.y > 0.0) {
            errors.push(format!("{ctx}: semi_axes must be positive"));
        }
        if !self.density.is_finite() {
            errors.push(format!("{ctx}: density must be finite"));
        }
        if !self.center.is_finite() || !self.rotation.is_finite() {
            errors.push(format!("{ctx}: center and rotation must be finite"));
        }
    }
}

/// Piecewise-constant object: densities add where ellipses overlap.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub ellipses: Vec<Ellipse>,
}

impl PhantomSpec {
    pub fn new(ellipses: Vec<Ellipse>) -> Self {
        PhantomSpec { ellipses }
    }

    /// Point evaluation of the initial state `f0`.
    pub fn eval_f0(&self, x: Vec2) -> f64 {
        self.ellipses.iter().filter(|e| e.contains(x)).map(|e| e.density).sum()
    }

    /// Mass-preserving time-dependent object `f0(Φ_t⁻¹x)·|det DΦ_t⁻¹|`.
    pub fn eval_ft(&self, motion: &AffineMotion, t: f64, x: Vec2) -> Result<f64> {
        let (a, _) = motion.affine(t);
        let det = a.det();
        let x0 = motion.phi_inverse(t, x)?;
        Ok(self.eval_f0(x0) / det.abs())
    }

    pub fn by_label<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a Ellipse> + 'a {
        self.ellipses.iter().filter(move |e| e.label.as_deref() == Some(label))
    }

    pub fn total_mass(&self) -> f64 {
        self.ellipses.iter().map(|e| e.density * e.area()).sum()
    }

    /// Largest radius reached by any sampled boundary point of any ellipse
    /// moved by `motion` at any of `times`.
    pub fn max_moved_radius(&self, motion: &AffineMotion, times: &[f64], samples: usize) -> f64 {
        let mut r = 0.0f64;
        for &t in times {
            for e in &self.ellipses {
                for k in 0..samples {
                    let s = std::f64::consts::TAU * k as f64 / samples as f64;
                    r = r.max(motion.phi(t, e.boundary_point(s)).norm());
                }
            }
        }
        r
    }

    pub(crate) fn validate(&self, errors: &mut Vec<String>) {
        if self.ellipses.is_empty() {
            errors.push("phantom: at least one ellipse is required".into());
        }
        for (i, e) in self.ellipses.iter().enumerate() {
            e.validate(errors, &format!("phantom.ellipses[{i}]"));
        }
    }
}

/// Parameters of the breathing model
/// `s(t) = amplitude·cos(frequency·t) + offset`,
/// `Φ(t,x) = diag(1/s, s)·(x − (drift_coeff·(s − 1), 0))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Breathing {
    pub amplitude: f64,
    pub frequency: f64,
    pub offset: f64,
    pub drift_coeff: f64,
}

impl Default for Breathing {
    fn default() -> Self {
        Breathing {
            amplitude: 0.05,
            frequency: 0.04,
            offset: 0.95,
            drift_coeff: 0.44,
        }
    }
}

impl Breathing {
    pub fn scale_factor(&self, t: f64) -> f64 {
        self.amplitude * (self.frequency * t).cos() + self.offset
    }

    /// Length of one breathing cycle.
    pub fn period(&self) -> f64 {
        std::f64::consts::TAU / self.frequency
    }
}

/// Time-dependent affine deformation `Φ(t,x) = A(t)x + b(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AffineMotion {
    Identity,
    Breathing(Breathing),
    /// Time-independent affine map.
    Fixed {
        matrix: Mat2,
        shift: Vec2,
    },
}

/// `Φ_t` at one fixed time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FrozenMotion {
    Identity,
    Breathing { s: f64, shift: f64 },
    Fixed { matrix: Mat2, shift: Vec2 },
}

impl FrozenMotion {
    pub fn apply(&self, x: Vec2) -> Vec2 {
        match *self {
            FrozenMotion::Identity => x,
            FrozenMotion::Breathing { s, shift } => Vec2::new((x.x - shift) / s, s * x.y),
            FrozenMotion::Fixed { matrix, shift } => matrix.apply(x) + shift,
        }
    }
}

impl Default for AffineMotion {
    fn default() -> Self {
        AffineMotion::Breathing(Breathing::default())
    }
}

impl AffineMotion {
    /// `A(t)` and `b(t)`.
    pub fn affine(&self, t: f64) -> (Mat2, Vec2) {
        match self {
            AffineMotion::Identity => (Mat2::IDENTITY, Vec2::ZERO),
            AffineMotion::Breathing(p) => {
                let s = p.scale_factor(t);
                let a = Mat2::diag(1.0 / s, s);
                let b = Vec2::new(-p.drift_coeff * (s - 1.0) / s, 0.0);
                (a, b)
            }
            AffineMotion::Fixed { matrix, shift } => (*matrix, *shift),
        }
    }

    pub fn phi(&self, t: f64, x: Vec2) -> Vec2 {
        self.at(t).apply(x)
    }

    /// `Φ_t` with the time-dependent coefficients evaluated once.
    pub fn at(&self, t: f64) -> FrozenMotion {
        match self {
            AffineMotion::Identity => FrozenMotion::Identity,
            AffineMotion::Breathing(p) => {
                let s = p.scale_factor(t);
                FrozenMotion::Breathing {
                    s,
                    shift: p.drift_coeff * (s - 1.0),
                }
            }
            AffineMotion::Fixed { matrix, shift } => FrozenMotion::Fixed {
                matrix: *matrix,
                shift: *shift,
            },
        }
    }

    pub fn phi_inverse(&self, t: f64, x: Vec2) -> Result<Vec2> {
        match self {
            AffineMotion::Identity => Ok(x),
            AffineMotion::Breathing(p) => {
                let s = p.scale_factor(t);
                if s == 0.0 || !s.is_finite() {
                    return Err(Error::SingularMotion { t });
                }
                Ok(Vec2::new(s * x.x + p.drift_coeff * (s - 1.0), x.y / s))
            }
            AffineMotion::Fixed { matrix, shift } => {
                let inv = matrix.inverse().ok_or(Error::SingularMotion { t })?;
                Ok(inv.apply(x - *shift))
            }
        }
    }

    /// Jacobian determinant of `Φ_t`.
    pub fn jacobian_det(&self, t: f64) -> f64 {
        self.affine(t).0.det()
    }

    pub(crate) fn validate(&self, errors: &mut Vec<String>) {
        match self {
            AffineMotion::Identity => {}
            AffineMotion::Breathing(p) => {
                let vals = [p.amplitude, p.frequency, p.offset, p.drift_coeff];
                if vals.iter().any(|v| !v.is_finite()) {
                    errors.push("motion: parameters must be finite".into());
                }
                if p.offset.abs() <= p.amplitude.abs() {
                    errors.push("motion: |offset| must exceed |amplitude| so that s(t) never vanishes".into());
                }
                if p.frequency <= 0.0 {
                    errors.push("motion: frequency must be positive".into());
                }
            }
            AffineMotion::Fixed { matrix, .. } => {
                if matrix.inverse().is_none() {
                    errors.push("motion: fixed matrix is singular".into());
                }
            }
        }
    }
}
