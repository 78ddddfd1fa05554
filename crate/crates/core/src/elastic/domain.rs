//! Implicit descriptions of the reference domain `Ω_x`.

use crate::geometry::Vec2;
use crate::phantom::Ellipse;

/// A closed planar region given by a level function.
pub trait Domain: Send + Sync {
    /// Negative inside, zero on the boundary, positive outside.
    fn level(&self, p: Vec2) -> f64;

    /// Boundary point on the segment from `inside` to `outside`.
    fn crossing(&self, inside: Vec2, outside: Vec2) -> Vec2 {
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            if self.level(inside + mid * (outside - inside)) <= 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        inside + lo * (outside - inside)
    }

    /// Closest point of the closed domain.
    fn project(&self, p: Vec2) -> Vec2;

    /// Angle used to walk the boundary in order.
    fn boundary_angle(&self, p: Vec2) -> f64;

    fn contains(&self, p: Vec2) -> bool {
        self.level(p) <= 0.0
    }
}

/// Elliptic domain; the default `Ω_x` is the body ellipse of the phantom.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipseDomain {
    pub shape: Ellipse,
}

impl EllipseDomain {
    pub fn new(shape: Ellipse) -> Self {
        EllipseDomain { shape }
    }

    /// The same ellipse with both semi-axes scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut shape = self.shape.clone();
        shape.semi_axes = factor * shape.semi_axes;
        EllipseDomain { shape }
    }
}

impl Domain for EllipseDomain {
    fn level(&self, p: Vec2) -> f64 {
        self.shape.quadratic_form(p) - 1.0
    }

    fn crossing(&self, inside: Vec2, outside: Vec2) -> Vec2 {
        let (ea, eb) = (self.shape.semi_axes.x, self.shape.semi_axes.y);
        let a = self.shape.to_local(inside);
        let b = self.shape.to_local(outside);
        let d = b - a;
        let qa = (d.x / ea).powi(2) + (d.y / eb).powi(2);
        let qb = a.x * d.x / (ea * ea) + a.y * d.y / (eb * eb);
        let qc = (a.x / ea).powi(2) + (a.y / eb).powi(2) - 1.0;
        if qa == 0.0 {
            return inside;
        }
        let disc = (qb * qb - qa * qc).max(0.0).sqrt();
        // larger root of qa·τ² + 2qb·τ + qc = 0, written to avoid cancellation
        let tau = if qb <= 0.0 {
            (-qb + disc) / qa
        } else {
            -qc / (qb + disc)
        };
        let tau = tau.clamp(0.0, 1.0);
        self.shape.from_local(a + tau * d)
    }

    fn project(&self, p: Vec2) -> Vec2 {
        if self.shape.quadratic_form(p) <= 1.0 {
            return p;
        }
        let q = self.shape.to_local(p);
        let e = [self.shape.semi_axes.x, self.shape.semi_axes.y];
        let y = [q.x, q.y];
        // closest point x_i = e_i² y_i / (t + e_i²) with t > 0 the root of
        // Σ (e_i y_i / (t + e_i²))² = 1
        let g = |t: f64| -> f64 { (0..2).map(|i| (e[i] * y[i] / (t + e[i] * e[i])).powi(2)).sum::<f64>() - 1.0 };
        let mut lo = 0.0f64;
        let mut hi = (0..2)
            .map(|i| std::f64::consts::SQRT_2 * e[i] * y[i].abs())
            .fold(0.0, f64::max)
            .max(1e-300);
        while g(hi) > 0.0 {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            if g(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t = 0.5 * (lo + hi);
        let local = Vec2::new(
            e[0] * e[0] * y[0] / (t + e[0] * e[0]),
            e[1] * e[1] * y[1] / (t + e[1] * e[1]),
        );
        self.shape.from_local(local)
    }

    fn boundary_angle(&self, p: Vec2) -> f64 {
        let q = self.shape.to_local(p);
        let a = (q.y / self.shape.semi_axes.y).atan2(q.x / self.shape.semi_axes.x);
        a.rem_euclid(std::f64::consts::TAU)
    }
}

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RectDomain {
    pub min: Vec2,
    pub max: Vec2,
}

impl RectDomain {
    pub fn new(min: Vec2, max: Vec2) -> Self {
        RectDomain { min, max }
    }
}

impl Domain for RectDomain {
    fn level(&self, p: Vec2) -> f64 {
        let dx = (self.min.x - p.x).max(p.x - self.max.x);
        let dy = (self.min.y - p.y).max(p.y - self.max.y);
        dx.max(dy)
    }

    fn project(&self, p: Vec2) -> Vec2 {
        Vec2::new(p.x.clamp(self.min.x, self.max.x), p.y.clamp(self.min.y, self.max.y))
    }

    fn boundary_angle(&self, p: Vec2) -> f64 {
        let c = 0.5 * (self.min + self.max);
        (p.y - c.y).atan2(p.x - c.x).rem_euclid(std::f64::consts::TAU)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn body() -> EllipseDomain {
        EllipseDomain::new(Ellipse::new(Vec2::new(0.05, -0.02), Vec2::new(0.8, 0.6), 0.3, 1.0))
    }

    #[test]
    fn crossing_lies_on_boundary() {
        let d = body();
        let c = d.crossing(Vec2::new(0.1, 0.0), Vec2::new(1.0, 0.0));
        assert!(d.level(c).abs() < 1e-12);
        let c = d.crossing(Vec2::new(0.0, 0.1), Vec2::new(0.0, -0.9));
        assert!(d.level(c).abs() < 1e-12);
        let generic =
            RectDomain::new(Vec2::new(-0.5, -0.5), Vec2::new(0.5, 0.5)).crossing(Vec2::ZERO, Vec2::new(0.9, 0.0));
        assert!((generic.x - 0.5).abs() < 1e-15);
    }

    #[test]
    fn projection_is_closest_point() {
        let d = body();
        let p = Vec2::new(0.95, 0.7);
        let q = d.project(p);
        assert!(d.level(q).abs() < 1e-12);
        // brute force over the boundary
        let best = (0..200_000)
            .map(|k| d.shape.boundary_point(std::f64::consts::TAU * k as f64 / 200_000.0))
            .map(|b| (b - p).norm())
            .fold(f64::INFINITY, f64::min);
        assert!(((q - p).norm() - best).abs() < 1e-9);
        let inside = Vec2::new(0.1, 0.1);
        assert_eq!(d.project(inside), inside);
    }

    #[test]
    fn projection_on_axis() {
        let d = EllipseDomain::new(Ellipse::new(Vec2::ZERO, Vec2::new(0.8, 0.5), 0.0, 1.0));
        let q = d.project(Vec2::new(2.0, 0.0));
        assert!((q - Vec2::new(0.8, 0.0)).norm() < 1e-12);
        let q = d.project(Vec2::new(0.0, -3.0));
        assert!((q - Vec2::new(0.0, -0.5)).norm() < 1e-12);
    }
}
