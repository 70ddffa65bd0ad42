//! Conic-domain descriptors and the two distance weights.
//!
//! A 2-D wedge of opening `kappa` and orientation `alpha` is the open sector
//!
//! ```text
//! D = { (r cos t, r sin t) : r > 0, alpha - kappa/2 < t < alpha + kappa/2 }
//! ```
//!
//! with the vertex at the origin. Kernel estimates on such domains are
//! organized around two length scales: the distance to the vertex
//! `rho0(x) = |x|` and the distance to the boundary `rho(x) = dist(x, ∂D)`.
//! Normalized by `sqrt(tau)` and clamped at 1 they become the weights
//!
//! ```text
//! R = min(rho0/sqrt(tau), 1),   J = min(rho/sqrt(tau), 1),   J <= R <= 1,
//! ```
//!
//! since the vertex lies on the boundary. Both weights are invariant under
//! the parabolic scaling `(tau, x) -> (c^2 tau, c x)`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

const TWO_PI: f64 = 2.0 * PI;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("opening angle must lie strictly inside (0, 2pi), got {0}")]
    InvalidOpening(f64),
    #[error("point ({0}, {1}) is outside the open wedge")]
    OutsideDomain(f64, f64),
    #[error("time increment must be positive and finite, got {0}")]
    InvalidTau(f64),
}

/// A point in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const ORIGIN: Point2 = Point2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn from_polar(r: f64, theta: f64) -> Self {
        Point2 {
            x: r * theta.cos(),
            y: r * theta.sin(),
        }
    }

    /// Distance to the vertex, `rho0(x) = |x|`.
    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Polar angle in (-pi, pi].
    pub fn angle(&self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn dot(&self, other: Point2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the cross product.
    pub fn cross(&self, other: Point2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn dist(&self, other: Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn dist_squared(&self, other: Point2) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

impl std::ops::Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl std::ops::Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl std::ops::Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, s: f64) -> Point2 {
        Point2::new(self.x * s, self.y * s)
    }
}

/// The two clamped distance weights at a space-time scale.
///
/// `vertex` is `R = min(|x|/sqrt(tau), 1)` and `boundary` is
/// `J = min(rho(x)/sqrt(tau), 1)`; always `0 < J <= R <= 1` for interior
/// points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightPair {
    pub vertex: f64,
    pub boundary: f64,
}

/// Open angular sector of opening `kappa` in (0, 2pi), oriented so its
/// bisector points in direction `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wedge2D {
    kappa: f64,
    alpha: f64,
}

/// Wrap an angle into (-pi, pi].
fn wrap_angle(a: f64) -> f64 {
    let mut a = a % TWO_PI;
    if a > PI {
        a -= TWO_PI;
    } else if a <= -PI {
        a += TWO_PI;
    }
    a
}

impl Wedge2D {
    /// `kappa` must lie strictly in (0, 2pi); `alpha` is normalized to [0, 2pi).
    pub fn new(kappa: f64, alpha: f64) -> Result<Self, GeometryError> {
        if !(kappa > 0.0 && kappa < TWO_PI) || !kappa.is_finite() {
            return Err(GeometryError::InvalidOpening(kappa));
        }
        let alpha = alpha.rem_euclid(TWO_PI);
        Ok(Wedge2D { kappa, alpha })
    }

    /// Sector symmetric about the positive x-axis.
    pub fn symmetric(kappa: f64) -> Result<Self, GeometryError> {
        Wedge2D::new(kappa, 0.0)
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Signed angle of `p` relative to the bisector, in (-pi, pi].
    pub fn relative_angle(&self, p: Point2) -> f64 {
        wrap_angle(p.angle() - self.alpha)
    }

    /// Membership in the open sector. The origin and both edge rays are
    /// classified outside (the domain is open).
    pub fn contains(&self, p: Point2) -> bool {
        if !(p.norm() > 0.0) {
            return false;
        }
        self.relative_angle(p).abs() < 0.5 * self.kappa
    }

    /// Polar angle measured from the clockwise edge, in (0, kappa) for
    /// interior points. This is the angular coordinate the kernel series
    /// uses.
    pub fn angle_from_edge(&self, p: Point2) -> Result<f64, GeometryError> {
        if !self.contains(p) {
            return Err(GeometryError::OutsideDomain(p.x, p.y));
        }
        Ok(self.relative_angle(p) + 0.5 * self.kappa)
    }

    /// Point at radius `r` and angle `theta` from the clockwise edge.
    pub fn point_at(&self, r: f64, theta: f64) -> Point2 {
        Point2::from_polar(r, self.alpha - 0.5 * self.kappa + theta)
    }

    /// Directions of the two boundary rays.
    pub fn edge_directions(&self) -> [Point2; 2] {
        [
            Point2::from_polar(1.0, self.alpha - 0.5 * self.kappa),
            Point2::from_polar(1.0, self.alpha + 0.5 * self.kappa),
        ]
    }

    /// Distance to the boundary, `rho(x) = dist(x, ∂D)`.
    ///
    /// The boundary is the union of the two edge rays. Distance to a ray is
    /// the perpendicular distance when the orthogonal projection lands on the
    /// ray, and the distance to the vertex otherwise; for reflex wedges a
    /// point may project onto neither ray, in which case the vertex is the
    /// nearest boundary point.
    pub fn distance_to_boundary(&self, p: Point2) -> Result<f64, GeometryError> {
        if !self.contains(p) {
            return Err(GeometryError::OutsideDomain(p.x, p.y));
        }
        let mut best = p.norm();
        for u in self.edge_directions() {
            if p.dot(u) > 0.0 {
                best = best.min(p.cross(u).abs());
            }
        }
        Ok(best)
    }

    /// The weight pair `(R, J)` at scale `tau`.
    pub fn weights(&self, tau: f64, p: Point2) -> Result<WeightPair, GeometryError> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(GeometryError::InvalidTau(tau));
        }
        let sqrt_tau = tau.sqrt();
        let rho = self.distance_to_boundary(p)?;
        Ok(WeightPair {
            vertex: (p.norm() / sqrt_tau).min(1.0),
            boundary: (rho / sqrt_tau).min(1.0),
        })
    }
}

/// Spherical cap cone in 3-D: rays whose polar angle from the +z axis stays
/// below `kappa/2`. Only membership and the vertex distance are needed; the
/// cap enters the toolkit through its cross-section eigenvalue.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalCap3D {
    kappa: f64,
}

impl SphericalCap3D {
    pub fn new(kappa: f64) -> Result<Self, GeometryError> {
        if !(kappa > 0.0 && kappa < TWO_PI) || !kappa.is_finite() {
            return Err(GeometryError::InvalidOpening(kappa));
        }
        Ok(SphericalCap3D { kappa })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Polar half-opening of the cross-section cap.
    pub fn polar_opening(&self) -> f64 {
        0.5 * self.kappa
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        let r = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        if !(r > 0.0) {
            return false;
        }
        // theta < kappa/2 with theta = acos(z/r); the half-opening stays in
        // (0, pi) where cos is strictly decreasing, so compare cosines.
        p[2] / r > self.polar_opening().cos()
    }
}
