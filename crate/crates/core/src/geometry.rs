use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

pub type Vec3 = [f64; 3];

#[inline]
pub fn norm(x: Vec3) -> f64 {
    (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
}

#[inline]
pub fn dist2(x: Vec3, y: Vec3) -> f64 {
    let d = [x[0] - y[0], x[1] - y[1], x[2] - y[2]];
    d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
}

#[inline]
pub fn max_abs(x: Vec3) -> f64 {
    x[0].abs().max(x[1].abs()).max(x[2].abs())
}

/// Axis-aligned box `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub lo: Vec3,
    pub hi: Vec3,
}

impl Aabb {
    pub fn new(lo: Vec3, hi: Vec3) -> Result<Self> {
        for i in 0..3 {
            if !(hi[i] - lo[i] > 0.0) || !lo[i].is_finite() || !hi[i].is_finite() {
                return domain(format!("degenerate window along axis {i}: [{}, {}]", lo[i], hi[i]));
            }
        }
        Ok(Aabb { lo, hi })
    }

    /// The cube `[-h, h]^3` shifted to `center`.
    pub fn cube(center: Vec3, half: f64) -> Result<Self> {
        Aabb::new(
            [center[0] - half, center[1] - half, center[2] - half],
            [center[0] + half, center[1] + half, center[2] + half],
        )
    }

    pub fn volume(&self) -> f64 {
        (0..3).map(|i| self.hi[i] - self.lo[i]).product()
    }

    pub fn contains(&self, x: Vec3) -> bool {
        (0..3).all(|i| x[i] >= self.lo[i] && x[i] <= self.hi[i])
    }

    pub fn contains_box(&self, other: &Aabb) -> bool {
        (0..3).all(|i| other.lo[i] >= self.lo[i] && other.hi[i] <= self.hi[i])
    }

    pub fn contains_ball(&self, c: Vec3, r: f64) -> bool {
        (0..3).all(|i| c[i] - r >= self.lo[i] && c[i] + r <= self.hi[i])
    }

    pub fn intersection_volume(&self, other: &Aabb) -> f64 {
        (0..3)
            .map(|i| (self.hi[i].min(other.hi[i]) - self.lo[i].max(other.lo[i])).max(0.0))
            .product()
    }
}

/// Domains centered at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Domain {
    Ball { radius: f64 },
    Box { half_width: f64 },
}

impl Domain {
    /// Closed-domain membership.
    pub fn contains(&self, x: Vec3) -> bool {
        match *self {
            Domain::Ball { radius } => norm(x) <= radius,
            Domain::Box { half_width } => max_abs(x) <= half_width,
        }
    }

    pub fn outer_radius(&self) -> f64 {
        match *self {
            Domain::Ball { radius } => radius,
            Domain::Box { half_width } => half_width * 3f64.sqrt(),
        }
    }
}
