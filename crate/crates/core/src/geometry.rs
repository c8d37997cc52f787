use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Wraps an angle into `(-π, π]`.
pub fn normalize_angle(theta: f64) -> f64 {
    let mut a = theta % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }
}

/// Planar robot pose. `theta` is kept in `(-π, π]` by the constructors.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    /// Applies a displacement expressed in this pose's body frame.
    pub fn compose(&self, dx: f64, dy: f64, dtheta: f64) -> Pose {
        let (s, c) = self.theta.sin_cos();
        Pose::new(
            self.x + c * dx - s * dy,
            self.y + s * dx + c * dy,
            self.theta + dtheta,
        )
    }

    /// Displacement from `self` to `other`, expressed in `self`'s body frame.
    pub fn delta_to(&self, other: &Pose) -> (f64, f64, f64) {
        let (s, c) = self.theta.sin_cos();
        let gx = other.x - self.x;
        let gy = other.y - self.y;
        (
            c * gx + s * gy,
            -s * gx + c * gy,
            normalize_angle(other.theta - self.theta),
        )
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }
}

/// Axis-aligned box standing on the floor or floating; used for walls and
/// obstacles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb3 {
    pub min: Point3,
    pub max: Point3,
}

impl Aabb3 {
    pub fn new(min: Point3, max: Point3) -> Self {
        Self { min, max }
    }

    pub fn height(&self) -> f64 {
        self.max.z
    }

    pub fn has_positive_extent(&self) -> bool {
        self.max.x > self.min.x && self.max.y > self.min.y && self.max.z > self.min.z
    }

    /// Closed point-in-footprint test on the 2D projection.
    pub fn footprint_contains(&self, x: f64, y: f64) -> bool {
        x >= self.min.x && x <= self.max.x && y >= self.min.y && y <= self.max.y
    }

    /// Distance from a point to the 2D footprint (0 inside).
    pub fn footprint_distance(&self, x: f64, y: f64) -> f64 {
        let dx = (self.min.x - x).max(0.0).max(x - self.max.x);
        let dy = (self.min.y - y).max(0.0).max(y - self.max.y);
        dx.hypot(dy)
    }

    /// Slab-method clip of the parametric segment `p0 + t (p1 - p0)` against
    /// the closed box. Returns the `[t_enter, t_exit]` interval, unclamped to
    /// the segment, or `None` when the supporting line misses the box.
    pub fn slab_interval(&self, p0: &Point3, p1: &Point3) -> Option<(f64, f64)> {
        let origin = [p0.x, p0.y, p0.z];
        let dir = [p1.x - p0.x, p1.y - p0.y, p1.z - p0.z];
        let lo = [self.min.x, self.min.y, self.min.z];
        let hi = [self.max.x, self.max.y, self.max.z];
        let mut t_enter = f64::NEG_INFINITY;
        let mut t_exit = f64::INFINITY;
        for k in 0..3 {
            if dir[k] == 0.0 {
                if origin[k] < lo[k] || origin[k] > hi[k] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / dir[k];
            let mut t0 = (lo[k] - origin[k]) * inv;
            let mut t1 = (hi[k] - origin[k]) * inv;
            if t0 > t1 {
                std::mem::swap(&mut t0, &mut t1);
            }
            t_enter = t_enter.max(t0);
            t_exit = t_exit.min(t1);
            if t_enter > t_exit {
                return None;
            }
        }
        Some((t_enter, t_exit))
    }

    /// True when the open segment `(p0, p1)` touches the box, faces included.
    pub fn intersects_open_segment(&self, p0: &Point3, p1: &Point3) -> bool {
        match self.slab_interval(p0, p1) {
            Some((t_enter, t_exit)) => t_exit > 0.0 && t_enter < 1.0,
            None => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_keeps_pi_and_maps_minus_pi() {
        assert_eq!(normalize_angle(PI), PI);
        assert!((normalize_angle(-PI) - PI).abs() < 1e-12);
        assert!((normalize_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((normalize_angle(0.5) - 0.5).abs() < 1e-15);
        assert!((normalize_angle(-2.0 * PI - 0.25) + 0.25).abs() < 1e-12);
    }

    #[test]
    fn compose_and_delta_are_inverse() {
        let a = Pose::new(1.0, -2.0, 0.7);
        let b = a.compose(0.3, -0.1, 0.2);
        let (dx, dy, dt) = a.delta_to(&b);
        assert!((dx - 0.3).abs() < 1e-12);
        assert!((dy + 0.1).abs() < 1e-12);
        assert!((dt - 0.2).abs() < 1e-12);
    }

    #[test]
    fn slab_segment_cases() {
        let b = Aabb3::new(Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 1.0, 1.0));
        // straight through
        assert!(b.intersects_open_segment(&Point3::new(-1.0, 0.5, 0.5), &Point3::new(2.0, 0.5, 0.5)));
        // passes above
        assert!(!b.intersects_open_segment(&Point3::new(-1.0, 0.5, 1.5), &Point3::new(2.0, 0.5, 1.2)));
        // grazes the top face
        assert!(b.intersects_open_segment(&Point3::new(-1.0, 0.5, 1.0), &Point3::new(2.0, 0.5, 1.0)));
        // stops short
        assert!(!b.intersects_open_segment(&Point3::new(-2.0, 0.5, 0.5), &Point3::new(-0.5, 0.5, 0.5)));
    }
}
