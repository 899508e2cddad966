//! Planar geometry shared by the whole crate.
//!
//! Angles are radians, measured counter-clockwise from the map +x axis, and
//! are kept in the half-open interval (-π, π].

use std::f64::consts::{PI, TAU};
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// Map-frame displacement or position, in meters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Unit vector pointing along `heading`.
    pub fn from_heading(heading: f64) -> Self {
        let (s, c) = heading.sin_cos();
        Self { x: c, y: s }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z component of the 3D cross product.
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    /// Counter-clockwise rotation by `angle`.
    pub fn rotated(self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self { x: c * self.x - s * self.y, y: s * self.x + c * self.y }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

/// Planar pose of the vehicle or of a particle.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2D {
    /// Builds a pose, normalizing `theta` into (-π, π].
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta: wrap_angle(theta) }
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn heading(&self) -> Vec2 {
        Vec2::from_heading(self.theta)
    }

    pub fn distance_to(&self, other: &Pose2D) -> f64 {
        (self.position() - other.position()).norm()
    }

    /// Expresses a map-frame point in this pose's body frame (x forward, y left).
    pub fn to_local(&self, point: Vec2) -> Vec2 {
        (point - self.position()).rotated(-self.theta)
    }

    /// Maps a body-frame point into the map frame.
    pub fn to_map(&self, local: Vec2) -> Vec2 {
        self.position() + local.rotated(self.theta)
    }
}

/// Normalizes an angle into (-π, π].
///
/// Panics on non-finite input: a NaN heading means an upstream contract was
/// already broken.
pub fn wrap_angle(raw: f64) -> f64 {
    assert!(raw.is_finite(), "wrap_angle: non-finite angle {raw}");
    if raw > -PI && raw <= PI {
        return raw;
    }
    let r = raw.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Signed shortest rotation taking `prev_heading` to `curr_heading`.
pub fn angular_displacement(prev_heading: f64, curr_heading: f64) -> f64 {
    wrap_angle(curr_heading - prev_heading)
}

/// Signed component of `disp` along `heading`; negative means backward.
pub fn project_onto_heading(disp: Vec2, heading: f64) -> f64 {
    disp.dot(Vec2::from_heading(heading))
}

/// Weighted circular mean of headings. Returns 0 when the resultant vanishes.
pub fn circular_mean<I>(headings: I) -> f64
where
    I: IntoIterator<Item = (f64, f64)>,
{
    let (s, c) = headings.into_iter().fold((0.0, 0.0), |(s, c), (theta, w)| (s + w * theta.sin(), c + w * theta.cos()));
    if s == 0.0 && c == 0.0 {
        0.0
    } else {
        wrap_angle(s.atan2(c))
    }
}
