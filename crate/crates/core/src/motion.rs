//! Odometry motion models.
//!
//! Each odometry source is reduced to a per-step [`MotionIncrement`]; particles
//! are then advanced with [`propagate`], which rotates first and translates
//! along the new heading.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::geom::{angular_displacement, project_onto_heading, wrap_angle, Pose2D, Vec2};

/// Signed forward translation and heading change over one step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MotionIncrement {
    pub forward: f64,
    pub dtheta: f64,
}

impl MotionIncrement {
    pub fn new(forward: f64, dtheta: f64) -> Self {
        Self { forward, dtheta: wrap_angle(dtheta) }
    }
}

/// Per-step Gaussian noise: a term proportional to the increment magnitude
/// with an absolute floor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionNoise {
    pub sigma_forward_per_meter: f64,
    pub sigma_forward_floor: f64,
    pub sigma_dtheta_per_rad: f64,
    pub sigma_dtheta_floor: f64,
}

impl Default for MotionNoise {
    fn default() -> Self {
        Self {
            sigma_forward_per_meter: 0.05,
            sigma_forward_floor: 0.002,
            sigma_dtheta_per_rad: 0.05,
            sigma_dtheta_floor: 0.002,
        }
    }
}

impl MotionNoise {
    pub const ZERO: MotionNoise = MotionNoise {
        sigma_forward_per_meter: 0.0,
        sigma_forward_floor: 0.0,
        sigma_dtheta_per_rad: 0.0,
        sigma_dtheta_floor: 0.0,
    };

    pub fn forward_sigma(&self, forward: f64) -> f64 {
        self.sigma_forward_floor.max(self.sigma_forward_per_meter * forward.abs())
    }

    pub fn dtheta_sigma(&self, dtheta: f64) -> f64 {
        self.sigma_dtheta_floor.max(self.sigma_dtheta_per_rad * dtheta.abs())
    }

    pub fn is_valid(&self) -> bool {
        [self.sigma_forward_per_meter, self.sigma_forward_floor, self.sigma_dtheta_per_rad, self.sigma_dtheta_floor]
            .iter()
            .all(|s| s.is_finite() && *s >= 0.0)
    }
}

/// Which odometry source drives the motion model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OdometryMode {
    /// Wheel encoders for both translation and rotation.
    Wheel,
    /// Wheel translation, rotation from orientation-sensor differences.
    WheelImu,
    /// Camera forward translation, rotation from orientation-sensor differences.
    Visual,
    /// Differenced GNSS fixes projected on the heading, rotation from the
    /// orientation sensor.
    Gnss,
}

impl OdometryMode {
    /// Table order.
    pub const ALL: [OdometryMode; 4] =
        [OdometryMode::Wheel, OdometryMode::WheelImu, OdometryMode::Visual, OdometryMode::Gnss];

    pub fn as_str(self) -> &'static str {
        match self {
            OdometryMode::Wheel => "wheel",
            OdometryMode::WheelImu => "wheel_imu",
            OdometryMode::Visual => "visual",
            OdometryMode::Gnss => "gnss",
        }
    }

    /// Whether the mode carries an orientation sensor, and so weights
    /// particles on its heading. Plain wheel odometry does not.
    pub fn uses_orientation(self) -> bool {
        self != OdometryMode::Wheel
    }

    /// Row label used in printed tables.
    pub fn label(self) -> &'static str {
        match self {
            OdometryMode::Wheel => "Wheel",
            OdometryMode::WheelImu => "Wheel w/ IMU",
            OdometryMode::Visual => "Visual",
            OdometryMode::Gnss => "GNSS",
        }
    }
}

impl fmt::Display for OdometryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OdometryMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        OdometryMode::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| format!("unknown odometry mode {s:?}"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdometryConfig {
    pub mode: OdometryMode,
    pub noise: MotionNoise,
}

pub fn wheel_increment(dist: f64, wheel_dtheta: f64) -> MotionIncrement {
    MotionIncrement::new(dist, wheel_dtheta)
}

pub fn wheel_imu_increment(dist: f64, prev_heading: f64, curr_heading: f64) -> MotionIncrement {
    MotionIncrement::new(dist, angular_displacement(prev_heading, curr_heading))
}

/// `forward` is the already-projected forward component from the camera.
pub fn visual_increment(forward: f64, prev_heading: f64, curr_heading: f64) -> MotionIncrement {
    MotionIncrement::new(forward, angular_displacement(prev_heading, curr_heading))
}

/// Keeps only the part of the fix-to-fix displacement parallel to `heading`;
/// a bias shared by both fixes cancels.
pub fn gnss_increment(prev_fix: Vec2, curr_fix: Vec2, heading: f64, prev_heading: f64) -> MotionIncrement {
    MotionIncrement::new(
        project_onto_heading(curr_fix - prev_fix, heading),
        angular_displacement(prev_heading, heading),
    )
}

/// Applies a noiseless increment: rotate, then translate along the new heading.
pub fn apply_increment(pose: &Pose2D, forward: f64, dtheta: f64) -> Pose2D {
    let theta = wrap_angle(pose.theta + dtheta);
    let (s, c) = theta.sin_cos();
    Pose2D { x: pose.x + forward * c, y: pose.y + forward * s, theta }
}

/// Samples a successor pose from the odometry increment.
pub fn propagate<R: Rng + ?Sized>(pose: &Pose2D, inc: &MotionIncrement, noise: &MotionNoise, rng: &mut R) -> Pose2D {
    let sf = noise.forward_sigma(inc.forward);
    let sd = noise.dtheta_sigma(inc.dtheta);
    let forward = if sf > 0.0 {
        let z: f64 = StandardNormal.sample(rng);
        inc.forward + sf * z
    } else {
        inc.forward
    };
    let dtheta = if sd > 0.0 {
        let z: f64 = StandardNormal.sample(rng);
        inc.dtheta + sd * z
    } else {
        inc.dtheta
    };
    apply_increment(pose, forward, dtheta)
}

/// Exact inverse of a noiseless [`propagate`] step.
pub fn unpropagate(pose: &Pose2D, inc: &MotionIncrement) -> Pose2D {
    let (s, c) = pose.theta.sin_cos();
    Pose2D { x: pose.x - inc.forward * c, y: pose.y - inc.forward * s, theta: wrap_angle(pose.theta - inc.dtheta) }
}
