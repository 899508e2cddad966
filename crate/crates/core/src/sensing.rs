//! Synthetic sensors and the observation likelihoods used for particle weighting.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::geom::{angular_displacement, wrap_angle, Pose2D, Vec2};
use crate::map::{FieldOfView, FovHit, OrchardMap};

/// Standard deviation of the orientation weighting density.
pub const ORIENTATION_SIGMA_W: f64 = 0.4;
/// Smallest width the trunk sensor reports.
pub const MIN_OBSERVED_WIDTH: f64 = 0.005;

/// One detected trunk: range and bearing from the camera, bearing relative
/// to the view axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrunkObservation {
    pub range: f64,
    pub bearing: f64,
    pub width: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    pub fov_half_angle: f64,
    pub max_range: f64,
    pub view_bearing_offset: f64,
    pub sigma_range: f64,
    pub sigma_bearing: f64,
    pub sigma_width: f64,
    pub detect_prob: f64,
    /// Noise of the orientation sensor itself (not the weighting sigma).
    pub orientation_sigma: f64,
    pub gnss_sigma: f64,
    pub gnss_bias_step_sigma: f64,
    pub gnss_bias_clamp: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            fov_half_angle: 30f64.to_radians(),
            max_range: 4.0,
            view_bearing_offset: PI / 2.0,
            sigma_range: 0.05,
            sigma_bearing: 0.02,
            sigma_width: 0.008,
            detect_prob: 0.95,
            orientation_sigma: 0.02,
            gnss_sigma: 0.03,
            gnss_bias_step_sigma: 0.005,
            gnss_bias_clamp: 1.0,
        }
    }
}

impl SensorConfig {
    /// Every noise term zero, detection certain.
    pub fn noiseless() -> Self {
        Self {
            sigma_range: 0.0,
            sigma_bearing: 0.0,
            sigma_width: 0.0,
            detect_prob: 1.0,
            orientation_sigma: 0.0,
            gnss_sigma: 0.0,
            gnss_bias_step_sigma: 0.0,
            ..Self::default()
        }
    }

    pub fn fov(&self) -> FieldOfView {
        FieldOfView {
            half_angle: self.fov_half_angle,
            max_range: self.max_range,
            bearing_offset: self.view_bearing_offset,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let sigmas = [
            ("sigma_range", self.sigma_range),
            ("sigma_bearing", self.sigma_bearing),
            ("sigma_width", self.sigma_width),
            ("orientation_sigma", self.orientation_sigma),
            ("gnss_sigma", self.gnss_sigma),
            ("gnss_bias_step_sigma", self.gnss_bias_step_sigma),
        ];
        for (name, v) in sigmas {
            if !(v.is_finite() && v >= 0.0) {
                return Err(format!("{name} must be >= 0, got {v}"));
            }
        }
        if !(0.0..=1.0).contains(&self.detect_prob) {
            return Err(format!("detect_prob must be in [0, 1], got {}", self.detect_prob));
        }
        if !(self.gnss_bias_clamp > 0.0) {
            return Err(format!("gnss_bias_clamp must be > 0, got {}", self.gnss_bias_clamp));
        }
        if !(self.max_range > 0.0) {
            return Err(format!("max_range must be > 0, got {}", self.max_range));
        }
        if !(self.fov_half_angle > 0.0 && self.fov_half_angle <= PI / 2.0) {
            return Err(format!("fov_half_angle must be in (0, pi/2], got {}", self.fov_half_angle));
        }
        Ok(())
    }
}

/// Sigmas and association rule of the trunk weighting.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Weighting {
    pub sigma_range_w: f64,
    pub sigma_bearing_w: f64,
    pub sigma_width_w: f64,
    pub orientation_sigma_w: f64,
    /// Squared Mahalanobis gate over (range, bearing).
    pub gate: f64,
    /// Density assigned to an unmatched observation.
    pub floor: f64,
}

impl Default for Weighting {
    fn default() -> Self {
        Self {
            sigma_range_w: 0.25,
            sigma_bearing_w: 0.08,
            sigma_width_w: 0.015,
            orientation_sigma_w: ORIENTATION_SIGMA_W,
            gate: 9.0,
            floor: 1e-6,
        }
    }
}

impl Weighting {
    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("sigma_range_w", self.sigma_range_w),
            ("sigma_bearing_w", self.sigma_bearing_w),
            ("sigma_width_w", self.sigma_width_w),
            ("orientation_sigma_w", self.orientation_sigma_w),
            ("gate", self.gate),
            ("floor", self.floor),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("{name} must be > 0, got {v}"));
            }
        }
        Ok(())
    }

    /// Peak of the three-Gaussian product: the density of a perfect match.
    pub fn peak_density(&self) -> f64 {
        gaussian_pdf(0.0, self.sigma_range_w)
            * gaussian_pdf(0.0, self.sigma_bearing_w)
            * gaussian_pdf(0.0, self.sigma_width_w)
    }

    fn log_norm(&self) -> f64 {
        -(self.sigma_range_w * self.sigma_bearing_w * self.sigma_width_w).ln() - 1.5 * (2.0 * PI).ln()
    }

    /// Log-density of one observation against landmarks visible from a particle.
    #[inline]
    pub fn trunk_log_likelihood(&self, obs: &TrunkObservation, hits: &[FovHit], map: &OrchardMap) -> f64 {
        let floor = self.floor.ln();
        let mut best: Option<(f64, usize)> = None;
        let (ir, ib) = (1.0 / self.sigma_range_w, 1.0 / self.sigma_bearing_w);
        for (k, h) in hits.iter().enumerate() {
            let dr = (obs.range - h.range) * ir;
            let db = wrap_angle(obs.bearing - h.bearing) * ib;
            let d2 = dr * dr + db * db;
            if best.is_none_or(|(b, _)| d2 < b) {
                best = Some((d2, k));
            }
        }
        match best {
            Some((d2, k)) if d2 <= self.gate => {
                let dw = (obs.width - map.landmarks[hits[k].index].width) / self.sigma_width_w;
                (self.log_norm() - 0.5 * (d2 + dw * dw)).max(floor)
            }
            _ => floor,
        }
    }

    /// `fov` widened by the gate radius in range and bearing.
    ///
    /// A landmark just outside the camera's view can still be the one a
    /// noisy detection came from; anything beyond this margin cannot pass
    /// the gate.
    pub fn association_fov(&self, fov: FieldOfView) -> FieldOfView {
        let k = self.gate.sqrt();
        FieldOfView {
            half_angle: (fov.half_angle + k * self.sigma_bearing_w).min(PI),
            max_range: fov.max_range + k * self.sigma_range_w,
            bearing_offset: fov.bearing_offset,
        }
    }

    /// Log-density of the orientation reading given a particle heading.
    #[inline]
    pub fn orientation_log_likelihood(&self, particle_heading: f64, observed_heading: f64) -> f64 {
        let z = angular_displacement(particle_heading, observed_heading) / self.orientation_sigma_w;
        -0.5 * z * z - (self.orientation_sigma_w * (2.0 * PI).sqrt()).ln()
    }
}

pub fn gaussian_pdf(residual: f64, sigma: f64) -> f64 {
    let z = residual / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * PI).sqrt())
}

/// Density of one trunk observation seen from `particle_pose`.
///
/// The observation is associated with the visible landmark nearest in
/// (range, bearing) Mahalanobis distance; unmatched or gated observations
/// score the weighting floor.
pub fn trunk_likelihood(
    particle_pose: &Pose2D,
    obs: &TrunkObservation,
    map: &OrchardMap,
    cfg: &SensorConfig,
    weighting: &Weighting,
) -> f64 {
    let hits = map.landmarks_in_fov(particle_pose, &cfg.fov());
    weighting.trunk_log_likelihood(obs, &hits, map).exp()
}

/// Gaussian density of the heading error under the default 0.4 rad sigma.
pub fn orientation_likelihood(particle_heading: f64, observed_heading: f64) -> f64 {
    gaussian_pdf(angular_displacement(particle_heading, observed_heading), ORIENTATION_SIGMA_W)
}

pub fn observe_trunks<R: Rng + ?Sized>(
    true_pose: &Pose2D,
    map: &OrchardMap,
    cfg: &SensorConfig,
    rng: &mut R,
) -> Vec<TrunkObservation> {
    let hits = map.landmarks_in_fov(true_pose, &cfg.fov());
    let mut out = Vec::with_capacity(hits.len());
    for h in hits {
        let detected = rng.random::<f64>() < cfg.detect_prob;
        if !detected {
            continue;
        }
        let range = h.range + normal(rng, cfg.sigma_range);
        let bearing = wrap_angle(h.bearing + normal(rng, cfg.sigma_bearing));
        let width = map.landmarks[h.index].width + normal(rng, cfg.sigma_width);
        out.push(TrunkObservation { range: range.max(1e-3), bearing, width: width.max(MIN_OBSERVED_WIDTH) });
    }
    out
}

pub fn observe_orientation<R: Rng + ?Sized>(true_heading: f64, cfg: &SensorConfig, rng: &mut R) -> f64 {
    wrap_angle(true_heading + normal(rng, cfg.orientation_sigma))
}

/// Slowly wandering offset of the uncorrected receiver.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GnssBiasState {
    pub bias: Vec2,
}

/// One random-walk step, projected back onto the disc of radius `gnss_bias_clamp`.
pub fn step_gnss_bias<R: Rng + ?Sized>(state: &GnssBiasState, cfg: &SensorConfig, rng: &mut R) -> GnssBiasState {
    let step = Vec2::new(normal(rng, cfg.gnss_bias_step_sigma), normal(rng, cfg.gnss_bias_step_sigma));
    let mut bias = state.bias + step;
    let n = bias.norm();
    if n > cfg.gnss_bias_clamp {
        bias = bias * (cfg.gnss_bias_clamp / n);
    }
    GnssBiasState { bias }
}

pub fn observe_gnss<R: Rng + ?Sized>(
    true_pose: &Pose2D,
    state: &GnssBiasState,
    cfg: &SensorConfig,
    rng: &mut R,
) -> Vec2 {
    true_pose.position() + state.bias + Vec2::new(normal(rng, cfg.gnss_sigma), normal(rng, cfg.gnss_sigma))
}

/// Zero-mean Gaussian draw; consumes no randomness when `sigma` is zero.
pub(crate) fn normal<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    if sigma > 0.0 {
        let z: f64 = StandardNormal.sample(rng);
        sigma * z
    } else {
        0.0
    }
}
