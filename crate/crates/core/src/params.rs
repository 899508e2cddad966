//! Flat parameter documents: every field optional, layered over defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::FilterParams;

/// Partial [`FilterParams`]. Used for parameter files and live patches.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamPatch {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub particle_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub group_link_distance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub convergence_weight_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resample_ess_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_range_w: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_bearing_w: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_width_w: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub orientation_sigma_w: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub floor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_forward_per_meter: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_forward_floor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_dtheta_per_rad: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_dtheta_floor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub width_inflation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub heading_halfwidth: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub large_area_side: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub small_area_side: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cluster_pos_sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cluster_heading_sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub roughen_pos_sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub roughen_heading_sigma: Option<f64>,
}

macro_rules! overlay {
    ($patch:expr, $out:expr, { $($field:ident => $($path:ident).+),* $(,)? }) => {
        $(if let Some(v) = $patch.$field { $out.$($path).+ = v; })*
    };
}

impl ParamPatch {
    /// `base` with every present field replaced; the result is validated.
    pub fn apply(&self, base: &FilterParams) -> Result<FilterParams> {
        let mut p = *base;
        overlay!(self, p, {
            particle_count => particle_count,
            group_link_distance => group_link_distance,
            convergence_weight_fraction => convergence_weight_fraction,
            resample_ess_fraction => resample_ess_fraction,
            sigma_range_w => weighting.sigma_range_w,
            sigma_bearing_w => weighting.sigma_bearing_w,
            sigma_width_w => weighting.sigma_width_w,
            orientation_sigma_w => weighting.orientation_sigma_w,
            gate => weighting.gate,
            floor => weighting.floor,
            sigma_forward_per_meter => noise.sigma_forward_per_meter,
            sigma_forward_floor => noise.sigma_forward_floor,
            sigma_dtheta_per_rad => noise.sigma_dtheta_per_rad,
            sigma_dtheta_floor => noise.sigma_dtheta_floor,
            width_inflation => width_inflation,
            heading_halfwidth => heading_halfwidth,
            large_area_side => large_area_side,
            small_area_side => small_area_side,
            cluster_pos_sigma => cluster_pos_sigma,
            cluster_heading_sigma => cluster_heading_sigma,
            roughen_pos_sigma => roughen_pos_sigma,
            roughen_heading_sigma => roughen_heading_sigma,
        });
        p.validate()?;
        Ok(p)
    }

    /// Fully populated patch describing `p`.
    pub fn from_params(p: &FilterParams) -> Self {
        Self {
            particle_count: Some(p.particle_count),
            group_link_distance: Some(p.group_link_distance),
            convergence_weight_fraction: Some(p.convergence_weight_fraction),
            resample_ess_fraction: Some(p.resample_ess_fraction),
            sigma_range_w: Some(p.weighting.sigma_range_w),
            sigma_bearing_w: Some(p.weighting.sigma_bearing_w),
            sigma_width_w: Some(p.weighting.sigma_width_w),
            orientation_sigma_w: Some(p.weighting.orientation_sigma_w),
            gate: Some(p.weighting.gate),
            floor: Some(p.weighting.floor),
            sigma_forward_per_meter: Some(p.noise.sigma_forward_per_meter),
            sigma_forward_floor: Some(p.noise.sigma_forward_floor),
            sigma_dtheta_per_rad: Some(p.noise.sigma_dtheta_per_rad),
            sigma_dtheta_floor: Some(p.noise.sigma_dtheta_floor),
            width_inflation: Some(p.width_inflation),
            heading_halfwidth: Some(p.heading_halfwidth),
            large_area_side: Some(p.large_area_side),
            small_area_side: Some(p.small_area_side),
            cluster_pos_sigma: Some(p.cluster_pos_sigma),
            cluster_heading_sigma: Some(p.cluster_heading_sigma),
            roughen_pos_sigma: Some(p.roughen_pos_sigma),
            roughen_heading_sigma: Some(p.roughen_heading_sigma),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse { what: "parameter file".into(), message: e.to_string() })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Stable short hash of a parameter set, recorded next to every result.
pub fn params_fingerprint(p: &FilterParams) -> String {
    let text = serde_json::to_string(&ParamPatch::from_params(p)).expect("params serialize");
    crate::seed::fingerprint(&text)
}
