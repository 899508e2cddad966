//! Particle filter core: initialization, predict / weight / resample, grouping
//! and the pose estimate.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{circular_mean, wrap_angle, Pose2D, Vec2};
use crate::map::{FovHit, OrchardMap, DEFAULT_WIDTH_INFLATION, MAX_INFLATION};
use crate::motion::{propagate, MotionIncrement, MotionNoise};
use crate::sensing::{normal, SensorConfig, TrunkObservation, Weighting};
use crate::union_find::UnionFind;

/// Total weight at or below this is treated as a collapsed filter.
pub const DEGENERATE_WEIGHT: f64 = 1e-300;
/// Every weight is kept at or above this after an update.
const MIN_WEIGHT: f64 = 1e-300;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub pose: Pose2D,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParticleSet {
    pub particles: Vec<Particle>,
    pub normalized: bool,
}

impl ParticleSet {
    /// Equal-weight set from poses.
    pub fn from_poses(poses: impl IntoIterator<Item = Pose2D>) -> Result<Self> {
        let mut particles: Vec<Particle> = poses.into_iter().map(|pose| Particle { pose, weight: 0.0 }).collect();
        if particles.len() < 2 {
            return Err(Error::param("particle_count", "need at least 2 particles"));
        }
        let w = 1.0 / particles.len() as f64;
        particles.iter_mut().for_each(|p| p.weight = w);
        Ok(Self { particles, normalized: true })
    }

    /// Builds a set from explicit weights, normalizing them.
    pub fn from_weighted(particles: Vec<Particle>) -> Result<Self> {
        if particles.len() < 2 {
            return Err(Error::param("particle_count", "need at least 2 particles"));
        }
        let mut set = Self { particles, normalized: false };
        set.normalize();
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.particles.iter().map(|p| p.weight)
    }

    pub fn total_weight(&self) -> f64 {
        self.weights().sum()
    }

    fn normalize(&mut self) {
        let total = self.total_weight();
        if total > 0.0 {
            self.particles.iter_mut().for_each(|p| p.weight /= total);
        } else {
            self.reset_uniform();
        }
        self.normalized = true;
    }

    fn reset_uniform(&mut self) {
        let w = 1.0 / self.particles.len() as f64;
        self.particles.iter_mut().for_each(|p| p.weight = w);
        self.normalized = true;
    }

    /// 1 / Σ wᵢ² over normalized weights.
    pub fn effective_sample_size(&self) -> f64 {
        let total = self.total_weight();
        let s: f64 = self.weights().map(|w| (w / total) * (w / total)).sum();
        1.0 / s
    }
}

/// Filter tuning. Serialized flat through [`crate::params::ParamPatch`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterParams {
    pub particle_count: usize,
    pub group_link_distance: f64,
    pub convergence_weight_fraction: f64,
    pub resample_ess_fraction: f64,
    pub weighting: Weighting,
    pub noise: MotionNoise,
    /// Growth adjustment added to every map width before weighting.
    pub width_inflation: f64,
    /// Half-width of the initial heading spread for area initialization.
    pub heading_halfwidth: f64,
    pub large_area_side: f64,
    pub small_area_side: f64,
    pub cluster_pos_sigma: f64,
    pub cluster_heading_sigma: f64,
    /// Gaussian jitter added to every particle after a resample while the
    /// filter has not converged, so clones of one ancestor spread out again.
    /// Tracking a converged estimate uses the motion noise alone.
    pub roughen_pos_sigma: f64,
    pub roughen_heading_sigma: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            particle_count: 3000,
            group_link_distance: 0.5,
            convergence_weight_fraction: 0.9999,
            resample_ess_fraction: 0.5,
            weighting: Weighting { sigma_range_w: 0.5, sigma_bearing_w: 0.16, ..Weighting::default() },
            noise: MotionNoise::default(),
            width_inflation: DEFAULT_WIDTH_INFLATION,
            heading_halfwidth: 5f64.to_radians(),
            large_area_side: 30.0,
            small_area_side: 10.0,
            cluster_pos_sigma: 0.1,
            cluster_heading_sigma: 0.02,
            roughen_pos_sigma: 0.15,
            roughen_heading_sigma: 0.02,
        }
    }
}

impl FilterParams {
    pub fn validate(&self) -> Result<()> {
        if self.particle_count < 2 {
            return Err(Error::param("particle_count", "must be >= 2"));
        }
        if !(self.group_link_distance.is_finite() && self.group_link_distance > 0.0) {
            return Err(Error::param("group_link_distance", "must be > 0"));
        }
        for (name, v) in [
            ("convergence_weight_fraction", self.convergence_weight_fraction),
            ("resample_ess_fraction", self.resample_ess_fraction),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::param(name, format!("{v} outside (0, 1]")));
            }
        }
        self.weighting.validate().map_err(|m| Error::param("weighting", m))?;
        if !self.noise.is_valid() {
            return Err(Error::param("noise", "motion noise sigmas must be >= 0"));
        }
        if !(0.0..MAX_INFLATION).contains(&self.width_inflation) {
            return Err(Error::param("width_inflation", format!("outside [0, {MAX_INFLATION})")));
        }
        for (name, v) in [
            ("heading_halfwidth", self.heading_halfwidth),
            ("cluster_pos_sigma", self.cluster_pos_sigma),
            ("cluster_heading_sigma", self.cluster_heading_sigma),
            ("roughen_pos_sigma", self.roughen_pos_sigma),
            ("roughen_heading_sigma", self.roughen_heading_sigma),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::param(name, "must be >= 0"));
            }
        }
        for (name, v) in [("large_area_side", self.large_area_side), ("small_area_side", self.small_area_side)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(name, "must be > 0"));
            }
        }
        Ok(())
    }
}

/// Uniform particles over the axis-aligned square of side `side` centered on
/// `center`, headings uniform in `row_heading ± heading_halfwidth`.
pub fn init_area<R: Rng + ?Sized>(
    center: Vec2,
    side: f64,
    row_heading: f64,
    heading_halfwidth: f64,
    n: usize,
    rng: &mut R,
) -> Result<ParticleSet> {
    if !(side > 0.0) {
        return Err(Error::param("side", "must be > 0"));
    }
    let half = side / 2.0;
    ParticleSet::from_poses((0..n).map(|_| {
        let x = center.x + rng.random_range(-half..half);
        let y = center.y + rng.random_range(-half..half);
        let dh = if heading_halfwidth > 0.0 { rng.random_range(-heading_halfwidth..=heading_halfwidth) } else { 0.0 };
        Pose2D::new(x, y, row_heading + dh)
    }))
}

/// Gaussian cluster around `pose`.
pub fn init_cluster<R: Rng + ?Sized>(
    pose: &Pose2D,
    pos_sigma: f64,
    heading_sigma: f64,
    n: usize,
    rng: &mut R,
) -> Result<ParticleSet> {
    ParticleSet::from_poses((0..n).map(|_| {
        Pose2D::new(
            pose.x + normal(rng, pos_sigma),
            pose.y + normal(rng, pos_sigma),
            pose.theta + normal(rng, heading_sigma),
        )
    }))
}

/// Advances every particle through the motion model; weights are untouched.
pub fn predict<R: Rng + ?Sized>(set: &mut ParticleSet, inc: &MotionIncrement, noise: &MotionNoise, rng: &mut R) {
    for p in &mut set.particles {
        p.pose = propagate(&p.pose, inc, noise, rng);
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct UpdateOutcome {
    /// The observations left every particle with negligible weight; weights
    /// were reset to uniform.
    pub degenerate: bool,
    /// Whether anything was observed at all.
    pub applied: bool,
}

/// Multiplies weights by the trunk and orientation likelihoods and normalizes.
///
/// Works in the log domain; with no observations and no heading the weights
/// are left exactly as they were.
pub fn update_weights(
    set: &mut ParticleSet,
    observations: &[TrunkObservation],
    observed_heading: Option<f64>,
    map: &OrchardMap,
    cfg: &SensorConfig,
    weighting: &Weighting,
) -> UpdateOutcome {
    if observations.is_empty() && observed_heading.is_none() {
        return UpdateOutcome::default();
    }
    let fov = weighting.association_fov(cfg.fov());
    let mut hits: Vec<FovHit> = Vec::with_capacity(16);
    let mut logw: Vec<f64> = Vec::with_capacity(set.len());
    for p in &set.particles {
        let mut lw = p.weight.ln();
        if !observations.is_empty() {
            hits.clear();
            map.for_each_in_fov(&p.pose, &fov, |h| hits.push(h));
            for obs in observations {
                lw += weighting.trunk_log_likelihood(obs, &hits, map);
            }
        }
        if let Some(h) = observed_heading {
            lw += weighting.orientation_log_likelihood(p.pose.theta, h);
        }
        logw.push(lw);
    }
    let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > DEGENERATE_WEIGHT.ln()) {
        set.reset_uniform();
        return UpdateOutcome { degenerate: true, applied: true };
    }
    let mut total = 0.0;
    for (p, lw) in set.particles.iter_mut().zip(&logw) {
        p.weight = (lw - max).exp();
        total += p.weight;
    }
    for p in &mut set.particles {
        p.weight = (p.weight / total).max(MIN_WEIGHT);
    }
    set.normalized = true;
    UpdateOutcome { degenerate: false, applied: true }
}

/// `count` indices picked by systematic resampling with offset `u0 ∈ [0, 1)`:
/// pointers at `(u0 + j) / count` walk the cumulative weights.
pub fn systematic_indices(weights: &[f64], count: usize, u0: f64) -> Vec<usize> {
    let n = weights.len();
    let total: f64 = weights.iter().sum();
    let mut out = Vec::with_capacity(count);
    let mut cumulative = weights.first().copied().unwrap_or(0.0) / total;
    let mut i = 0;
    for j in 0..count {
        let u = (u0 + j as f64) / count as f64;
        while u >= cumulative && i + 1 < n {
            i += 1;
            cumulative += weights[i] / total;
        }
        out.push(i);
    }
    out
}

/// Systematic resampling once the effective sample size drops to
/// `resample_ess_fraction · N` or below. Returns whether resampling happened.
pub fn resample<R: Rng + ?Sized>(set: &mut ParticleSet, params: &FilterParams, rng: &mut R) -> bool {
    let n = set.len();
    if set.effective_sample_size() > params.resample_ess_fraction * n as f64 {
        return false;
    }
    let weights: Vec<f64> = set.weights().collect();
    let idx = systematic_indices(&weights, n, rng.random::<f64>());
    let w = 1.0 / n as f64;
    set.particles = idx.into_iter().map(|i| Particle { pose: set.particles[i].pose, weight: w }).collect();
    set.normalized = true;
    true
}

/// Adds independent Gaussian jitter to every pose; weights are unchanged.
pub fn roughen<R: Rng + ?Sized>(set: &mut ParticleSet, pos_sigma: f64, heading_sigma: f64, rng: &mut R) {
    if pos_sigma <= 0.0 && heading_sigma <= 0.0 {
        return;
    }
    for p in &mut set.particles {
        p.pose.x += normal(rng, pos_sigma);
        p.pose.y += normal(rng, pos_sigma);
        p.pose.theta = wrap_angle(p.pose.theta + normal(rng, heading_sigma));
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParticleGroup {
    /// Particle indices, ascending.
    pub members: Vec<usize>,
    pub weight: f64,
    pub centroid: Pose2D,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupReport {
    /// Heaviest first; ties broken by smallest member index.
    pub groups: Vec<ParticleGroup>,
    pub converged: bool,
}

impl GroupReport {
    pub fn heaviest(&self) -> Option<&ParticleGroup> {
        self.groups.first()
    }
}

/// Single-linkage clustering of particle positions.
///
/// Positions are bucketed into square cells of side `link / √2`, so members of
/// one cell are always linked; cells up to two apart are compared pairwise.
pub fn group_particles(set: &ParticleSet, link_distance: f64, convergence_fraction: f64) -> GroupReport {
    let n = set.len();
    let cell = link_distance / std::f64::consts::SQRT_2;
    let link2 = link_distance * link_distance;
    let pos: Vec<Vec2> = set.particles.iter().map(|p| p.pose.position()).collect();

    let mut keyed: Vec<((i64, i64), u32)> = pos
        .iter()
        .enumerate()
        .map(|(i, p)| (((p.x / cell).floor() as i64, (p.y / cell).floor() as i64), i as u32))
        .collect();
    keyed.sort_unstable();

    // cells as contiguous runs of the sorted list
    let mut cells: Vec<((i64, i64), std::ops::Range<usize>)> = Vec::new();
    let mut start = 0;
    for k in 1..=keyed.len() {
        if k == keyed.len() || keyed[k].0 != keyed[start].0 {
            cells.push((keyed[start].0, start..k));
            start = k;
        }
    }
    let lookup = |key: (i64, i64)| cells.binary_search_by(|(k, _)| k.cmp(&key)).ok();

    let mut uf = UnionFind::new(n);
    for (_, range) in &cells {
        let first = keyed[range.start].1 as usize;
        for &(_, i) in &keyed[range.clone()] {
            uf.union(first, i as usize);
        }
    }
    for (a, (key, ra)) in cells.iter().enumerate() {
        let rep_a = keyed[ra.start].1 as usize;
        for dx in -2i64..=2 {
            for dy in -2i64..=2 {
                let other = (key.0 + dx, key.1 + dy);
                if other <= *key {
                    continue;
                }
                let Some(b) = lookup(other) else { continue };
                debug_assert!(b > a);
                let rb = &cells[b].1;
                let rep_b = keyed[rb.start].1 as usize;
                if uf.find(rep_a) == uf.find(rep_b) {
                    continue;
                }
                'pairs: for &(_, i) in &keyed[ra.clone()] {
                    for &(_, j) in &keyed[rb.clone()] {
                        if (pos[i as usize] - pos[j as usize]).norm_squared() <= link2 {
                            uf.union(rep_a, rep_b);
                            break 'pairs;
                        }
                    }
                }
            }
        }
    }

    let mut by_root: Vec<Option<usize>> = vec![None; n];
    let mut groups: Vec<ParticleGroup> = Vec::new();
    for i in 0..n {
        let root = uf.find(i);
        let g = *by_root[root].get_or_insert_with(|| {
            groups.push(ParticleGroup { members: Vec::new(), weight: 0.0, centroid: Pose2D::default() });
            groups.len() - 1
        });
        groups[g].members.push(i);
        groups[g].weight += set.particles[i].weight;
    }
    for g in &mut groups {
        g.centroid = centroid(set, &g.members, g.weight);
    }
    groups.sort_by(|a, b| b.weight.total_cmp(&a.weight).then(a.members[0].cmp(&b.members[0])));
    let total = set.total_weight();
    let converged = groups.first().is_some_and(|g| g.weight >= convergence_fraction * total);
    GroupReport { groups, converged }
}

fn centroid(set: &ParticleSet, members: &[usize], weight: f64) -> Pose2D {
    let uniform = !(weight > 0.0);
    let w = |i: usize| if uniform { 1.0 } else { set.particles[i].weight };
    let total: f64 = members.iter().map(|&i| w(i)).sum();
    let (sx, sy) = members.iter().fold((0.0, 0.0), |(sx, sy), &i| {
        let p = &set.particles[i].pose;
        (sx + w(i) * p.x, sy + w(i) * p.y)
    });
    let theta = circular_mean(members.iter().map(|&i| (set.particles[i].pose.theta, w(i))));
    Pose2D { x: sx / total, y: sy / total, theta: wrap_angle(theta) }
}

/// Pose of the highest-weight particle; ties go to the lowest index.
pub fn estimate(set: &ParticleSet) -> Pose2D {
    let mut best = 0;
    for (i, p) in set.particles.iter().enumerate() {
        if p.weight > set.particles[best].weight {
            best = i;
        }
    }
    set.particles[best].pose
}

/// What one filter step did.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StepOutcome {
    pub observed_trunks: bool,
    pub degenerate: bool,
    pub resampled: bool,
}

/// A particle set with the parameters and random stream that drive it.
#[derive(Clone, Debug)]
pub struct ParticleFilter {
    pub set: ParticleSet,
    pub params: FilterParams,
    pub rng: ChaCha8Rng,
    /// Number of steps so far that weighed trunk observations.
    pub trunk_updates: usize,
}

impl ParticleFilter {
    pub fn new(set: ParticleSet, params: FilterParams, rng: ChaCha8Rng) -> Self {
        Self { set, params, rng, trunk_updates: 0 }
    }

    /// predict (when an increment is given), weight, then resample. A
    /// resample that leaves the filter unconverged is followed by roughening.
    pub fn step(
        &mut self,
        map: &OrchardMap,
        sensor: &SensorConfig,
        inc: Option<&MotionIncrement>,
        trunks: &[TrunkObservation],
        heading: Option<f64>,
    ) -> StepOutcome {
        if let Some(inc) = inc {
            predict(&mut self.set, inc, &self.params.noise, &mut self.rng);
        }
        let update = update_weights(&mut self.set, trunks, heading, map, sensor, &self.params.weighting);
        if !trunks.is_empty() {
            self.trunk_updates += 1;
        }
        let resampled = update.applied && resample(&mut self.set, &self.params, &mut self.rng);
        if resampled && !self.groups().converged {
            let p = &self.params;
            roughen(&mut self.set, p.roughen_pos_sigma, p.roughen_heading_sigma, &mut self.rng);
        }
        StepOutcome { observed_trunks: !trunks.is_empty(), degenerate: update.degenerate, resampled }
    }

    pub fn groups(&self) -> GroupReport {
        group_particles(&self.set, self.params.group_link_distance, self.params.convergence_weight_fraction)
    }

    pub fn estimate(&self) -> Pose2D {
        estimate(&self.set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::{Landmark, LandmarkKind};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use std::f64::consts::PI;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn set_at(points: &[(f64, f64)]) -> ParticleSet {
        ParticleSet::from_poses(points.iter().map(|&(x, y)| Pose2D::new(x, y, 0.0))).unwrap()
    }

    fn one_tree() -> OrchardMap {
        OrchardMap::new(
            vec![Landmark { id: 0, row_id: 0, position: Vec2::new(0.0, 2.0), width: 0.08, kind: LandmarkKind::Tree }],
            vec![(0, Vec2::new(-2.0, 2.0), Vec2::new(2.0, 2.0))],
            3.0,
            5.0,
        )
        .unwrap()
    }

    #[test]
    fn area_init_stays_in_square() {
        for side in [30.0, 10.0] {
            let center = Vec2::new(40.0, 12.0);
            let hw = 5f64.to_radians();
            let set = init_area(center, side, 0.3, hw, 5000, &mut rng(1)).unwrap();
            assert_eq!(set.len(), 5000);
            for p in &set.particles {
                assert!((p.pose.x - center.x).abs() <= side / 2.0);
                assert!((p.pose.y - center.y).abs() <= side / 2.0);
                assert!((p.pose.theta - 0.3).abs() <= 0.087_266_5);
                assert_eq!(p.weight, 1.0 / 5000.0);
            }
            let spread_x = set.particles.iter().map(|p| p.pose.x).fold(f64::MIN, f64::max)
                - set.particles.iter().map(|p| p.pose.x).fold(f64::MAX, f64::min);
            assert!(spread_x > 0.98 * side);
        }
        assert!(init_area(Vec2::ZERO, 10.0, 0.0, 0.1, 1, &mut rng(0)).is_err());
    }

    #[test]
    fn cluster_init() {
        let pose = Pose2D::new(3.0, 4.0, 1.0);
        let tight = init_cluster(&pose, 0.0, 0.0, 10, &mut rng(2)).unwrap();
        assert!(tight.particles.iter().all(|p| p.pose == pose && p.weight == 0.1));

        let n = 10_000;
        let set = init_cluster(&pose, 0.3, 0.0, n, &mut rng(3)).unwrap();
        for axis in [0, 1] {
            let v: Vec<f64> = set.particles.iter().map(|p| if axis == 0 { p.pose.x } else { p.pose.y }).collect();
            let mean = v.iter().sum::<f64>() / n as f64;
            let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
            assert!((std - 0.3).abs() < 0.015, "std {std}");
        }
    }

    #[test]
    fn predict_examples() {
        let mut set = ParticleSet::from_poses([Pose2D::new(0.0, 0.0, 0.0), Pose2D::new(1.0, 1.0, PI / 2.0)]).unwrap();
        let before: Vec<f64> = set.weights().collect();
        predict(&mut set, &MotionIncrement::new(1.0, 0.0), &MotionNoise::ZERO, &mut rng(0));
        assert_abs_diff_eq!(set.particles[0].pose.x, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(set.particles[1].pose.y, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(set.particles[1].pose.x, 1.0, epsilon = 1e-12);
        assert_eq!(set.weights().collect::<Vec<_>>(), before);
    }

    #[test]
    fn zero_increment_spreads_by_floor() {
        let n = 20_000;
        let mut set = init_cluster(&Pose2D::default(), 0.0, 0.0, n, &mut rng(4)).unwrap();
        let noise = MotionNoise::default();
        predict(&mut set, &MotionIncrement::default(), &noise, &mut rng(5));
        let xs: Vec<f64> = set.particles.iter().map(|p| p.pose.x).collect();
        let ts: Vec<f64> = set.particles.iter().map(|p| p.pose.theta).collect();
        let std = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
        };
        assert!((std(&xs) - noise.sigma_forward_floor).abs() < 0.1 * noise.sigma_forward_floor);
        assert!((std(&ts) - noise.sigma_dtheta_floor).abs() < 0.1 * noise.sigma_dtheta_floor);
    }

    #[test]
    fn update_examples() {
        let map = one_tree();
        let cfg = SensorConfig::default();
        let w = Weighting::default();

        let mut set = init_cluster(&Pose2D::default(), 1.0, 0.5, 50, &mut rng(6)).unwrap();
        let before = set.clone();
        let out = update_weights(&mut set, &[], None, &map, &cfg, &w);
        assert!(!out.applied);
        assert_eq!(set, before);

        // two particles: one at the true pose, one facing away
        let mut set = ParticleSet::from_poses([Pose2D::new(0.0, 0.0, 0.0), Pose2D::new(0.0, 0.0, PI)]).unwrap();
        let obs = TrunkObservation { range: 2.0, bearing: 0.0, width: 0.08 };
        update_weights(&mut set, &[obs], None, &map, &cfg, &w);
        let ratio = w.floor / w.peak_density();
        assert_abs_diff_eq!(set.particles[1].weight, ratio / (1.0 + ratio), epsilon = 1e-15);
        assert_abs_diff_eq!(set.particles[0].weight, 1.0 / (1.0 + ratio), epsilon = 1e-15);

        // all particles share the observed heading
        let mut set = ParticleSet::from_poses((0..10).map(|i| Pose2D::new(i as f64, 0.0, 0.7))).unwrap();
        update_weights(&mut set, &[], Some(0.7), &map, &cfg, &w);
        for p in &set.particles {
            assert_abs_diff_eq!(p.weight, 0.1, epsilon = 1e-15);
        }
    }

    #[test]
    fn degenerate_update_resets() {
        let map = one_tree();
        let cfg = SensorConfig::default();
        let w = Weighting { floor: 1e-200, ..Weighting::default() };
        let mut set = ParticleSet::from_poses([Pose2D::new(50.0, 0.0, 0.0), Pose2D::new(60.0, 0.0, 0.0)]).unwrap();
        let obs = [TrunkObservation { range: 2.0, bearing: 0.0, width: 0.08 }; 2];
        let out = update_weights(&mut set, &obs, None, &map, &cfg, &w);
        assert!(out.degenerate);
        assert!(set.particles.iter().all(|p| p.weight == 0.5));
    }

    #[test]
    fn systematic_enumeration() {
        // weights (0.5, 0.5, 0, 0): pointers (u+j)/4 land twice in each half
        for k in 0..100 {
            let u = k as f64 / 100.0;
            assert_eq!(systematic_indices(&[0.5, 0.5, 0.0, 0.0], 4, u), vec![0, 0, 1, 1]);
        }
        assert_eq!(systematic_indices(&[0.0, 0.0, 1.0, 0.0], 4, 0.3), vec![2, 2, 2, 2]);
        assert_eq!(systematic_indices(&[0.25, 0.75], 8, 0.5), vec![0, 0, 1, 1, 1, 1, 1, 1]);
    }

    #[test]
    fn resample_examples() {
        let params = FilterParams::default();
        let mut uniform = set_at(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0)]);
        let before = uniform.clone();
        assert!(!resample(&mut uniform, &params, &mut rng(0)));
        assert_eq!(uniform, before);

        let mut peaked = ParticleSet::from_weighted(
            (0..4)
                .map(|i| Particle { pose: Pose2D::new(i as f64, 0.0, 0.0), weight: if i == 2 { 1.0 } else { 0.0 } })
                .collect(),
        )
        .unwrap();
        assert!(resample(&mut peaked, &params, &mut rng(0)));
        assert!(peaked.particles.iter().all(|p| p.pose.x == 2.0 && p.weight == 0.25));

        let halves = ParticleSet::from_weighted(
            [0.5, 0.5, 0.0, 0.0]
                .iter()
                .enumerate()
                .map(|(i, &w)| Particle { pose: Pose2D::new(i as f64, 0.0, 0.0), weight: w })
                .collect(),
        )
        .unwrap();
        // ESS = 2 = 0.5 N sits on the threshold
        assert_abs_diff_eq!(halves.effective_sample_size(), 2.0);
        for seed in 0..20 {
            let mut h = halves.clone();
            assert!(resample(&mut h, &params, &mut rng(seed)));
            let xs: Vec<f64> = h.particles.iter().map(|p| p.pose.x).collect();
            assert_eq!(xs, vec![0.0, 0.0, 1.0, 1.0]);
        }
    }

    #[test]
    fn grouping_examples() {
        let coincident = set_at(&[(5.0, 5.0); 10]);
        let r = group_particles(&coincident, 1.0, 0.95);
        assert_eq!(r.groups.len(), 1);
        assert!(r.converged);

        let mut pts = vec![(0.0, 0.0); 5];
        pts.extend(vec![(10.0, 0.0); 5]);
        let r = group_particles(&set_at(&pts), 1.0, 0.95);
        assert_eq!(r.groups.len(), 2);
        assert!(!r.converged);
        assert_abs_diff_eq!(r.groups[0].weight, 0.5, epsilon = 1e-12);

        let chain: Vec<(f64, f64)> = (0..40).map(|i| (i as f64 * 0.5, 0.0)).collect();
        let r = group_particles(&set_at(&chain), 1.0, 0.95);
        assert_eq!(r.groups.len(), 1);
    }

    #[test]
    fn estimate_examples() {
        let set = ParticleSet::from_weighted(
            [0.1, 0.7, 0.2]
                .iter()
                .enumerate()
                .map(|(i, &w)| Particle { pose: Pose2D::new(i as f64, 0.0, 0.0), weight: w })
                .collect(),
        )
        .unwrap();
        assert_eq!(estimate(&set).x, 1.0);
        let uniform = set_at(&[(3.0, 0.0), (4.0, 0.0), (5.0, 0.0)]);
        assert_eq!(estimate(&uniform).x, 3.0);
    }

    /// O(n²) single-linkage reference: flood fill over the "within link" graph.
    fn brute_groups(pos: &[(f64, f64)], link: f64) -> Vec<Vec<usize>> {
        let n = pos.len();
        let mut label = vec![usize::MAX; n];
        let mut groups = Vec::new();
        for s in 0..n {
            if label[s] != usize::MAX {
                continue;
            }
            let id = groups.len();
            let mut stack = vec![s];
            label[s] = id;
            let mut members = vec![];
            while let Some(i) = stack.pop() {
                members.push(i);
                for j in 0..n {
                    let d = ((pos[i].0 - pos[j].0).powi(2) + (pos[i].1 - pos[j].1).powi(2)).sqrt();
                    if label[j] == usize::MAX && d <= link {
                        label[j] = id;
                        stack.push(j);
                    }
                }
            }
            members.sort();
            groups.push(members);
        }
        groups.sort();
        groups
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn grouping_matches_brute_force_and_partitions(
            pts in proptest::collection::vec((-8.0f64..8.0, -8.0f64..8.0), 2..120),
            link in 0.2f64..3.0,
        ) {
            let set = set_at(&pts);
            let report = group_particles(&set, link, 0.95);
            let mut got: Vec<Vec<usize>> = report.groups.iter().map(|g| g.members.clone()).collect();
            got.sort();
            prop_assert_eq!(&got, &brute_groups(&pts, link));
            let mut all: Vec<usize> = got.concat();
            all.sort();
            prop_assert_eq!(all, (0..pts.len()).collect::<Vec<_>>());
            let w: f64 = report.groups.iter().map(|g| g.weight).sum();
            prop_assert!((w - 1.0).abs() < 1e-9);
        }

        #[test]
        fn update_keeps_weights_normalized_and_positive(seed in 0u64..1000, heading in -3.0f64..3.0) {
            let map = one_tree();
            let cfg = SensorConfig::default();
            let mut set = init_cluster(&Pose2D::default(), 1.0, 1.0, 64, &mut rng(seed)).unwrap();
            let obs = [TrunkObservation { range: 2.0, bearing: 0.1, width: 0.09 }];
            for _ in 0..50 {
                update_weights(&mut set, &obs, Some(heading), &map, &cfg, &Weighting::default());
                prop_assert!((set.total_weight() - 1.0).abs() < 1e-9);
                prop_assert!(set.weights().all(|w| w > 0.0));
            }
        }

        #[test]
        fn update_commutes_with_permutation(seed in 0u64..1000) {
            let map = one_tree();
            let cfg = SensorConfig::default();
            let set = init_cluster(&Pose2D::default(), 0.5, 0.3, 32, &mut rng(seed)).unwrap();
            let mut order: Vec<usize> = (0..set.len()).collect();
            order.shuffle(&mut rng(seed + 1));
            let mut permuted = ParticleSet::from_poses(order.iter().map(|&i| set.particles[i].pose)).unwrap();
            let mut plain = set.clone();
            let obs = [TrunkObservation { range: 2.1, bearing: -0.05, width: 0.085 }];
            update_weights(&mut plain, &obs, Some(0.1), &map, &cfg, &Weighting::default());
            update_weights(&mut permuted, &obs, Some(0.1), &map, &cfg, &Weighting::default());
            for (k, &i) in order.iter().enumerate() {
                prop_assert!((permuted.particles[k].weight - plain.particles[i].weight).abs() < 1e-12);
            }
        }

        #[test]
        fn estimate_invariant_to_weight_scale(ws in proptest::collection::vec(0.001f64..1.0, 2..30), scale in 0.01f64..100.0) {
            let make = |s: f64| ParticleSet {
                particles: ws.iter().enumerate().map(|(i, &w)| Particle { pose: Pose2D::new(i as f64, 0.0, 0.0), weight: w * s }).collect(),
                normalized: false,
            };
            prop_assert_eq!(estimate(&make(1.0)), estimate(&make(scale)));
        }
    }
}
