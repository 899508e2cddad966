//! Interactive replay of one log: the state behind the tuning server.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{feed_step, position_error, InitArea};
use crate::filter::{init_area, init_cluster, systematic_indices, FilterParams, Particle, ParticleFilter, ParticleSet};
use crate::geom::{Pose2D, Vec2};
use crate::map::OrchardMap;
use crate::motion::OdometryMode;
use crate::params::ParamPatch;
use crate::seed::derive_seed;
use crate::sensing::SensorConfig;
use crate::sim::SimLog;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    /// Uniform over a square, as in the row protocols.
    #[default]
    Area,
    /// Tight cluster at the true pose, as in the turn protocol.
    Cluster,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResetRequest {
    pub init: InitKind,
    /// Square size for area initialization.
    pub preset: InitArea,
    /// Log step the replay restarts from.
    pub start_step: usize,
}

impl Default for ResetRequest {
    fn default() -> Self {
        Self { init: InitKind::Area, preset: InitArea::Large, start_step: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticleView {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub weight: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Distance from the current estimate to the truth.
    pub final_error: f64,
    /// Truth path length since the replay (re)started.
    pub distance_traveled: f64,
}

/// Filter state after one replayed step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub step: usize,
    pub t: f64,
    pub truth: Pose2D,
    pub estimate: Pose2D,
    pub converged: bool,
    pub group_count: usize,
    pub particles: Vec<ParticleView>,
    pub metrics: Metrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub log: String,
    pub mode: OdometryMode,
    pub params: ParamPatch,
    pub reset: ResetRequest,
    /// Next log step to replay.
    pub cursor: usize,
    pub steps: usize,
    pub finished: bool,
}

/// A particle filter replaying a log step by step.
///
/// Parameter patches apply from the next step on. A change of particle count
/// resamples the current set to the new size; a change of width inflation
/// rebuilds the weighting map.
#[derive(Clone, Debug)]
pub struct Session {
    log: Arc<SimLog>,
    survey: OrchardMap,
    map: OrchardMap,
    sensor: SensorConfig,
    mode: OdometryMode,
    seed: u64,
    resets: u64,
    reset: ResetRequest,
    filter: ParticleFilter,
    cumulative: Vec<f64>,
    cursor: usize,
}

impl Session {
    pub fn new(
        log: Arc<SimLog>,
        map: &OrchardMap,
        sensor: SensorConfig,
        params: FilterParams,
        mode: OdometryMode,
        seed: u64,
    ) -> Result<Self> {
        params.validate()?;
        if log.steps.is_empty() {
            return Err(Error::InvalidLog(format!("{} has no steps", log.header.name)));
        }
        let cumulative = log.cumulative_distance();
        let mut s = Self {
            map: map.inflate_widths(params.width_inflation)?,
            survey: map.clone(),
            sensor,
            mode,
            seed,
            resets: 0,
            reset: ResetRequest::default(),
            filter: ParticleFilter::new(
                ParticleSet::from_poses([Pose2D::default(), Pose2D::default()])?,
                params,
                ChaCha8Rng::seed_from_u64(seed),
            ),
            cumulative,
            cursor: 0,
            log,
        };
        s.reset(ResetRequest::default())?;
        Ok(s)
    }

    pub fn params(&self) -> &FilterParams {
        &self.filter.params
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn finished(&self) -> bool {
        self.cursor >= self.log.steps.len()
    }

    pub fn state(&self) -> SessionState {
        SessionState {
            log: self.log.header.name.clone(),
            mode: self.mode,
            params: ParamPatch::from_params(&self.filter.params),
            reset: self.reset,
            cursor: self.cursor,
            steps: self.log.steps.len(),
            finished: self.finished(),
        }
    }

    /// Reinitializes the particles at `req.start_step` and rewinds the replay.
    /// Every reset draws from a fresh stream derived from the session seed.
    pub fn reset(&mut self, req: ResetRequest) -> Result<()> {
        let steps = &self.log.steps;
        let s0 = steps.get(req.start_step).ok_or_else(|| {
            Error::param("start_step", format!("step {} outside log of {} steps", req.start_step, steps.len()))
        })?;
        let p = self.filter.params;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, self.resets, req.start_step as u64));
        let set = match (req.init, req.preset) {
            (InitKind::Cluster, _) => {
                init_cluster(&s0.truth, p.cluster_pos_sigma, p.cluster_heading_sigma, p.particle_count, &mut rng)?
            }
            (InitKind::Area, InitArea::Large) => {
                let q = p.large_area_side / 4.0;
                let center = s0.truth.position() + Vec2::new(rng.random_range(-q..q), rng.random_range(-q..q));
                init_area(center, p.large_area_side, s0.imu_heading, p.heading_halfwidth, p.particle_count, &mut rng)?
            }
            (InitKind::Area, InitArea::Small) => {
                init_area(s0.gnss, p.small_area_side, s0.imu_heading, p.heading_halfwidth, p.particle_count, &mut rng)?
            }
        };
        self.filter = ParticleFilter::new(set, p, rng);
        self.resets += 1;
        self.reset = req;
        self.cursor = req.start_step;
        Ok(())
    }

    /// Applies a parameter patch; on error nothing changes.
    pub fn patch(&mut self, patch: &ParamPatch) -> Result<FilterParams> {
        let next = patch.apply(&self.filter.params)?;
        if next.width_inflation != self.filter.params.width_inflation {
            self.map = self.survey.inflate_widths(next.width_inflation)?;
        }
        if next.particle_count != self.filter.set.len() {
            let weights: Vec<f64> = self.filter.set.weights().collect();
            let idx = systematic_indices(&weights, next.particle_count, 0.5);
            let w = 1.0 / next.particle_count as f64;
            let particles =
                idx.into_iter().map(|i| Particle { pose: self.filter.set.particles[i].pose, weight: w }).collect();
            self.filter.set = ParticleSet::from_weighted(particles)?;
        }
        self.filter.params = next;
        Ok(next)
    }

    /// Replays up to `n` steps, one frame each. Fewer frames come back once
    /// the log runs out. `cap` limits the particles reported per frame.
    pub fn step(&mut self, n: usize, cap: Option<usize>) -> Vec<Frame> {
        let mut frames = Vec::with_capacity(n.min(self.log.steps.len()));
        for _ in 0..n {
            if self.finished() {
                break;
            }
            let k = self.cursor;
            feed_step(&mut self.filter, &self.map, &self.sensor, self.mode, &self.log, k, self.reset.start_step);
            self.cursor += 1;
            frames.push(self.frame_at(k, cap));
        }
        frames
    }

    /// The frame for the most recently replayed step, or the initial state.
    pub fn current_frame(&self, cap: Option<usize>) -> Frame {
        let k = self.cursor.saturating_sub(1).max(self.reset.start_step);
        self.frame_at(k, cap)
    }

    fn frame_at(&self, k: usize, cap: Option<usize>) -> Frame {
        let step = &self.log.steps[k];
        let estimate = self.filter.estimate();
        let groups = self.filter.groups();
        Frame {
            step: k,
            t: step.t,
            truth: step.truth,
            estimate,
            converged: groups.converged,
            group_count: groups.groups.len(),
            particles: decimate(&self.filter.set, cap),
            metrics: Metrics {
                final_error: position_error(&estimate, &step.truth),
                distance_traveled: self.cumulative[k] - self.cumulative[self.reset.start_step],
            },
        }
    }
}

/// At most `cap` particles, picked by systematic sampling on weight. The
/// reported weights are the originals.
pub fn decimate(set: &ParticleSet, cap: Option<usize>) -> Vec<ParticleView> {
    let view = |p: &Particle| ParticleView { x: p.pose.x, y: p.pose.y, theta: p.pose.theta, weight: p.weight };
    match cap {
        Some(c) if c < set.len() => {
            let weights: Vec<f64> = set.weights().collect();
            systematic_indices(&weights, c, 0.5).into_iter().map(|i| view(&set.particles[i])).collect()
        }
        _ => set.particles.iter().map(view).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::{generate_map, MapGenParams};
    use crate::sim::{simulate_log, Direction, SimConfig, TrajectorySpec};

    fn fixture() -> (OrchardMap, Arc<SimLog>) {
        let map = generate_map(&MapGenParams { rows: 4, trees_per_row: 20, ..MapGenParams::default() }, 3).unwrap();
        let spec = TrajectorySpec::straight(1, Direction::Forward);
        let out = simulate_log(&map, &spec, &SensorConfig::default(), &SimConfig::default(), "s", 5).unwrap();
        (map, Arc::new(out.log))
    }

    fn session(params: FilterParams) -> Session {
        let (map, log) = fixture();
        Session::new(log, &map, SensorConfig::default(), params, OdometryMode::Gnss, 9).unwrap()
    }

    fn small() -> FilterParams {
        FilterParams { particle_count: 400, ..FilterParams::default() }
    }

    #[test]
    fn step_emits_one_frame_per_step_until_the_end() {
        let mut s = session(small());
        assert_eq!(s.step(1, None).len(), 1);
        assert_eq!(s.step(10, None).len(), 10);
        assert_eq!(s.cursor(), 11);
        let total = s.state().steps;
        let rest = s.step(usize::MAX, Some(5));
        assert_eq!(rest.len(), total - 11);
        assert!(s.finished());
        assert!(s.step(3, None).is_empty());
        assert!(rest.iter().all(|f| f.particles.len() == 5));
    }

    #[test]
    fn frames_are_reproducible_for_a_seed() {
        let a = session(small()).step(30, Some(50));
        let b = session(small()).step(30, Some(50));
        assert_eq!(a, b);
    }

    #[test]
    fn patch_changes_later_frames() {
        let mut control = session(small());
        let mut patched = session(small());
        patched.patch(&ParamPatch { sigma_width_w: Some(0.05), ..ParamPatch::default() }).unwrap();
        let a = control.step(40, Some(0));
        let b = patched.step(40, Some(0));
        assert_ne!(a.last().unwrap().metrics, b.last().unwrap().metrics);
    }

    #[test]
    fn rejected_patch_leaves_params_alone() {
        let mut s = session(small());
        let before = *s.params();
        assert!(s.patch(&ParamPatch { particle_count: Some(1), ..ParamPatch::default() }).is_err());
        assert_eq!(*s.params(), before);
    }

    #[test]
    fn particle_count_patch_resizes_the_set() {
        let mut s = session(small());
        s.patch(&ParamPatch { particle_count: Some(250), ..ParamPatch::default() }).unwrap();
        assert_eq!(s.step(1, None)[0].particles.len(), 250);
    }

    fn extent(frame: &Frame) -> (f64, f64) {
        let (mut lo, mut hi) =
            (Vec2::new(f64::INFINITY, f64::INFINITY), Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
        for p in &frame.particles {
            lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        (hi.x - lo.x, hi.y - lo.y)
    }

    #[test]
    fn reset_presets_span_their_squares() {
        let mut s = session(FilterParams::default());
        for (preset, side) in [(InitArea::Large, 30.0), (InitArea::Small, 10.0)] {
            s.reset(ResetRequest { init: InitKind::Area, preset, start_step: 0 }).unwrap();
            let (w, h) = extent(&s.current_frame(None));
            assert!((w / side - 1.0).abs() < 0.05 && (h / side - 1.0).abs() < 0.05, "{preset:?}: {w} x {h}");
        }
        s.reset(ResetRequest { init: InitKind::Cluster, preset: InitArea::Large, start_step: 20 }).unwrap();
        let f = s.current_frame(None);
        assert_eq!(f.step, 20);
        assert!(f.metrics.final_error < 0.5);
        assert_eq!(f.metrics.distance_traveled, 0.0);
    }

    #[test]
    fn reset_rejects_steps_past_the_end() {
        let mut s = session(small());
        let n = s.state().steps;
        assert!(s.reset(ResetRequest { start_step: n, ..ResetRequest::default() }).is_err());
    }

    #[test]
    fn decimation_favors_heavy_particles() {
        let mut particles: Vec<Particle> =
            (0..10).map(|i| Particle { pose: Pose2D::new(i as f64, 0.0, 0.0), weight: 0.01 }).collect();
        particles[3].weight = 0.91;
        let set = ParticleSet::from_weighted(particles).unwrap();
        let picked = decimate(&set, Some(10));
        assert_eq!(picked.len(), 10);
        let view = decimate(&set, Some(4));
        assert_eq!(view.len(), 4);
        assert!(view.iter().filter(|p| p.x == 3.0).count() >= 3);
    }
}
