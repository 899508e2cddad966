//! Synthetic runs through the orchard: trajectories, sensor streams and the
//! newline-delimited log format.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Pose2D, Vec2};
use crate::map::{OrchardMap, RowSpec};
use crate::motion::apply_increment;
use crate::seed::derive_seed;
use crate::sensing::{
    normal, observe_gnss, observe_orientation, observe_trunks, step_gnss_bias, GnssBiasState, SensorConfig,
    TrunkObservation,
};

pub const UNITS: &str = "m,rad,s";
pub const STRAIGHT_RUNS: usize = 12;
pub const TURN_RUNS: usize = 43;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryKind {
    StraightRow,
    RowChange,
}

/// Direction of travel along the source row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// From the row's `start` toward its `end`.
    Forward,
    Reverse,
}

impl Direction {
    pub fn flipped(self) -> Self {
        match self {
            Direction::Forward => Direction::Reverse,
            Direction::Reverse => Direction::Forward,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Direction::Forward => "fwd",
            Direction::Reverse => "rev",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectorySpec {
    pub kind: TrajectoryKind,
    pub row_id: i32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_row_id: Option<i32>,
    pub direction: Direction,
    pub speed: f64,
    pub dt: f64,
    /// Where the run starts, in meters along the row from its entry end.
    pub start_offset: f64,
}

impl TrajectorySpec {
    pub fn straight(row_id: i32, direction: Direction) -> Self {
        Self {
            kind: TrajectoryKind::StraightRow,
            row_id,
            target_row_id: None,
            direction,
            speed: 0.4,
            dt: 0.2,
            start_offset: 0.0,
        }
    }

    pub fn row_change(row_id: i32, target_row_id: i32, direction: Direction, start_offset: f64) -> Self {
        Self {
            kind: TrajectoryKind::RowChange,
            target_row_id: Some(target_row_id),
            start_offset,
            ..Self::straight(row_id, direction)
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.speed > 0.0 && self.speed.is_finite()) {
            return Err(Error::InvalidTrajectory(format!("speed {} must be > 0", self.speed)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidTrajectory(format!("dt {} must be > 0", self.dt)));
        }
        match (self.kind, self.target_row_id) {
            (TrajectoryKind::StraightRow, None) => Ok(()),
            (TrajectoryKind::StraightRow, Some(_)) => {
                Err(Error::InvalidTrajectory("straight_row takes no target row".into()))
            }
            (TrajectoryKind::RowChange, None) => Err(Error::InvalidTrajectory("row_change needs a target row".into())),
            (TrajectoryKind::RowChange, Some(t)) if (t - self.row_id).abs() > 1 => {
                Err(Error::InvalidTrajectory(format!("target row {t} is not adjacent to row {}", self.row_id)))
            }
            _ => Ok(()),
        }
    }
}

/// Headland turn shape.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TurnGeometry {
    /// Straight run past the row end before turning.
    pub exit_margin: f64,
    /// How far into the target row a turn log continues.
    pub entry_depth: f64,
    /// Distance before the row end where turn logs start.
    pub approach: f64,
}

impl Default for TurnGeometry {
    fn default() -> Self {
        Self { exit_margin: 2.0, entry_depth: 8.0, approach: 8.0 }
    }
}

/// Sensor error terms that live outside [`SensorConfig`]: odometry, the
/// reference receiver, and how the world differs from the map.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub wheel_sigma_per_m: f64,
    /// Per-step wheel heading noise.
    pub wheel_dtheta_sigma: f64,
    /// Systematic wheel heading error per meter driven.
    pub wheel_drift_per_m: f64,
    pub visual_sigma_per_m: f64,
    pub gnss_corrected_sigma: f64,
    /// Extra jitter on the reference receiver.
    pub gnss_sway: f64,
    /// Trunk growth since the map was surveyed.
    pub trunk_growth: f64,
    pub turn: TurnGeometry,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            wheel_sigma_per_m: 0.02,
            wheel_dtheta_sigma: 0.002,
            wheel_drift_per_m: 0.5f64.to_radians(),
            visual_sigma_per_m: 0.02,
            gnss_corrected_sigma: 0.01,
            gnss_sway: 0.0,
            trunk_growth: 0.003,
            turn: TurnGeometry::default(),
        }
    }
}

impl SimConfig {
    pub fn noiseless() -> Self {
        Self {
            wheel_sigma_per_m: 0.0,
            wheel_dtheta_sigma: 0.0,
            wheel_drift_per_m: 0.0,
            visual_sigma_per_m: 0.0,
            gnss_corrected_sigma: 0.0,
            gnss_sway: 0.0,
            trunk_growth: 0.0,
            turn: TurnGeometry::default(),
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Piece {
    Line(f64),
    Arc { length: f64, curvature: f64 },
}

impl Piece {
    fn length(&self) -> f64 {
        match *self {
            Piece::Line(l) => l,
            Piece::Arc { length, .. } => length,
        }
    }

    fn curvature(&self) -> f64 {
        match *self {
            Piece::Line(_) => 0.0,
            Piece::Arc { curvature, .. } => curvature,
        }
    }
}

/// Pose on the travel lane of `row`, `along` meters from the entry end.
/// `lateral` is measured to the left of the travel direction.
fn lane_pose(row: &RowSpec, direction: Direction, along: f64, lateral: f64) -> Pose2D {
    let (p, heading) = match direction {
        Direction::Forward => (row.point_at(along, lateral), row.heading()),
        Direction::Reverse => (row.point_at(row.length() - along, -lateral), row.heading() + PI),
    };
    Pose2D::new(p.x, p.y, heading)
}

/// Start pose and the path pieces that follow it.
fn plan(map: &OrchardMap, spec: &TrajectorySpec, turn: &TurnGeometry, view_left: bool) -> Result<(Pose2D, Vec<Piece>)> {
    spec.validate()?;
    let row = map.row(spec.row_id).ok_or_else(|| Error::InvalidTrajectory(format!("unknown row {}", spec.row_id)))?;
    let len = row.length();
    if !(0.0..len).contains(&spec.start_offset) {
        return Err(Error::InvalidTrajectory(format!(
            "start_offset {} outside row of length {len}",
            spec.start_offset
        )));
    }
    let side = if view_left { 1.0 } else { -1.0 };
    // trees sit on the viewed side, half a row spacing away
    let lateral = -side * map.row_spacing / 2.0;
    let start = lane_pose(row, spec.direction, spec.start_offset, lateral);
    let remaining = len - spec.start_offset;
    let Some(target_id) = spec.target_row_id else {
        return Ok((start, vec![Piece::Line(remaining)]));
    };

    let target =
        map.row(target_id).ok_or_else(|| Error::InvalidTrajectory(format!("unknown target row {target_id}")))?;
    let exit = lane_pose(row, spec.direction, len + turn.exit_margin, lateral);
    let entry = lane_pose(target, spec.direction.flipped(), -turn.exit_margin, lateral);
    let heading = exit.heading();
    let normal = Vec2::new(-heading.y, heading.x) * side;
    let d = entry.position() - exit.position();
    let along = d.dot(heading);
    let shift = d.dot(normal);

    let r = map.row_spacing / 2.0;
    let k = side / r;
    let mut pieces = vec![Piece::Line(remaining + turn.exit_margin + along.max(0.0))];
    if shift >= 2.0 * r - 1e-9 {
        pieces.push(Piece::Arc { length: PI / 2.0 * r, curvature: k });
        pieces.push(Piece::Line((shift - 2.0 * r).max(0.0)));
        pieces.push(Piece::Arc { length: PI / 2.0 * r, curvature: k });
    } else if shift >= -2.0 * r {
        // swing out, loop back, straighten: lands `shift` over, facing back
        let alpha = ((shift + 2.0 * r) / (4.0 * r)).acos();
        pieces.push(Piece::Arc { length: alpha * r, curvature: -k });
        pieces.push(Piece::Arc { length: (PI + 2.0 * alpha) * r, curvature: k });
        pieces.push(Piece::Arc { length: alpha * r, curvature: -k });
    } else {
        return Err(Error::InvalidTrajectory(format!(
            "row {target_id} lies on the wrong side for a turn from row {}",
            spec.row_id
        )));
    }
    pieces.push(Piece::Line(turn.exit_margin + turn.entry_depth + (-along).max(0.0)));
    Ok((start, pieces))
}

/// Per-step (forward, dtheta) controls: each step covers `step` meters of
/// path and turns by the curvature integrated over that stretch.
fn controls(pieces: &[Piece], step: f64) -> Vec<(f64, f64)> {
    let total: f64 = pieces.iter().map(Piece::length).sum();
    let n = (total / step + 1e-9).floor() as usize;
    (0..n)
        .map(|k| {
            let (a, b) = (k as f64 * step, (k + 1) as f64 * step);
            let mut s0 = 0.0;
            let mut dtheta = 0.0;
            for p in pieces {
                let s1 = s0 + p.length();
                let overlap = b.min(s1) - a.max(s0);
                if overlap > 0.0 {
                    dtheta += p.curvature() * overlap;
                }
                s0 = s1;
            }
            (step, dtheta)
        })
        .collect()
}

fn integrate(start: Pose2D, controls: &[(f64, f64)]) -> Vec<Pose2D> {
    let mut poses = Vec::with_capacity(controls.len() + 1);
    poses.push(start);
    let mut pose = start;
    for &(forward, dtheta) in controls {
        pose = apply_increment(&pose, forward, dtheta);
        poses.push(pose);
    }
    poses
}

/// Ground-truth poses, one per `dt`, both endpoints included.
pub fn generate_trajectory(
    map: &OrchardMap,
    spec: &TrajectorySpec,
    turn: &TurnGeometry,
    view_left: bool,
) -> Result<Vec<Pose2D>> {
    let (start, pieces) = plan(map, spec, turn, view_left)?;
    Ok(integrate(start, &controls(&pieces, spec.speed * spec.dt)))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WheelReading {
    pub dist: f64,
    pub dtheta: f64,
}

/// Every reading taken at one instant.
#[derive(Clone, Debug, PartialEq)]
pub struct SimStep {
    pub t: f64,
    pub truth: Pose2D,
    pub wheel: WheelReading,
    pub imu_heading: f64,
    pub gnss: Vec2,
    pub gnss_corrected: Vec2,
    pub visual_forward: f64,
    pub trunks: Vec<TrunkObservation>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogHeader {
    pub name: String,
    pub seed: u64,
    /// Fingerprint of the map the log was recorded against.
    pub map: String,
    pub trajectory: TrajectorySpec,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimLog {
    pub header: LogHeader,
    pub steps: Vec<SimStep>,
}

/// A log together with the hidden receiver bias at every step.
#[derive(Clone, Debug, PartialEq)]
pub struct SimOutput {
    pub log: SimLog,
    pub bias: Vec<Vec2>,
}

pub fn simulate_log(
    map: &OrchardMap,
    spec: &TrajectorySpec,
    cfg: &SensorConfig,
    sim: &SimConfig,
    name: &str,
    seed: u64,
) -> Result<SimOutput> {
    cfg.validate().map_err(|m| Error::param("sensor", m))?;
    let (start, pieces) = plan(map, spec, &sim.turn, cfg.view_bearing_offset >= 0.0)?;
    let ctrl = controls(&pieces, spec.speed * spec.dt);
    let truth = integrate(start, &ctrl);
    let world = map.inflate_widths(sim.trunk_growth)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bias = GnssBiasState::default();
    let mut steps = Vec::with_capacity(truth.len());
    let mut bias_trace = Vec::with_capacity(truth.len());
    for (k, pose) in truth.iter().enumerate() {
        let (forward, dtheta) = if k == 0 { (0.0, 0.0) } else { ctrl[k - 1] };
        let wheel = if k == 0 {
            WheelReading::default()
        } else {
            WheelReading {
                dist: forward + normal(&mut rng, sim.wheel_sigma_per_m * forward.abs()),
                dtheta: dtheta + sim.wheel_drift_per_m * forward.abs() + normal(&mut rng, sim.wheel_dtheta_sigma),
            }
        };
        let imu_heading = observe_orientation(pose.theta, cfg, &mut rng);
        if k > 0 {
            bias = step_gnss_bias(&bias, cfg, &mut rng);
        }
        let gnss = observe_gnss(pose, &bias, cfg, &mut rng);
        let jitter = sim.gnss_corrected_sigma.hypot(sim.gnss_sway);
        let gnss_corrected = pose.position() + Vec2::new(normal(&mut rng, jitter), normal(&mut rng, jitter));
        let visual_forward =
            if k == 0 { 0.0 } else { forward + normal(&mut rng, sim.visual_sigma_per_m * forward.abs()) };
        let trunks = observe_trunks(pose, &world, cfg, &mut rng);
        steps.push(SimStep {
            t: k as f64 * spec.dt,
            truth: *pose,
            wheel,
            imu_heading,
            gnss,
            gnss_corrected,
            visual_forward,
            trunks,
        });
        bias_trace.push(bias.bias);
    }
    Ok(SimOutput {
        log: SimLog {
            header: LogHeader { name: name.to_string(), seed, map: map.fingerprint(), trajectory: *spec },
            steps,
        },
        bias: bias_trace,
    })
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderWire {
    kind: String,
    units: String,
    seed: u64,
    map: String,
    name: String,
    trajectory: TrajectorySpec,
}

#[derive(Serialize)]
struct RecordOut<'a, T: Serialize> {
    t: f64,
    kind: &'a str,
    data: T,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordIn {
    t: f64,
    kind: String,
    data: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ImuData {
    heading: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VisualData {
    forward: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrunksData {
    obs: Vec<TrunkObservation>,
}

const KINDS: [&str; 7] = ["truth", "wheel", "imu", "gnss", "gnss_corrected", "visual", "trunks"];

#[derive(Default)]
struct PartialStep {
    t: f64,
    truth: Option<Pose2D>,
    wheel: Option<WheelReading>,
    imu: Option<f64>,
    gnss: Option<Vec2>,
    gnss_corrected: Option<Vec2>,
    visual: Option<f64>,
    trunks: Option<Vec<TrunkObservation>>,
}

impl PartialStep {
    fn finish(self) -> Result<SimStep> {
        Ok(SimStep {
            t: self.t,
            truth: self.truth.ok_or(Error::MissingStream("truth"))?,
            wheel: self.wheel.ok_or(Error::MissingStream("wheel"))?,
            imu_heading: self.imu.ok_or(Error::MissingStream("imu"))?,
            gnss: self.gnss.ok_or(Error::MissingStream("gnss"))?,
            gnss_corrected: self.gnss_corrected.ok_or(Error::MissingStream("gnss_corrected"))?,
            visual_forward: self.visual.ok_or(Error::MissingStream("visual"))?,
            trunks: self.trunks.ok_or(Error::MissingStream("trunks"))?,
        })
    }
}

fn set_once<T>(slot: &mut Option<T>, value: T, kind: &str, t: f64) -> Result<()> {
    if slot.replace(value).is_some() {
        return Err(Error::InvalidLog(format!("two {kind} records at t={t}")));
    }
    Ok(())
}

fn data<T: serde::de::DeserializeOwned>(value: serde_json::Value, kind: &str, line: usize) -> Result<T> {
    serde_json::from_value(value)
        .map_err(|e| Error::Parse { what: format!("log line {line} ({kind})"), message: e.to_string() })
}

impl SimLog {
    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        let header = HeaderWire {
            kind: "header".into(),
            units: UNITS.into(),
            seed: self.header.seed,
            map: self.header.map.clone(),
            name: self.header.name.clone(),
            trajectory: self.header.trajectory,
        };
        push_line(&mut out, &header);
        for s in &self.steps {
            let t = s.t;
            push_line(&mut out, &RecordOut { t, kind: "truth", data: s.truth });
            push_line(&mut out, &RecordOut { t, kind: "wheel", data: s.wheel });
            push_line(&mut out, &RecordOut { t, kind: "imu", data: ImuData { heading: s.imu_heading } });
            push_line(&mut out, &RecordOut { t, kind: "gnss", data: s.gnss });
            push_line(&mut out, &RecordOut { t, kind: "gnss_corrected", data: s.gnss_corrected });
            push_line(&mut out, &RecordOut { t, kind: "visual", data: VisualData { forward: s.visual_forward } });
            push_line(&mut out, &RecordOut { t, kind: "trunks", data: TrunksData { obs: s.trunks.clone() } });
        }
        out
    }

    pub fn from_ndjson(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or_else(|| Error::InvalidLog("empty log".into()))?;
        let header: HeaderWire = serde_json::from_str(first)
            .map_err(|e| Error::Parse { what: "log header".into(), message: e.to_string() })?;
        if header.kind != "header" {
            return Err(Error::InvalidLog(format!("first line has kind {:?}, expected header", header.kind)));
        }
        if header.units != UNITS {
            return Err(Error::InvalidLog(format!("units {:?}, expected {UNITS:?}", header.units)));
        }
        let mut steps = Vec::new();
        let mut current: Option<PartialStep> = None;
        for (i, line) in lines {
            let n = i + 1;
            let rec: RecordIn = serde_json::from_str(line)
                .map_err(|e| Error::Parse { what: format!("log line {n}"), message: e.to_string() })?;
            if !rec.t.is_finite() {
                return Err(Error::InvalidLog(format!("line {n}: non-finite t")));
            }
            let fresh = match &current {
                Some(p) if p.t == rec.t => false,
                Some(p) if rec.t < p.t => {
                    return Err(Error::InvalidLog(format!("line {n}: t={} goes backwards from {}", rec.t, p.t)))
                }
                _ => true,
            };
            if fresh {
                if let Some(p) = current.take() {
                    steps.push(p.finish()?);
                }
                current = Some(PartialStep { t: rec.t, ..PartialStep::default() });
            }
            let p = current.as_mut().expect("step in progress");
            let t = rec.t;
            match rec.kind.as_str() {
                "truth" => set_once(&mut p.truth, data(rec.data, "truth", n)?, "truth", t)?,
                "wheel" => set_once(&mut p.wheel, data(rec.data, "wheel", n)?, "wheel", t)?,
                "imu" => set_once(&mut p.imu, data::<ImuData>(rec.data, "imu", n)?.heading, "imu", t)?,
                "gnss" => set_once(&mut p.gnss, data(rec.data, "gnss", n)?, "gnss", t)?,
                "gnss_corrected" => {
                    set_once(&mut p.gnss_corrected, data(rec.data, "gnss_corrected", n)?, "gnss_corrected", t)?
                }
                "visual" => set_once(&mut p.visual, data::<VisualData>(rec.data, "visual", n)?.forward, "visual", t)?,
                "trunks" => set_once(&mut p.trunks, data::<TrunksData>(rec.data, "trunks", n)?.obs, "trunks", t)?,
                other => {
                    return Err(Error::InvalidLog(format!(
                        "line {n}: unknown kind {other:?} (expected one of {KINDS:?})"
                    )))
                }
            }
        }
        if let Some(p) = current {
            steps.push(p.finish()?);
        }
        if steps.is_empty() {
            return Err(Error::InvalidLog("log has no records".into()));
        }
        Ok(Self {
            header: LogHeader { name: header.name, seed: header.seed, map: header.map, trajectory: header.trajectory },
            steps,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_ndjson(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_ndjson()).map_err(|e| Error::io(path, e))
    }

    pub fn kind(&self) -> TrajectoryKind {
        self.header.trajectory.kind
    }

    /// Cumulative ground-truth path length at each step.
    pub fn cumulative_distance(&self) -> Vec<f64> {
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(self.steps.len());
        for (i, s) in self.steps.iter().enumerate() {
            if i > 0 {
                acc += s.truth.distance_to(&self.steps[i - 1].truth);
            }
            out.push(acc);
        }
        out
    }
}

fn push_line<T: Serialize>(out: &mut String, value: &T) {
    let line = serde_json::to_string(value).expect("log records serialize");
    let _ = writeln!(out, "{line}");
}

#[derive(Clone, Debug, PartialEq)]
pub struct Campaign {
    pub straight: Vec<SimLog>,
    pub turns: Vec<SimLog>,
}

pub type NamedSpecs = Vec<(String, TrajectorySpec)>;

/// Names and trajectories of the 12 straight runs and 43 distinct turns.
pub fn campaign_specs(map: &OrchardMap, sim: &SimConfig, seed: u64) -> Result<(NamedSpecs, NamedSpecs)> {
    if map.rows.len() < STRAIGHT_RUNS {
        return Err(Error::Insufficient(format!("map has {} rows, a campaign needs {STRAIGHT_RUNS}", map.rows.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0, 0));
    let mut row_ids: Vec<i32> = map.rows.iter().map(|r| r.row_id).collect();
    row_ids.sort_unstable();

    let mut picks = row_ids.clone();
    picks.shuffle(&mut rng);
    let straight = picks[..STRAIGHT_RUNS]
        .iter()
        .enumerate()
        .map(|(i, &row)| {
            let dir = if rng.random::<bool>() { Direction::Forward } else { Direction::Reverse };
            (format!("straight_{i:02}_row{row:02}_{}", dir.as_str()), TrajectorySpec::straight(row, dir))
        })
        .collect();

    let mut candidates = Vec::new();
    for &row in &row_ids {
        for target in [row - 1, row, row + 1] {
            if row_ids.binary_search(&target).is_ok() {
                for dir in [Direction::Forward, Direction::Reverse] {
                    candidates.push((row, target, dir));
                }
            }
        }
    }
    if candidates.len() < TURN_RUNS {
        return Err(Error::Insufficient(format!(
            "only {} distinct row changes available, need {TURN_RUNS}",
            candidates.len()
        )));
    }
    candidates.shuffle(&mut rng);
    let turns = candidates[..TURN_RUNS]
        .iter()
        .enumerate()
        .map(|(i, &(row, target, dir))| {
            let len = map.row(row).expect("row listed").length();
            let offset = (len - sim.turn.approach).max(0.0);
            (
                format!("turn_{i:02}_row{row:02}_to{target:02}_{}", dir.as_str()),
                TrajectorySpec::row_change(row, target, dir, offset),
            )
        })
        .collect();
    Ok((straight, turns))
}

/// Simulates the full campaign; logs are generated in parallel from derived seeds.
pub fn build_campaign(map: &OrchardMap, cfg: &SensorConfig, sim: &SimConfig, seed: u64) -> Result<Campaign> {
    let (straight, turns) = campaign_specs(map, sim, seed)?;
    let run = |group: u64, specs: &[(String, TrajectorySpec)]| -> Result<Vec<SimLog>> {
        specs
            .par_iter()
            .enumerate()
            .map(|(i, (name, spec))| {
                simulate_log(map, spec, cfg, sim, name, derive_seed(seed, group, i as u64)).map(|o| o.log)
            })
            .collect()
    };
    Ok(Campaign { straight: run(1, &straight)?, turns: run(2, &turns)? })
}
