//! Evaluation protocols: row and turn trials, suites, result tables and the
//! receiver drift analysis.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{init_area, init_cluster, FilterParams, ParticleFilter, StepOutcome};
use crate::geom::{Pose2D, Vec2};
use crate::map::OrchardMap;
use crate::motion::{
    gnss_increment, visual_increment, wheel_imu_increment, wheel_increment, MotionIncrement, OdometryMode,
};
use crate::seed::derive_seed;
use crate::sensing::SensorConfig;
use crate::sim::{Campaign, SimLog, SimStep, TrajectoryKind};

/// A converged estimate within this distance of the truth counts as success.
pub const SUCCESS_RADIUS: f64 = 0.5;

pub fn is_success(final_error: f64) -> bool {
    final_error <= SUCCESS_RADIUS
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    RowsLarge,
    RowsSmall,
    Turns,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [Protocol::RowsLarge, Protocol::RowsSmall, Protocol::Turns];

    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::RowsLarge => "rows-large",
            Protocol::RowsSmall => "rows-small",
            Protocol::Turns => "turns",
        }
    }

    fn title(self) -> &'static str {
        match self {
            Protocol::RowsLarge => "Rows, 30 m x 30 m initialization",
            Protocol::RowsSmall => "Rows, 10 m x 10 m initialization around first GNSS fix",
            Protocol::Turns => "Row-change turns",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Protocol::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown protocol {s:?} (expected rows-large, rows-small or turns)"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitArea {
    /// Square of `large_area_side` that contains the start point.
    Large,
    /// Square of `small_area_side` centered on the first GNSS fix.
    Small,
}

/// Motion increment between two consecutive log steps under `mode`.
pub fn odometry_increment(mode: OdometryMode, prev: &SimStep, curr: &SimStep) -> MotionIncrement {
    match mode {
        OdometryMode::Wheel => wheel_increment(curr.wheel.dist, curr.wheel.dtheta),
        OdometryMode::WheelImu => wheel_imu_increment(curr.wheel.dist, prev.imu_heading, curr.imu_heading),
        OdometryMode::Visual => visual_increment(curr.visual_forward, prev.imu_heading, curr.imu_heading),
        OdometryMode::Gnss => gnss_increment(prev.gnss, curr.gnss, curr.imu_heading, prev.imu_heading),
    }
}

/// Feeds log step `k` to the filter. No motion is applied at `first`, the
/// step the filter was initialized on.
pub(crate) fn feed_step(
    filter: &mut ParticleFilter,
    map: &OrchardMap,
    sensor: &SensorConfig,
    mode: OdometryMode,
    log: &SimLog,
    k: usize,
    first: usize,
) -> StepOutcome {
    let steps = &log.steps;
    let inc = (k > first).then(|| odometry_increment(mode, &steps[k - 1], &steps[k]));
    let heading = mode.uses_orientation().then_some(steps[k].imu_heading);
    filter.step(map, sensor, inc.as_ref(), &steps[k].trunks, heading)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub odometry_mode: OdometryMode,
    pub start_id: usize,
    pub trial_index: usize,
    pub converged: bool,
    pub success: bool,
    pub distance_traveled: f64,
    pub final_error: f64,
}

/// Map, sensor geometry, parameters and odometry mode shared by many trials.
#[derive(Clone, Debug)]
pub struct TrialContext<'a> {
    /// The surveyed map with `width_inflation` applied.
    pub map: OrchardMap,
    pub sensor: &'a SensorConfig,
    pub params: FilterParams,
    pub mode: OdometryMode,
}

pub(crate) fn position_error(estimate: &Pose2D, truth: &Pose2D) -> f64 {
    (estimate.position() - truth.position()).norm()
}

impl<'a> TrialContext<'a> {
    pub fn new(map: &OrchardMap, sensor: &'a SensorConfig, params: FilterParams, mode: OdometryMode) -> Result<Self> {
        params.validate()?;
        Ok(Self { map: map.inflate_widths(params.width_inflation)?, sensor, params, mode })
    }

    fn step(&self, filter: &mut ParticleFilter, log: &SimLog, k: usize, first: usize) {
        feed_step(filter, &self.map, self.sensor, self.mode, log, k, first);
    }

    /// Global localization from `start_step` until the first converged step.
    pub fn run_row_trial(
        &self,
        log: &SimLog,
        init: InitArea,
        start_step: usize,
        start_id: usize,
        trial_index: usize,
        seed: u64,
    ) -> Result<TrialResult> {
        let steps = &log.steps;
        if start_step >= steps.len() {
            return Err(Error::param("start_point", format!("step {start_step} outside log of {} steps", steps.len())));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = &self.params;
        let s0 = &steps[start_step];
        let set = match init {
            InitArea::Large => {
                let q = p.large_area_side / 4.0;
                let center = s0.truth.position() + Vec2::new(rng.random_range(-q..q), rng.random_range(-q..q));
                init_area(center, p.large_area_side, s0.imu_heading, p.heading_halfwidth, p.particle_count, &mut rng)?
            }
            InitArea::Small => {
                init_area(s0.gnss, p.small_area_side, s0.imu_heading, p.heading_halfwidth, p.particle_count, &mut rng)?
            }
        };
        let mut filter = ParticleFilter::new(set, *p, rng);
        let cum = log.cumulative_distance();
        for k in start_step..steps.len() {
            self.step(&mut filter, log, k, start_step);
            if filter.trunk_updates > 0 && filter.groups().converged {
                let final_error = position_error(&filter.estimate(), &steps[k].truth);
                return Ok(TrialResult {
                    odometry_mode: self.mode,
                    start_id,
                    trial_index,
                    converged: true,
                    success: is_success(final_error),
                    distance_traveled: cum[k] - cum[start_step],
                    final_error,
                });
            }
        }
        let last = steps.len() - 1;
        Ok(TrialResult {
            odometry_mode: self.mode,
            start_id,
            trial_index,
            converged: false,
            success: false,
            distance_traveled: cum[last] - cum[start_step],
            final_error: position_error(&filter.estimate(), &steps[last].truth),
        })
    }

    /// Tracking through a headland turn from a tight cluster at the true start.
    pub fn run_turn_trial(&self, log: &SimLog, start_id: usize, trial_index: usize, seed: u64) -> Result<TrialResult> {
        if log.kind() != TrajectoryKind::RowChange {
            return Err(Error::InvalidLog(format!("{} is not a row-change log", log.header.name)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = &self.params;
        let set = init_cluster(
            &log.steps[0].truth,
            p.cluster_pos_sigma,
            p.cluster_heading_sigma,
            p.particle_count,
            &mut rng,
        )?;
        let mut filter = ParticleFilter::new(set, *p, rng);
        for k in 0..log.steps.len() {
            self.step(&mut filter, log, k, 0);
        }
        let last = log.steps.last().expect("logs are non-empty");
        let final_error = position_error(&filter.estimate(), &last.truth);
        let converged = filter.groups().converged;
        Ok(TrialResult {
            odometry_mode: self.mode,
            start_id,
            trial_index,
            converged,
            success: converged && is_success(final_error),
            distance_traveled: *log.cumulative_distance().last().expect("non-empty"),
            final_error,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StartPoint {
    pub start_id: usize,
    pub log_index: usize,
    pub step: usize,
}

/// One start per equal-length arc of the logs' usable spans. The last
/// `tail_margin` meters of each log are excluded so every start has room to
/// converge.
pub fn stratified_starts(logs: &[SimLog], count: usize, tail_margin: f64, seed: u64) -> Result<Vec<StartPoint>> {
    let cums: Vec<Vec<f64>> = logs.iter().map(SimLog::cumulative_distance).collect();
    let spans: Vec<f64> = cums.iter().map(|c| (c.last().copied().unwrap_or(0.0) - tail_margin).max(0.0)).collect();
    let total: f64 = spans.iter().sum();
    if count == 0 || !(total > 0.0) {
        return Err(Error::Insufficient("no usable straight-row span for start points".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, u64::MAX, 0));
    let arc = total / count as f64;
    let mut out = Vec::with_capacity(count);
    for start_id in 0..count {
        let mut d = (start_id as f64 + rng.random::<f64>()) * arc;
        let mut log_index = 0;
        while log_index + 1 < spans.len() && d >= spans[log_index] {
            d -= spans[log_index];
            log_index += 1;
        }
        let c = &cums[log_index];
        let step = c.partition_point(|&x| x < d).min(c.len() - 1);
        out.push(StartPoint { start_id, log_index, step });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub starts: usize,
    pub trials_per_start: usize,
    pub tail_margin: f64,
    pub parallel: bool,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self { starts: 40, trials_per_start: 20, tail_margin: 20.0, parallel: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub odometry_mode: OdometryMode,
    pub protocol: Protocol,
    pub accuracy: f64,
    /// Over successful trials; absent when none succeeded.
    pub mean_distance: Option<f64>,
    pub std_distance: Option<f64>,
    pub trial_count: usize,
    pub success_count: usize,
}

pub fn summarize(mode: OdometryMode, protocol: Protocol, results: &[TrialResult]) -> SuiteSummary {
    let d: Vec<f64> = results.iter().filter(|r| r.success).map(|r| r.distance_traveled).collect();
    let n = d.len();
    let mean = (n > 0).then(|| d.iter().sum::<f64>() / n as f64);
    let std =
        mean.map(
            |m| {
                if n < 2 {
                    0.0
                } else {
                    (d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
                }
            },
        );
    SuiteSummary {
        odometry_mode: mode,
        protocol,
        accuracy: if results.is_empty() { 0.0 } else { n as f64 / results.len() as f64 },
        mean_distance: mean,
        std_distance: std,
        trial_count: results.len(),
        success_count: n,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteRun {
    pub results: Vec<TrialResult>,
    pub summary: SuiteSummary,
}

/// Runs every (start, trial) job of a protocol. Each job's seed depends only on
/// `(seed, start_id, trial_index)`, so serial and parallel runs agree.
#[allow(clippy::too_many_arguments)]
pub fn run_suite(
    campaign: &Campaign,
    map: &OrchardMap,
    sensor: &SensorConfig,
    params: &FilterParams,
    mode: OdometryMode,
    protocol: Protocol,
    cfg: &SuiteConfig,
    seed: u64,
) -> Result<SuiteRun> {
    let ctx = TrialContext::new(map, sensor, *params, mode)?;
    let per = cfg.trials_per_start;
    let results = match protocol {
        Protocol::RowsLarge | Protocol::RowsSmall => {
            let init = if protocol == Protocol::RowsLarge { InitArea::Large } else { InitArea::Small };
            let starts = stratified_starts(&campaign.straight, cfg.starts, cfg.tail_margin, seed)?;
            let job = |j: usize| {
                let s = &starts[j / per];
                let trial = j % per;
                ctx.run_row_trial(
                    &campaign.straight[s.log_index],
                    init,
                    s.step,
                    s.start_id,
                    trial,
                    derive_seed(seed, s.start_id as u64, trial as u64),
                )
            };
            run_jobs(starts.len() * per, cfg.parallel, job)?
        }
        Protocol::Turns => {
            let job = |j: usize| {
                let (turn, trial) = (j / per, j % per);
                ctx.run_turn_trial(&campaign.turns[turn], turn, trial, derive_seed(seed, turn as u64, trial as u64))
            };
            run_jobs(campaign.turns.len() * per, cfg.parallel, job)?
        }
    };
    let summary = summarize(mode, protocol, &results);
    Ok(SuiteRun { results, summary })
}

fn run_jobs<F>(n: usize, parallel: bool, job: F) -> Result<Vec<TrialResult>>
where
    F: Fn(usize) -> Result<TrialResult> + Sync + Send,
{
    if parallel {
        (0..n).into_par_iter().map(job).collect()
    } else {
        (0..n).map(job).collect()
    }
}

#[derive(Serialize)]
struct ResultRecord<'a> {
    protocol: Protocol,
    #[serde(flatten)]
    result: &'a TrialResult,
    params: &'a str,
}

/// One line per trial, tagged with the protocol and parameter fingerprint.
pub fn results_ndjson(protocol: Protocol, results: &[TrialResult], params_fingerprint: &str) -> String {
    let mut out = String::new();
    for r in results {
        let rec = ResultRecord { protocol, result: r, params: params_fingerprint };
        let _ = writeln!(out, "{}", serde_json::to_string(&rec).expect("results serialize"));
    }
    out
}

pub fn summaries_ndjson(summaries: &[SuiteSummary]) -> String {
    summaries.iter().map(|s| serde_json::to_string(s).expect("summaries serialize") + "\n").collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TableRow {
    pub protocol: Protocol,
    pub mode: OdometryMode,
    pub accuracy: f64,
    pub mean_distance: Option<f64>,
    pub std_distance: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TableReport {
    pub rows: Vec<TableRow>,
    pub text: String,
}

/// Rows ordered by protocol, then wheel, wheel_imu, visual, gnss; accuracy
/// to three decimals and distances to two.
pub fn summarize_tables(summaries: &[SuiteSummary]) -> Result<TableReport> {
    if summaries.is_empty() {
        return Err(Error::Insufficient("no summaries to tabulate".into()));
    }
    let mut rows: Vec<TableRow> = summaries
        .iter()
        .map(|s| TableRow {
            protocol: s.protocol,
            mode: s.odometry_mode,
            accuracy: s.accuracy,
            mean_distance: s.mean_distance,
            std_distance: s.std_distance,
        })
        .collect();
    rows.sort_by_key(|r| (r.protocol, r.mode));
    let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.2}"));
    let mut text = String::new();
    let mut current = None;
    for r in &rows {
        if current != Some(r.protocol) {
            if current.is_some() {
                text.push('\n');
            }
            current = Some(r.protocol);
            let _ = writeln!(text, "{}", r.protocol.title());
            let _ = writeln!(text, "{:<14}{:>10}{:>15}{:>16}", "Odometry", "Accuracy", "Distance (m)", "Std. Dev. (m)");
        }
        let _ = writeln!(
            text,
            "{:<14}{:>10.3}{:>15}{:>16}",
            r.mode.label(),
            r.accuracy,
            cell(r.mean_distance),
            cell(r.std_distance)
        );
    }
    Ok(TableReport { rows, text })
}

/// Degree-1 least-squares smoothing over each point and up to five neighbors
/// per side. Near the ends the window shrinks symmetrically; the first and
/// last points use their three nearest readings.
pub fn smooth_positions(series: &[(f64, Vec2)]) -> Result<Vec<(f64, Vec2)>> {
    let n = series.len();
    if n < 3 {
        return Err(Error::Insufficient(format!("{n} readings; smoothing needs at least 3")));
    }
    let out = (0..n)
        .map(|i| {
            let half = 5.min(i).min(n - 1 - i);
            let (lo, hi) = if half == 0 {
                if i == 0 {
                    (0, 2)
                } else {
                    (n - 3, n - 1)
                }
            } else {
                (i - half, i + half)
            };
            (series[i].0, fit_at(&series[lo..=hi], series[i].0))
        })
        .collect();
    Ok(out)
}

fn fit_at(window: &[(f64, Vec2)], t: f64) -> Vec2 {
    let m = window.len() as f64;
    let tm = window.iter().map(|p| p.0).sum::<f64>() / m;
    let pm = window.iter().fold(Vec2::ZERO, |acc, p| acc + p.1) * (1.0 / m);
    let mut stt = 0.0;
    let mut stp = Vec2::ZERO;
    for &(ti, pi) in window {
        let dt = ti - tm;
        stt += dt * dt;
        stp = stp + (pi - pm) * dt;
    }
    if stt > 0.0 {
        pm + stp * ((t - tm) / stt)
    } else {
        pm
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OffsetReading {
    pub t: f64,
    pub axial: f64,
    pub transverse: f64,
    pub euclidean: f64,
}

/// Splits an offset into components along the heading and to its left.
pub fn offset_components(offset: Vec2, heading: f64) -> (f64, f64, f64) {
    let h = Vec2::from_heading(heading);
    let left = Vec2::new(-h.y, h.x);
    (offset.dot(h), offset.dot(left), offset.norm())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

/// Quartiles with linear interpolation between order statistics.
pub fn quartiles(values: &[f64]) -> Result<Quartiles> {
    if values.is_empty() {
        return Err(Error::Insufficient("quartiles of an empty set".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let at = |q: f64| {
        let pos = q * (v.len() - 1) as f64;
        let (i, frac) = (pos.floor() as usize, pos.fract());
        if i + 1 < v.len() {
            v[i] + (v[i + 1] - v[i]) * frac
        } else {
            v[i]
        }
    };
    Ok(Quartiles { q1: at(0.25), median: at(0.5), q3: at(0.75) })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftStats {
    pub readings: Vec<OffsetReading>,
    /// |Δeuclidean| / Δt between consecutive readings.
    pub rates: Vec<f64>,
    pub axial: Quartiles,
    pub transverse: Quartiles,
    pub euclidean: Quartiles,
    pub rate: Quartiles,
}

/// Offset of the uncorrected receiver from where the corrected one says it
/// should be. `mounting_offset` is the uncorrected antenna's position relative
/// to the corrected one, in the vehicle frame.
pub fn gnss_offset_series(log: &SimLog, mounting_offset: Vec2) -> Result<DriftStats> {
    let raw: Vec<(f64, Vec2)> = log.steps.iter().map(|s| (s.t, s.gnss)).collect();
    let corrected: Vec<(f64, Vec2)> = log.steps.iter().map(|s| (s.t, s.gnss_corrected)).collect();
    let raw = smooth_positions(&raw)?;
    let corrected = smooth_positions(&corrected)?;
    let readings: Vec<OffsetReading> = log
        .steps
        .iter()
        .zip(raw.iter().zip(&corrected))
        .map(|(s, (&(t, r), &(_, c)))| {
            let expected = c + mounting_offset.rotated(s.imu_heading);
            let (axial, transverse, euclidean) = offset_components(r - expected, s.imu_heading);
            OffsetReading { t, axial, transverse, euclidean }
        })
        .collect();
    let rates: Vec<f64> =
        readings.windows(2).map(|w| (w[1].euclidean - w[0].euclidean).abs() / (w[1].t - w[0].t)).collect();
    let column = |f: fn(&OffsetReading) -> f64| readings.iter().map(f).collect::<Vec<_>>();
    Ok(DriftStats {
        axial: quartiles(&column(|r| r.axial))?,
        transverse: quartiles(&column(|r| r.transverse))?,
        euclidean: quartiles(&column(|r| r.euclidean))?,
        rate: quartiles(&rates)?,
        readings,
        rates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::{generate_map, MapGenParams};
    use crate::sim::{simulate_log, Direction, SimConfig, TrajectorySpec};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn result(success: bool, d: f64) -> TrialResult {
        TrialResult {
            odometry_mode: OdometryMode::Gnss,
            start_id: 0,
            trial_index: 0,
            converged: success,
            success,
            distance_traveled: d,
            final_error: if success { 0.1 } else { 2.0 },
        }
    }

    #[test]
    fn success_threshold() {
        assert!(is_success(0.3));
        assert!(is_success(0.5));
        assert!(!is_success(0.6));
    }

    #[test]
    fn summary_statistics() {
        let rs = [result(true, 4.0), result(true, 8.0), result(false, 30.0), result(true, 6.0)];
        let s = summarize(OdometryMode::Gnss, Protocol::RowsLarge, &rs);
        assert_eq!(s.accuracy, 0.75);
        assert_eq!(s.mean_distance, Some(6.0));
        assert_abs_diff_eq!(s.std_distance.unwrap(), 2.0, epsilon = 1e-12);
        assert_eq!((s.trial_count, s.success_count), (4, 3));

        let none = summarize(OdometryMode::Wheel, Protocol::Turns, &[result(false, 1.0)]);
        assert_eq!((none.accuracy, none.mean_distance), (0.0, None));
    }

    #[test]
    fn tables_order_and_precision() {
        let mk = |mode, acc| SuiteSummary {
            odometry_mode: mode,
            protocol: Protocol::RowsLarge,
            accuracy: acc,
            mean_distance: Some(9.4567),
            std_distance: Some(5.0),
            trial_count: 800,
            success_count: 740,
        };
        let one = summarize_tables(&[mk(OdometryMode::Gnss, 0.996)]).unwrap();
        assert_eq!(one.rows.len(), 1);

        let report = summarize_tables(&[
            mk(OdometryMode::Gnss, 0.996),
            mk(OdometryMode::Visual, 1.0),
            mk(OdometryMode::Wheel, 0.925),
            mk(OdometryMode::WheelImu, 0.995),
        ])
        .unwrap();
        let order: Vec<OdometryMode> = report.rows.iter().map(|r| r.mode).collect();
        assert_eq!(order, OdometryMode::ALL.to_vec());
        let lines: Vec<&str> = report.text.lines().collect();
        assert_eq!(lines.len(), 6);
        assert!(lines[2].starts_with("Wheel ") && lines[2].contains("0.925") && lines[2].contains("9.46"));
        assert!(lines[3].starts_with("Wheel w/ IMU") && lines[3].contains("5.00"));
        assert!(summarize_tables(&[]).is_err());
    }

    #[test]
    fn protocol_strings() {
        for p in Protocol::ALL {
            assert_eq!(p.as_str().parse::<Protocol>().unwrap(), p);
            assert_eq!(serde_json::to_value(p).unwrap(), p.as_str());
        }
        assert!("rows".parse::<Protocol>().is_err());
    }

    fn series(f: impl Fn(f64) -> Vec2, n: usize) -> Vec<(f64, Vec2)> {
        (0..n).map(|i| (i as f64 * 0.2, f(i as f64 * 0.2))).collect()
    }

    /// Least squares by the un-centered normal equations, solved with Cramer's rule.
    fn lsq_oracle(window: &[(f64, Vec2)], t: f64) -> Vec2 {
        let n = window.len() as f64;
        let (st, stt) = window.iter().fold((0.0, 0.0), |(a, b), p| (a + p.0, b + p.0 * p.0));
        let det = n * stt - st * st;
        let solve = |sel: fn(Vec2) -> f64| {
            let (sy, sty) = window.iter().fold((0.0, 0.0), |(a, b), p| (a + sel(p.1), b + p.0 * sel(p.1)));
            let intercept = (stt * sy - st * sty) / det;
            let slope = (n * sty - st * sy) / det;
            intercept + slope * t
        };
        Vec2::new(solve(|v| v.x), solve(|v| v.y))
    }

    #[test]
    fn smoothing_examples() {
        let flat = series(|_| Vec2::new(3.0, -1.0), 30);
        for (a, b) in smooth_positions(&flat).unwrap().iter().zip(&flat) {
            assert!((a.1 - b.1).norm() < 1e-12);
        }
        let line = series(|t| Vec2::new(1.0 + 0.4 * t, -2.0 + 0.1 * t), 30);
        for (a, b) in smooth_positions(&line).unwrap().iter().zip(&line) {
            assert!((a.1 - b.1).norm() < 1e-9);
        }

        let mut spiked = line.clone();
        spiked[15].1.y += 0.5;
        let smoothed = smooth_positions(&spiked).unwrap();
        // centered window of 11 evenly spaced points: leverage of the middle point is 1/11
        assert_abs_diff_eq!(smoothed[15].1.y - line[15].1.y, 0.5 / 11.0, epsilon = 1e-9);
        for i in 0..spiked.len() {
            let half = 5.min(i).min(spiked.len() - 1 - i);
            let (lo, hi) = match (half, i) {
                (0, 0) => (0, 2),
                (0, _) => (spiked.len() - 3, spiked.len() - 1),
                _ => (i - half, i + half),
            };
            let want = lsq_oracle(&spiked[lo..=hi], spiked[i].0);
            assert!((smoothed[i].1 - want).norm() < 1e-9, "i={i}");
            assert!((smoothed[i].1.y - line[i].1.y).abs() <= 0.5 + 1e-12);
        }
        assert!(smooth_positions(&line[..2]).is_err());
    }

    #[test]
    fn offset_decomposition_example() {
        let (axial, transverse, euclidean) = offset_components(Vec2::new(-0.25, -0.64), 0.0);
        assert_abs_diff_eq!(axial, -0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(transverse, -0.64, epsilon = 1e-12);
        assert_abs_diff_eq!(euclidean, 0.687_095, epsilon = 1e-5);
        let (a, t, _) = offset_components(Vec2::new(0.0, 1.0), std::f64::consts::FRAC_PI_2);
        assert_abs_diff_eq!(a, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn quartile_interpolation() {
        let q = quartiles(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!((q.q1, q.median, q.q3), (1.75, 2.5, 3.25));
        let q = quartiles(&[7.0]).unwrap();
        assert_eq!((q.q1, q.median, q.q3), (7.0, 7.0, 7.0));
        assert!(quartiles(&[]).is_err());
    }

    fn quiet_log(row: i32) -> SimLog {
        let map = generate_map(&MapGenParams::default(), 1).unwrap();
        simulate_log(
            &map,
            &TrajectorySpec::straight(row, Direction::Forward),
            &SensorConfig::noiseless(),
            &SimConfig::noiseless(),
            "quiet",
            1,
        )
        .unwrap()
        .log
    }

    #[test]
    fn drift_zero_and_planted_bias() {
        let mut log = quiet_log(2);
        let stats = gnss_offset_series(&log, Vec2::ZERO).unwrap();
        assert!(stats.readings.iter().all(|r| r.euclidean < 1e-9));

        for s in &mut log.steps {
            s.gnss = s.gnss + Vec2::new(0.3, 0.4);
        }
        let stats = gnss_offset_series(&log, Vec2::ZERO).unwrap();
        for r in &stats.readings {
            assert_abs_diff_eq!(r.euclidean, 0.5, epsilon = 1e-9);
            assert_abs_diff_eq!(
                r.axial * r.axial + r.transverse * r.transverse,
                r.euclidean * r.euclidean,
                epsilon = 1e-9
            );
        }
        assert!(stats.rates.iter().all(|&r| r < 1e-6));
        assert_abs_diff_eq!(stats.euclidean.median, 0.5, epsilon = 1e-9);
    }

    #[test]
    fn drift_mounting_offset_is_removed() {
        let mut log = quiet_log(3);
        let mount = Vec2::new(-0.2, 0.1);
        for s in &mut log.steps {
            s.gnss = s.gnss + mount.rotated(s.imu_heading);
        }
        let stats = gnss_offset_series(&log, mount).unwrap();
        assert!(stats.readings.iter().all(|r| r.euclidean < 1e-9));
    }

    #[test]
    fn starts_are_stratified_and_reproducible() {
        let logs: Vec<SimLog> = (0..3).map(quiet_log).collect();
        let a = stratified_starts(&logs, 40, 20.0, 9).unwrap();
        assert_eq!(a, stratified_starts(&logs, 40, 20.0, 9).unwrap());
        assert_ne!(a, stratified_starts(&logs, 40, 20.0, 10).unwrap());
        // 3 logs × 70 usable meters over 40 arcs
        let arc = 210.0 / 40.0;
        for s in &a {
            let cum = logs[s.log_index].cumulative_distance();
            assert!(cum[s.step] <= 70.0 + 0.08);
            let global = s.log_index as f64 * 70.0 + cum[s.step];
            let lo = s.start_id as f64 * arc;
            assert!(global >= lo - 1e-9 && global <= lo + arc + 0.08, "{s:?} at {global}");
        }
        assert!(stratified_starts(&logs, 40, 500.0, 9).is_err());
    }

    proptest! {
        #[test]
        fn decomposition_is_pythagorean(x in -2.0f64..2.0, y in -2.0f64..2.0, h in -3.2f64..3.2) {
            let (a, t, e) = offset_components(Vec2::new(x, y), h);
            prop_assert!((a * a + t * t - e * e).abs() < 1e-9);
        }

        #[test]
        fn smoothing_preserves_lines(a in -5.0f64..5.0, b in -1.0f64..1.0, n in 3usize..40) {
            let s = series(|t| Vec2::new(a + b * t, b - a * t), n);
            for (p, q) in smooth_positions(&s).unwrap().iter().zip(&s) {
                prop_assert!((p.1 - q.1).norm() < 1e-9);
            }
        }
    }
}
