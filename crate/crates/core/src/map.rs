//! Orchard landmark map: trunks and posts grouped into rows, plus the
//! uniform-grid index used for field-of-view queries.

use std::collections::{HashMap, HashSet};
use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{wrap_angle, Pose2D, Vec2};

/// Landmarks must lie within this distance of their row segment.
pub const ROW_TOLERANCE: f64 = 1.5;
/// Largest admissible trunk or post width.
pub const MAX_WIDTH: f64 = 1.0;
/// Upper bound (exclusive) for a growth adjustment.
pub const MAX_INFLATION: f64 = 0.05;
pub const DEFAULT_WIDTH_INFLATION: f64 = 0.003;
/// Side of a spatial index cell.
pub const GRID_CELL: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LandmarkKind {
    Tree,
    Post,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Landmark {
    pub id: u32,
    pub row_id: i32,
    pub position: Vec2,
    pub width: f64,
    pub kind: LandmarkKind,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RowSpec {
    pub row_id: i32,
    pub start: Vec2,
    pub end: Vec2,
    /// Indices into [`OrchardMap::landmarks`], ordered from `start` to `end`.
    pub landmark_ids: Vec<u32>,
}

impl RowSpec {
    pub fn length(&self) -> f64 {
        (self.end - self.start).norm()
    }

    /// Heading of the row when traversed from `start` to `end`.
    pub fn heading(&self) -> f64 {
        let d = self.end - self.start;
        d.y.atan2(d.x)
    }

    /// Point at arc length `s` from `start`, offset `lateral` meters to the left.
    pub fn point_at(&self, s: f64, lateral: f64) -> Vec2 {
        let dir = Vec2::from_heading(self.heading());
        let left = Vec2::new(-dir.y, dir.x);
        self.start + dir * s + left * lateral
    }

    fn distance_to(&self, p: Vec2) -> f64 {
        let seg = self.end - self.start;
        let t = ((p - self.start).dot(seg) / seg.norm_squared()).clamp(0.0, 1.0);
        (p - (self.start + seg * t)).norm()
    }
}

/// Sensor viewing cone used for landmark visibility.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldOfView {
    pub half_angle: f64,
    pub max_range: f64,
    /// View axis relative to the vehicle heading.
    pub bearing_offset: f64,
}

/// A landmark seen from a pose: `bearing` is relative to the view axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FovHit {
    pub index: usize,
    pub range: f64,
    pub bearing: f64,
}

#[derive(Clone, Copy, Debug)]
struct GridEntry {
    x: f64,
    y: f64,
    index: u32,
}

/// Compressed uniform grid over landmark positions.
#[derive(Clone, Debug)]
struct SpatialGrid {
    origin: Vec2,
    cols: usize,
    rows: usize,
    offsets: Vec<u32>,
    entries: Vec<GridEntry>,
}

impl SpatialGrid {
    fn build(landmarks: &[Landmark]) -> Self {
        let (mut min, mut max) = (Vec2::new(f64::MAX, f64::MAX), Vec2::new(f64::MIN, f64::MIN));
        for lm in landmarks {
            min = Vec2::new(min.x.min(lm.position.x), min.y.min(lm.position.y));
            max = Vec2::new(max.x.max(lm.position.x), max.y.max(lm.position.y));
        }
        if landmarks.is_empty() {
            min = Vec2::ZERO;
            max = Vec2::ZERO;
        }
        let cols = ((max.x - min.x) / GRID_CELL).floor() as usize + 1;
        let rows = ((max.y - min.y) / GRID_CELL).floor() as usize + 1;
        let mut buckets: Vec<Vec<GridEntry>> = vec![Vec::new(); cols * rows];
        for (i, lm) in landmarks.iter().enumerate() {
            let c = ((lm.position.x - min.x) / GRID_CELL) as usize;
            let r = ((lm.position.y - min.y) / GRID_CELL) as usize;
            buckets[r * cols + c].push(GridEntry { x: lm.position.x, y: lm.position.y, index: i as u32 });
        }
        let mut offsets = Vec::with_capacity(buckets.len() + 1);
        let mut entries = Vec::with_capacity(landmarks.len());
        offsets.push(0);
        for b in buckets {
            entries.extend(b);
            offsets.push(entries.len() as u32);
        }
        Self { origin: min, cols, rows, offsets, entries }
    }

    /// Visits every entry in cells overlapping the box `[lo, hi]`.
    #[inline]
    fn visit_box(&self, lo: Vec2, hi: Vec2, mut f: impl FnMut(&GridEntry)) {
        let to_cell = |v: f64, o: f64| ((v - o) / GRID_CELL).floor();
        let c0 = to_cell(lo.x, self.origin.x).max(0.0);
        let r0 = to_cell(lo.y, self.origin.y).max(0.0);
        let c1 = to_cell(hi.x, self.origin.x).min(self.cols as f64 - 1.0);
        let r1 = to_cell(hi.y, self.origin.y).min(self.rows as f64 - 1.0);
        if c1 < c0 || r1 < r0 {
            return;
        }
        let (c0, c1, r0, r1) = (c0 as usize, c1 as usize, r0 as usize, r1 as usize);
        for r in r0..=r1 {
            let a = self.offsets[r * self.cols + c0] as usize;
            let b = self.offsets[r * self.cols + c1 + 1] as usize;
            self.entries[a..b].iter().for_each(&mut f);
        }
    }
}

#[derive(Clone, Debug)]
pub struct OrchardMap {
    pub landmarks: Vec<Landmark>,
    pub rows: Vec<RowSpec>,
    pub row_spacing: f64,
    pub headland_depth: f64,
    grid: SpatialGrid,
}

impl PartialEq for OrchardMap {
    fn eq(&self, other: &Self) -> bool {
        self.landmarks == other.landmarks
            && self.rows == other.rows
            && self.row_spacing == other.row_spacing
            && self.headland_depth == other.headland_depth
    }
}

impl OrchardMap {
    /// Validates the parts and builds the spatial index.
    pub fn new(
        landmarks: Vec<Landmark>,
        rows: Vec<(i32, Vec2, Vec2)>,
        row_spacing: f64,
        headland_depth: f64,
    ) -> Result<Self> {
        if !(row_spacing.is_finite() && row_spacing > 0.0) {
            return Err(Error::InvalidMap(format!("row_spacing {row_spacing} must be > 0")));
        }
        if !(headland_depth.is_finite() && headland_depth >= 0.0) {
            return Err(Error::InvalidMap(format!("headland_depth {headland_depth} must be >= 0")));
        }
        let mut row_index = HashMap::new();
        let mut specs = Vec::with_capacity(rows.len());
        for (row_id, start, end) in rows {
            if !start.is_finite() || !end.is_finite() {
                return Err(Error::InvalidMap(format!("row {row_id}: non-finite endpoint")));
            }
            if (end - start).norm() == 0.0 {
                return Err(Error::InvalidMap(format!("row {row_id}: start equals end")));
            }
            if row_index.insert(row_id, specs.len()).is_some() {
                return Err(Error::InvalidMap(format!("duplicate row_id {row_id}")));
            }
            specs.push(RowSpec { row_id, start, end, landmark_ids: Vec::new() });
        }

        let mut seen = HashSet::new();
        for (i, lm) in landmarks.iter().enumerate() {
            if !seen.insert(lm.id) {
                return Err(Error::InvalidMap(format!("landmark {}: duplicate id", lm.id)));
            }
            if !lm.position.is_finite() {
                return Err(Error::InvalidMap(format!("landmark {}: non-finite position", lm.id)));
            }
            if !(lm.width > 0.0 && lm.width < MAX_WIDTH) {
                return Err(Error::InvalidMap(format!(
                    "landmark {}: width {} outside (0, {MAX_WIDTH})",
                    lm.id, lm.width
                )));
            }
            let Some(&r) = row_index.get(&lm.row_id) else {
                return Err(Error::InvalidMap(format!("landmark {}: unknown row_id {}", lm.id, lm.row_id)));
            };
            let d = specs[r].distance_to(lm.position);
            if d > ROW_TOLERANCE {
                return Err(Error::InvalidMap(format!("landmark {}: {d:.3} m from row {} segment", lm.id, lm.row_id)));
            }
            specs[r].landmark_ids.push(i as u32);
        }
        for spec in &mut specs {
            let dir = Vec2::from_heading(spec.heading());
            let start = spec.start;
            spec.landmark_ids.sort_by(|&a, &b| {
                let sa = (landmarks[a as usize].position - start).dot(dir);
                let sb = (landmarks[b as usize].position - start).dot(dir);
                sa.total_cmp(&sb)
            });
        }

        let grid = SpatialGrid::build(&landmarks);
        Ok(Self { landmarks, rows: specs, row_spacing, headland_depth, grid })
    }

    pub fn row(&self, row_id: i32) -> Option<&RowSpec> {
        self.rows.iter().find(|r| r.row_id == row_id)
    }

    /// Returns a copy with every width increased by `delta` (trunk growth).
    pub fn inflate_widths(&self, delta: f64) -> Result<Self> {
        if !(0.0..MAX_INFLATION).contains(&delta) {
            return Err(Error::param("width_inflation", format!("{delta} outside [0, {MAX_INFLATION})")));
        }
        let mut out = self.clone();
        for lm in &mut out.landmarks {
            lm.width += delta;
            if lm.width >= MAX_WIDTH {
                return Err(Error::InvalidMap(format!(
                    "landmark {}: inflated width {} reaches {MAX_WIDTH}",
                    lm.id, lm.width
                )));
            }
        }
        Ok(out)
    }

    /// Calls `f` for every landmark inside the viewing cone of `pose`.
    #[inline]
    pub fn for_each_in_fov(&self, pose: &Pose2D, fov: &FieldOfView, mut f: impl FnMut(FovHit)) {
        let axis = pose.theta + fov.bearing_offset;
        let (lo, hi) = cone_bounds(pose.position(), axis, fov.half_angle, fov.max_range);
        let r2max = fov.max_range * fov.max_range;
        let (px, py) = (pose.x, pose.y);
        self.grid.visit_box(lo, hi, |e| {
            let dx = e.x - px;
            let dy = e.y - py;
            let r2 = dx * dx + dy * dy;
            if r2 > r2max || r2 == 0.0 {
                return;
            }
            let bearing = wrap_angle(dy.atan2(dx) - axis);
            if bearing.abs() <= fov.half_angle {
                f(FovHit { index: e.index as usize, range: r2.sqrt(), bearing });
            }
        });
    }

    /// Landmarks within range and inside the viewing cone, ordered by index.
    pub fn landmarks_in_fov(&self, pose: &Pose2D, fov: &FieldOfView) -> Vec<FovHit> {
        let mut hits = Vec::new();
        self.for_each_in_fov(pose, fov, |h| hits.push(h));
        hits.sort_by_key(|h| h.index);
        hits
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Parse { message, .. } => Error::Parse { what: path.display().to_string(), message },
            other => other,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: MapFile =
            serde_json::from_str(text).map_err(|e| Error::Parse { what: "map".into(), message: e.to_string() })?;
        file.into_map()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&MapFile::from_map(self)).expect("map serialization is infallible");
        s.push('\n');
        s
    }

    /// Short content hash of the serialized map.
    pub fn fingerprint(&self) -> String {
        crate::seed::fingerprint(&self.to_json())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

/// Axis-aligned bounding box of a circular sector.
fn cone_bounds(apex: Vec2, axis: f64, half_angle: f64, radius: f64) -> (Vec2, Vec2) {
    let mut lo = apex;
    let mut hi = apex;
    let mut include = |p: Vec2| {
        lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
    };
    include(apex + Vec2::from_heading(axis - half_angle) * radius);
    include(apex + Vec2::from_heading(axis + half_angle) * radius);
    for k in 0..4 {
        let dir = k as f64 * FRAC_PI_2;
        if wrap_angle(dir - axis).abs() <= half_angle {
            include(apex + Vec2::from_heading(dir) * radius);
        }
    }
    (lo, hi)
}

/// Parameters of the synthetic orchard generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapGenParams {
    pub rows: usize,
    pub trees_per_row: usize,
    pub tree_spacing: f64,
    pub jitter_along: f64,
    pub jitter_cross: f64,
    pub row_spacing: f64,
    pub headland_depth: f64,
    pub width_median: f64,
    pub width_sigma_log: f64,
    /// Every `post_every`-th landmark of a row is a post.
    pub post_every: usize,
    pub post_width: f64,
}

impl Default for MapGenParams {
    fn default() -> Self {
        Self {
            rows: 20,
            trees_per_row: 50,
            tree_spacing: 1.8,
            jitter_along: 0.08,
            jitter_cross: 0.04,
            row_spacing: 3.0,
            headland_depth: 5.0,
            width_median: 0.080,
            width_sigma_log: 0.25,
            post_every: 10,
            post_width: 0.10,
        }
    }
}

/// Generates a rectangular orchard: rows run along +x and are stacked along +y,
/// row `r` lying on `y = r * row_spacing`.
pub fn generate_map(params: &MapGenParams, seed: u64) -> Result<OrchardMap> {
    if params.rows == 0 || params.trees_per_row == 0 {
        return Err(Error::param("rows", "need at least one row and one tree"));
    }
    if !(params.tree_spacing > 0.0) {
        return Err(Error::param("tree_spacing", "must be > 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let along = Normal::new(0.0, params.jitter_along).map_err(|e| Error::param("jitter_along", e.to_string()))?;
    let cross = Normal::new(0.0, params.jitter_cross).map_err(|e| Error::param("jitter_cross", e.to_string()))?;
    let widths = LogNormal::new(params.width_median.ln(), params.width_sigma_log)
        .map_err(|e| Error::param("width_sigma_log", e.to_string()))?;
    let length = params.trees_per_row as f64 * params.tree_spacing;

    let mut landmarks = Vec::with_capacity(params.rows * params.trees_per_row);
    let mut rows = Vec::with_capacity(params.rows);
    for r in 0..params.rows {
        let y = r as f64 * params.row_spacing;
        rows.push((r as i32, Vec2::new(0.0, y), Vec2::new(length, y)));
        for i in 0..params.trees_per_row {
            let x = (i as f64 + 0.5) * params.tree_spacing + along.sample(&mut rng);
            let dy = cross.sample(&mut rng);
            let sampled: f64 = widths.sample(&mut rng);
            let is_post = params.post_every > 0 && i % params.post_every == 0;
            let (kind, width) = if is_post {
                (LandmarkKind::Post, params.post_width)
            } else {
                (LandmarkKind::Tree, sampled.clamp(0.01, 0.5))
            };
            landmarks.push(Landmark {
                id: (r * params.trees_per_row + i) as u32,
                row_id: r as i32,
                position: Vec2::new(x, y + dy),
                width,
                kind,
            });
        }
    }
    OrchardMap::new(landmarks, rows, params.row_spacing, params.headland_depth)
}

// ---- file schema ----

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MapFile {
    meta: MapMeta,
    rows: Vec<RowRecord>,
    landmarks: Vec<LandmarkRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MapMeta {
    row_spacing: f64,
    headland_depth: f64,
    units: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RowRecord {
    row_id: i32,
    start: [f64; 2],
    end: [f64; 2],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LandmarkRecord {
    id: u32,
    row_id: i32,
    pos: [f64; 2],
    width: f64,
    kind: LandmarkKind,
}

impl MapFile {
    fn from_map(map: &OrchardMap) -> Self {
        Self {
            meta: MapMeta { row_spacing: map.row_spacing, headland_depth: map.headland_depth, units: "m".into() },
            rows: map
                .rows
                .iter()
                .map(|r| RowRecord { row_id: r.row_id, start: [r.start.x, r.start.y], end: [r.end.x, r.end.y] })
                .collect(),
            landmarks: map
                .landmarks
                .iter()
                .map(|l| LandmarkRecord {
                    id: l.id,
                    row_id: l.row_id,
                    pos: [l.position.x, l.position.y],
                    width: l.width,
                    kind: l.kind,
                })
                .collect(),
        }
    }

    fn into_map(self) -> Result<OrchardMap> {
        if self.meta.units != "m" {
            return Err(Error::InvalidMap(format!("meta.units must be \"m\", got {:?}", self.meta.units)));
        }
        let landmarks = self
            .landmarks
            .into_iter()
            .map(|l| Landmark {
                id: l.id,
                row_id: l.row_id,
                position: Vec2::new(l.pos[0], l.pos[1]),
                width: l.width,
                kind: l.kind,
            })
            .collect();
        let rows = self
            .rows
            .into_iter()
            .map(|r| (r.row_id, Vec2::new(r.start[0], r.start[1]), Vec2::new(r.end[0], r.end[1])))
            .collect();
        OrchardMap::new(landmarks, rows, self.meta.row_spacing, self.meta.headland_depth)
    }
}
