//! Occupancy grids over the rectangular mobile space.
//!
//! Cells are addressed with 1-based [`GridIndex`] values `(a, b)`. The center
//! of cell `(a, b)` is `S_I + ((a-1)δ, (b-1)δ)` where `S_I` is the center of
//! the min-corner cell, `(-x_max + δ/2, -y_max + δ/2)`.
//!
//! [`OccupancyGrid`] stores per-cell log-odds for mapping; [`ClassGrid`] is the
//! tri-state view (unexplored / free / occupied) that planning, radio-map
//! construction and file export work on.

mod bresenham;
mod distance;
mod pgm;
mod submap;

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point2, Pose};
use crate::scenario::{LidarSpec, Scan};

pub use bresenham::bresenham_trace;
pub use distance::DistanceField;
pub use pgm::{parse_pgm, pgm_string, read_pgm, write_pgm, PGM_FREE, PGM_OCCUPIED, PGM_UNKNOWN};
pub use submap::{GlobalMap, SubMap};

const DIVISIBILITY_TOL: f64 = 1e-6;

/// 1-based cell index; `a` runs along x, `b` along y.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridIndex {
    pub a: usize,
    pub b: usize,
}

impl GridIndex {
    pub const fn new(a: usize, b: usize) -> Self {
        Self { a, b }
    }

    pub fn manhattan(&self, other: &GridIndex) -> usize {
        self.a.abs_diff(other.a) + self.b.abs_diff(other.b)
    }

    pub fn is_4_adjacent(&self, other: &GridIndex) -> bool {
        self.manhattan(other) == 1
    }

    /// Neighbour shifted by `(da, db)`; `None` when it would leave index 1.
    pub fn offset(&self, da: isize, db: isize) -> Option<GridIndex> {
        let a = self.a as isize + da;
        let b = self.b as isize + db;
        (a >= 1 && b >= 1).then(|| GridIndex::new(a as usize, b as usize))
    }
}

impl fmt::Display for GridIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.a, self.b)
    }
}

/// Resolution and extents shared by every grid built over the same space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub delta: f64,
    pub x_max: f64,
    pub y_max: f64,
    pub width: usize,
    pub height: usize,
}

fn cells_along(extent: f64, delta: f64) -> Option<usize> {
    let n = extent / delta;
    let r = n.round();
    (r >= 1.0 && (n - r).abs() <= DIVISIBILITY_TOL * r.max(1.0)).then_some(r as usize)
}

/// Resolutions around `delta` that divide both `2 x_max` and `2 y_max`.
fn nearest_valid_resolutions(x_max: f64, y_max: f64, delta: f64) -> Vec<f64> {
    let upper = ((4.0 * x_max / delta).ceil() as usize).clamp(2, 1_000_000);
    let mut below: Option<f64> = None;
    let mut above: Option<f64> = None;
    for n in 1..=upper {
        let cand = 2.0 * x_max / n as f64;
        if cells_along(2.0 * y_max, cand).is_none() {
            continue;
        }
        if cand <= delta {
            below = Some(below.map_or(cand, |b: f64| b.max(cand)));
        } else {
            above = Some(above.map_or(cand, |a: f64| a.min(cand)));
        }
    }
    below
        .into_iter()
        .chain(above)
        .map(|v| (v * 1e9).round() / 1e9)
        .collect()
}

impl GridGeometry {
    /// Builds the grid layout, requiring `delta` to divide both extents.
    pub fn new(x_max: f64, y_max: f64, delta: f64) -> Result<Self> {
        if !(x_max > 0.0 && y_max > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "extents must be positive, got x_max={x_max}, y_max={y_max}"
            )));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "resolution must be positive, got {delta}"
            )));
        }
        match (
            cells_along(2.0 * x_max, delta),
            cells_along(2.0 * y_max, delta),
        ) {
            (Some(width), Some(height)) => Ok(Self {
                delta,
                x_max,
                y_max,
                width,
                height,
            }),
            _ => Err(Error::InvalidResolution {
                delta,
                nearest: nearest_valid_resolutions(x_max, y_max, delta),
            }),
        }
    }

    pub fn cell_count(&self) -> usize {
        self.width * self.height
    }

    /// Center of cell (1, 1).
    pub fn origin(&self) -> Point2 {
        Point2::new(
            -self.x_max + 0.5 * self.delta,
            -self.y_max + 0.5 * self.delta,
        )
    }

    pub fn contains(&self, idx: GridIndex) -> bool {
        idx.a >= 1 && idx.a <= self.width && idx.b >= 1 && idx.b <= self.height
    }

    pub fn center(&self, idx: GridIndex) -> Result<Point2> {
        if !self.contains(idx) {
            return Err(Error::IndexOutOfBounds(idx));
        }
        Ok(self.center_unchecked(idx))
    }

    pub(crate) fn center_unchecked(&self, idx: GridIndex) -> Point2 {
        let o = self.origin();
        Point2::new(
            o.x + (idx.a - 1) as f64 * self.delta,
            o.y + (idx.b - 1) as f64 * self.delta,
        )
    }

    pub fn in_mobile_space(&self, p: Point2) -> bool {
        p.x >= -self.x_max && p.x <= self.x_max && p.y >= -self.y_max && p.y <= self.y_max
    }

    /// Nearest cell center; ties on cell boundaries go to the larger index.
    pub fn world_to_grid(&self, p: Point2) -> Result<GridIndex> {
        if !(p.x.is_finite() && p.y.is_finite()) || !self.in_mobile_space(p) {
            return Err(Error::OutsideMobileSpace { x: p.x, y: p.y });
        }
        Ok(self.world_to_grid_clamped(p))
    }

    pub(crate) fn world_to_grid_clamped(&self, p: Point2) -> GridIndex {
        let fa = ((p.x + self.x_max) / self.delta + 1e-9).floor();
        let fb = ((p.y + self.y_max) / self.delta + 1e-9).floor();
        let a = (fa.max(0.0) as usize).min(self.width - 1) + 1;
        let b = (fb.max(0.0) as usize).min(self.height - 1) + 1;
        GridIndex::new(a, b)
    }

    /// Row-major linear index (row = b). Caller guarantees bounds.
    pub fn linear(&self, idx: GridIndex) -> usize {
        (idx.b - 1) * self.width + (idx.a - 1)
    }

    pub fn index(&self, linear: usize) -> GridIndex {
        GridIndex::new(linear % self.width + 1, linear / self.width + 1)
    }

    pub fn indices(&self) -> impl Iterator<Item = GridIndex> + '_ {
        (0..self.cell_count()).map(|i| self.index(i))
    }

    pub fn same_layout(&self, other: &GridGeometry) -> bool {
        self.width == other.width
            && self.height == other.height
            && (self.delta - other.delta).abs() < 1e-12
    }

    /// 4-neighbours that stay inside the grid.
    pub fn neighbours4(&self, idx: GridIndex) -> impl Iterator<Item = GridIndex> + '_ {
        [(1isize, 0isize), (-1, 0), (0, 1), (0, -1)]
            .into_iter()
            .filter_map(move |(da, db)| idx.offset(da, db))
            .filter(move |n| self.contains(*n))
    }
}

/// Tri-state cell value: 0 unexplored, 0.5 explored-free, 1 occupied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellClass {
    Unexplored,
    Free,
    Occupied,
}

impl CellClass {
    pub fn value(self) -> f64 {
        match self {
            CellClass::Unexplored => 0.0,
            CellClass::Free => 0.5,
            CellClass::Occupied => 1.0,
        }
    }
}

/// Tri-state map over a [`GridGeometry`].
#[derive(Debug, Clone, PartialEq)]
pub struct ClassGrid {
    geom: GridGeometry,
    cells: Vec<CellClass>,
}

impl ClassGrid {
    pub fn filled(geom: GridGeometry, class: CellClass) -> Self {
        Self {
            geom,
            cells: vec![class; geom.cell_count()],
        }
    }

    pub fn from_cells(geom: GridGeometry, cells: Vec<CellClass>) -> Result<Self> {
        if cells.len() != geom.cell_count() {
            return Err(Error::DimensionMismatch(format!(
                "{} cells for a {}x{} grid",
                cells.len(),
                geom.width,
                geom.height
            )));
        }
        Ok(Self { geom, cells })
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geom
    }

    pub fn get(&self, idx: GridIndex) -> Option<CellClass> {
        self.geom
            .contains(idx)
            .then(|| self.cells[self.geom.linear(idx)])
    }

    pub fn set(&mut self, idx: GridIndex, class: CellClass) -> Result<()> {
        if !self.geom.contains(idx) {
            return Err(Error::IndexOutOfBounds(idx));
        }
        let i = self.geom.linear(idx);
        self.cells[i] = class;
        Ok(())
    }

    pub fn cells(&self) -> &[CellClass] {
        &self.cells
    }

    pub fn count(&self, class: CellClass) -> usize {
        self.cells.iter().filter(|c| **c == class).count()
    }

    /// Morphological dilation of occupied cells by a disc of
    /// `ceil(r_e / δ)` cells. Only free cells change; unexplored cells keep
    /// their class.
    pub fn inflate(&self, r_e: f64) -> Result<ClassGrid> {
        let offsets = disc_offsets(r_e, self.geom.delta)?;
        if offsets.len() <= 1 {
            return Ok(self.clone());
        }
        let (w, h) = (self.geom.width as isize, self.geom.height as isize);
        let mut out = self.cells.clone();
        for (i, c) in self.cells.iter().enumerate() {
            if *c != CellClass::Occupied {
                continue;
            }
            let (ca, cb) = ((i % w as usize) as isize, (i / w as usize) as isize);
            for &(da, db) in &offsets {
                let (a, b) = (ca + da, cb + db);
                if a < 0 || b < 0 || a >= w || b >= h {
                    continue;
                }
                let j = (b * w + a) as usize;
                if out[j] == CellClass::Free {
                    out[j] = CellClass::Occupied;
                }
            }
        }
        Ok(ClassGrid {
            geom: self.geom,
            cells: out,
        })
    }

    /// 4-connected flood fill from `start` through cells accepted by
    /// `passable`. Returns a per-cell membership mask.
    pub fn flood_fill(&self, start: GridIndex, passable: impl Fn(CellClass) -> bool) -> Vec<bool> {
        let mut seen = vec![false; self.cells.len()];
        if !self.geom.contains(start) || !passable(self.cells[self.geom.linear(start)]) {
            return seen;
        }
        let mut queue = VecDeque::from([start]);
        seen[self.geom.linear(start)] = true;
        while let Some(c) = queue.pop_front() {
            for n in self.geom.neighbours4(c) {
                let j = self.geom.linear(n);
                if !seen[j] && passable(self.cells[j]) {
                    seen[j] = true;
                    queue.push_back(n);
                }
            }
        }
        seen
    }

    /// Mask of the largest 4-connected component of `class` cells. Ties go to
    /// the component containing the smallest linear index.
    pub fn largest_component(&self, class: CellClass) -> Vec<bool> {
        let mut label = vec![usize::MAX; self.cells.len()];
        let mut best: Option<(usize, usize)> = None;
        let mut next = 0usize;
        let mut queue = VecDeque::new();
        for i in 0..self.cells.len() {
            if self.cells[i] != class || label[i] != usize::MAX {
                continue;
            }
            label[i] = next;
            queue.push_back(self.geom.index(i));
            let mut size = 0;
            while let Some(c) = queue.pop_front() {
                size += 1;
                for n in self.geom.neighbours4(c) {
                    let j = self.geom.linear(n);
                    if label[j] == usize::MAX && self.cells[j] == class {
                        label[j] = next;
                        queue.push_back(n);
                    }
                }
            }
            if best.is_none_or(|(_, s)| size > s) {
                best = Some((next, size));
            }
            next += 1;
        }
        match best {
            Some((id, _)) => label.iter().map(|l| *l == id).collect(),
            None => vec![false; self.cells.len()],
        }
    }
}

pub(crate) fn disc_offsets(r_e: f64, delta: f64) -> Result<Vec<(isize, isize)>> {
    if !(r_e >= 0.0 && r_e.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "expansion radius must be >= 0, got {r_e}"
        )));
    }
    // tolerance keeps e.g. 0.1 / 0.05 from rounding up to 3
    let r = (r_e / delta - 1e-9).ceil().max(0.0) as isize;
    let mut out = Vec::new();
    for db in -r..=r {
        for da in -r..=r {
            if da * da + db * db <= r * r {
                out.push((da, db));
            }
        }
    }
    Ok(out)
}

/// Inverse-sensor-model constants, in log-odds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogOddsParams {
    pub free_update: f32,
    pub occupied_update: f32,
    pub clamp: f32,
    pub occupied_threshold: f32,
    pub free_threshold: f32,
}

impl Default for LogOddsParams {
    fn default() -> Self {
        Self {
            free_update: -0.4,
            occupied_update: 0.9,
            clamp: 10.0,
            occupied_threshold: 2.0,
            free_threshold: -2.0,
        }
    }
}

/// Sum of the hit offsets from a cell center, and their count.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct HitSum {
    dx: f32,
    dy: f32,
    n: u32,
}

/// Log-odds occupancy grid with per-cell update stamps.
///
/// Each cell also keeps the mean position of the returns that landed in it,
/// which the scan matcher uses in place of the cell center.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    geom: GridGeometry,
    params: LogOddsParams,
    log_odds: Vec<f32>,
    stamps: Vec<u32>,
    hits: Vec<HitSum>,
    epoch: u32,
}

impl OccupancyGrid {
    pub fn new(geom: GridGeometry) -> Self {
        Self::with_params(geom, LogOddsParams::default())
    }

    pub fn with_params(geom: GridGeometry, params: LogOddsParams) -> Self {
        Self {
            geom,
            params,
            log_odds: vec![0.0; geom.cell_count()],
            stamps: vec![0; geom.cell_count()],
            hits: vec![HitSum::default(); geom.cell_count()],
            epoch: 0,
        }
    }

    /// Saturated grid reproducing a tri-state map.
    pub fn from_classes(classes: &ClassGrid, params: LogOddsParams) -> Self {
        let mut g = Self::with_params(*classes.geometry(), params);
        for (l, c) in g.log_odds.iter_mut().zip(classes.cells()) {
            *l = match c {
                CellClass::Occupied => params.clamp,
                CellClass::Free => -params.clamp,
                CellClass::Unexplored => 0.0,
            };
        }
        g
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geom
    }

    pub fn params(&self) -> &LogOddsParams {
        &self.params
    }

    pub fn log_odds(&self, idx: GridIndex) -> Option<f32> {
        self.geom
            .contains(idx)
            .then(|| self.log_odds[self.geom.linear(idx)])
    }

    pub(crate) fn log_odds_slice(&self) -> &[f32] {
        &self.log_odds
    }

    pub(crate) fn stamps(&self) -> &[u32] {
        &self.stamps
    }

    pub(crate) fn set_log_odds_linear(&mut self, i: usize, value: f32, stamp: u32) {
        self.log_odds[i] = value.clamp(-self.params.clamp, self.params.clamp);
        self.stamps[i] = stamp;
    }

    /// Mean of the returns recorded in cell `i`, or its center if none.
    pub(crate) fn hit_point_linear(&self, i: usize) -> Point2 {
        let c = self.geom.center_unchecked(self.geom.index(i));
        let h = self.hits[i];
        if h.n == 0 {
            c
        } else {
            let n = h.n as f64;
            Point2::new(c.x + h.dx as f64 / n, c.y + h.dy as f64 / n)
        }
    }

    fn record_hit(&mut self, idx: GridIndex, p: Point2) {
        let i = self.geom.linear(idx);
        let c = self.geom.center_unchecked(idx);
        let h = &mut self.hits[i];
        h.dx += (p.x - c.x) as f32;
        h.dy += (p.y - c.y) as f32;
        h.n += 1;
    }

    pub fn epoch(&self) -> u32 {
        self.epoch
    }

    /// Stamp recorded on every cell touched by subsequent updates.
    pub fn set_epoch(&mut self, epoch: u32) {
        self.epoch = epoch;
    }

    fn classify_value(&self, l: f32) -> CellClass {
        if l > self.params.occupied_threshold {
            CellClass::Occupied
        } else if l < self.params.free_threshold {
            CellClass::Free
        } else {
            CellClass::Unexplored
        }
    }

    pub fn class_at(&self, idx: GridIndex) -> Option<CellClass> {
        self.log_odds(idx).map(|l| self.classify_value(l))
    }

    /// Tri-state export view.
    pub fn classify(&self) -> ClassGrid {
        ClassGrid {
            geom: self.geom,
            cells: self
                .log_odds
                .iter()
                .map(|l| self.classify_value(*l))
                .collect(),
        }
    }

    /// Dilates the occupied class; see [`ClassGrid::inflate`].
    pub fn inflate_obstacles(&self, r_e: f64) -> Result<OccupancyGrid> {
        let inflated = self.classify().inflate(r_e)?;
        let mut out = self.clone();
        for (i, (before, after)) in self
            .classify()
            .cells()
            .iter()
            .zip(inflated.cells())
            .enumerate()
        {
            if before != after {
                out.log_odds[i] = self.params.clamp;
            }
        }
        Ok(out)
    }

    /// Returns true when the cell crossed the zero log-odds level.
    fn bump(&mut self, idx: GridIndex, delta: f32) -> bool {
        let i = self.geom.linear(idx);
        let c = self.params.clamp;
        let before = self.log_odds[i];
        self.log_odds[i] = (before + delta).clamp(-c, c);
        self.stamps[i] = self.epoch;
        (before > 0.0) != (self.log_odds[i] > 0.0)
    }

    /// Inverse-sensor-model update for one scan taken at `pose`.
    ///
    /// Cells on the Bresenham trace from the robot cell to each beam endpoint
    /// get the free update; the endpoint cell of a returned beam gets the
    /// occupied update instead. Beams whose endpoint leaves the mobile space
    /// are clipped at its border and count as free space; that is how the
    /// enclosing room walls are seen.
    ///
    /// Returns how many cells changed between leaning free and leaning
    /// occupied.
    pub fn integrate_scan(&mut self, pose: &Pose, scan: &Scan, lidar: &LidarSpec) -> usize {
        if !pose.is_finite() || !self.geom.in_mobile_space(pose.position()) {
            return 0;
        }
        let start = self.geom.world_to_grid_clamped(pose.position());
        let free = self.params.free_update;
        let occ = self.params.occupied_update;
        let mut flips = 0;
        for (k, range) in scan.ranges.iter().enumerate() {
            let (r, hit) = match range {
                Some(r) if r.is_finite() => (*r, true),
                _ => (lidar.max_range, false),
            };
            let angle = pose.theta + lidar.beam_angle(k);
            let end = Point2::new(pose.x + r * angle.cos(), pose.y + r * angle.sin());
            let (end, inside) = match clip_to_space(&self.geom, pose.position(), end) {
                Some(clipped) => clipped,
                None => continue,
            };
            let end_idx = self.geom.world_to_grid_clamped(end);
            let cells = bresenham_trace(start, end_idx);
            let last = cells.len() - 1;
            for (n, c) in cells.into_iter().enumerate() {
                let d = if n == last && hit && inside {
                    self.record_hit(c, end);
                    occ
                } else {
                    free
                };
                if self.bump(c, d) {
                    flips += 1;
                }
            }
        }
        flips
    }

    /// True when at least one cell leans occupied (`log-odds > 0`).
    pub fn has_occupied(&self) -> bool {
        self.log_odds.iter().any(|l| *l > 0.0)
    }
}

/// Clips the segment from `from` (inside) to `to` against the mobile space.
/// Returns the possibly shortened endpoint and whether the original endpoint
/// was inside.
fn clip_to_space(geom: &GridGeometry, from: Point2, to: Point2) -> Option<(Point2, bool)> {
    if geom.in_mobile_space(to) {
        return Some((to, true));
    }
    let dx = to.x - from.x;
    let dy = to.y - from.y;
    let mut t_max = 1.0f64;
    for (p, d, lo, hi) in [
        (from.x, dx, -geom.x_max, geom.x_max),
        (from.y, dy, -geom.y_max, geom.y_max),
    ] {
        if d > 0.0 {
            t_max = t_max.min((hi - p) / d);
        } else if d < 0.0 {
            t_max = t_max.min((lo - p) / d);
        }
    }
    if !(t_max >= 0.0) {
        return None;
    }
    Some((Point2::new(from.x + t_max * dx, from.y + t_max * dy), false))
}
