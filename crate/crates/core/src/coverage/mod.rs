//! Global geographic map recovery: lane-sweep coverage of a grid with A*
//! relocation to the nearest unexplored cell.
//!
//! Cells hold 0 (unexplored), 0.5 (explored) or 1 (obstacle). The robot
//! sweeps along ±x; when the cell ahead is done it advances one lane along
//! +y, and when neither is possible it travels to the nearest unexplored
//! cell it can reach.

mod astar;

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use astar::astar;

use crate::error::{Error, Result};
use crate::grid::{CellClass, ClassGrid, GridGeometry, GridIndex};
use crate::rng::rng_from_seed;

pub const DEFAULT_EXPANSION_RADIUS: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellValue {
    Unexplored,
    Explored,
    Obstacle,
}

impl CellValue {
    pub fn value(self) -> f64 {
        match self {
            CellValue::Unexplored => 0.0,
            CellValue::Explored => 0.5,
            CellValue::Obstacle => 1.0,
        }
    }
}

/// Dense 1-based grid of cell values. Reads outside the grid see obstacles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValueGrid {
    width: usize,
    height: usize,
    cells: Vec<CellValue>,
}

impl ValueGrid {
    pub fn filled(width: usize, height: usize, value: CellValue) -> Self {
        Self {
            width,
            height,
            cells: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn contains(&self, idx: GridIndex) -> bool {
        (1..=self.width).contains(&idx.a) && (1..=self.height).contains(&idx.b)
    }

    pub fn linear(&self, idx: GridIndex) -> usize {
        (idx.b - 1) * self.width + (idx.a - 1)
    }

    pub fn index(&self, linear: usize) -> GridIndex {
        GridIndex::new(linear % self.width + 1, linear / self.width + 1)
    }

    pub fn get(&self, idx: GridIndex) -> CellValue {
        if self.contains(idx) {
            self.cells[self.linear(idx)]
        } else {
            CellValue::Obstacle
        }
    }

    /// Cell value at an offset from `idx`; obstacle when off the grid.
    fn get_offset(&self, idx: GridIndex, d: Direction) -> CellValue {
        match d.apply(idx) {
            Some(n) => self.get(n),
            None => CellValue::Obstacle,
        }
    }

    /// Panics outside the grid.
    pub fn set(&mut self, idx: GridIndex, value: CellValue) {
        assert!(self.contains(idx), "{idx} outside {}x{}", self.width, self.height);
        let i = self.linear(idx);
        self.cells[i] = value;
    }

    pub fn cells(&self) -> &[CellValue] {
        &self.cells
    }

    pub fn count(&self, value: CellValue) -> usize {
        self.cells.iter().filter(|c| **c == value).count()
    }

    pub fn neighbours4(&self, idx: GridIndex) -> impl Iterator<Item = GridIndex> + '_ {
        Direction::ALL
            .into_iter()
            .filter_map(move |d| d.apply(idx))
            .filter(|n| self.contains(*n))
    }

    /// Breadth-first step counts from `start` through non-obstacle cells.
    pub fn bfs(&self, start: GridIndex) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.cells.len()];
        if !self.contains(start) || self.get(start) == CellValue::Obstacle {
            return dist;
        }
        dist[self.linear(start)] = 0;
        let mut queue = VecDeque::from([start]);
        while let Some(c) = queue.pop_front() {
            let dc = dist[self.linear(c)];
            for n in self.neighbours4(c) {
                let j = self.linear(n);
                if dist[j] == usize::MAX && self.cells[j] != CellValue::Obstacle {
                    dist[j] = dc + 1;
                    queue.push_back(n);
                }
            }
        }
        dist
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    PosX,
    NegX,
    PosY,
    NegY,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::PosX, Direction::NegX, Direction::PosY, Direction::NegY];

    pub fn delta(self) -> (isize, isize) {
        match self {
            Direction::PosX => (1, 0),
            Direction::NegX => (-1, 0),
            Direction::PosY => (0, 1),
            Direction::NegY => (0, -1),
        }
    }

    pub fn apply(self, idx: GridIndex) -> Option<GridIndex> {
        let (da, db) = self.delta();
        idx.offset(da, db)
    }

    pub fn opposite(self) -> Direction {
        match self {
            Direction::PosX => Direction::NegX,
            Direction::NegX => Direction::PosX,
            Direction::PosY => Direction::NegY,
            Direction::NegY => Direction::PosY,
        }
    }

    /// Heading angle in radians.
    pub fn angle(self) -> f64 {
        use std::f64::consts::{FRAC_PI_2, PI};
        match self {
            Direction::PosX => 0.0,
            Direction::NegX => PI,
            Direction::PosY => FRAC_PI_2,
            Direction::NegY => -FRAC_PI_2,
        }
    }

    /// Direction of a unit step between 4-adjacent cells.
    pub fn between(from: GridIndex, to: GridIndex) -> Option<Direction> {
        Direction::ALL.into_iter().find(|d| d.apply(from) == Some(to))
    }

    /// Turn magnitude in degrees: 0, 90 or 180.
    pub fn turn_degrees(self, to: Direction) -> u32 {
        if self == to {
            0
        } else if self == to.opposite() {
            180
        } else {
            90
        }
    }
}

/// How the robot entered a trajectory cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveKind {
    Start,
    Forward,
    Lane,
    Relocate,
}

impl MoveKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MoveKind::Start => "start",
            MoveKind::Forward => "forward",
            MoveKind::Lane => "lane",
            MoveKind::Relocate => "relocate",
        }
    }
}

/// Outcome of one decision of the sweep loop.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Forward(GridIndex),
    Lane(GridIndex),
    /// Neither the cell ahead nor the lane above can be entered; a new start
    /// is needed.
    Relocate,
    /// Nothing reachable is left; `unreachable` counts unexplored cells the
    /// robot cannot get to.
    Finished { unreachable: usize },
}

#[derive(Debug, Clone)]
pub struct CoverageState {
    geom: GridGeometry,
    pub values: ValueGrid,
    pub current: GridIndex,
    pub heading: Direction,
    sweep: Direction,
    pub start: GridIndex,
    pub finish: GridIndex,
    pub trajectory: Vec<GridIndex>,
    pub moves: Vec<MoveKind>,
    pub r_e: f64,
    pub mse: f64,
    reachable: Vec<bool>,
    relocations: usize,
    finished: Option<usize>,
}

impl CoverageState {
    pub fn geometry(&self) -> &GridGeometry {
        &self.geom
    }

    pub fn sweep(&self) -> Direction {
        self.sweep
    }

    pub fn is_finished(&self) -> bool {
        self.finished.is_some()
    }

    /// Cells reachable from the start when exploration began.
    pub fn reachable_mask(&self) -> &[bool] {
        &self.reachable
    }

    fn enter(&mut self, to: GridIndex, kind: MoveKind) {
        if let Some(d) = Direction::between(self.current, to) {
            self.heading = d;
        }
        self.current = to;
        self.values.set(to, CellValue::Explored);
        self.trajectory.push(to);
        self.moves.push(kind);
    }
}

/// Prepares exploration of `map`.
///
/// The working area shrinks to `(2 x_max − mse) × (2 y_max − mse)` about the
/// center. Obstacles are dilated by `r_e` and cells closer than `r_e` to the
/// working-area border are blocked. Every remaining cell starts unexplored.
/// Start and final cells are drawn uniformly from the largest connected
/// unexplored region.
pub fn init_coverage(map: &ClassGrid, mse: f64, r_e: f64, seed: u64) -> Result<CoverageState> {
    let geom = *map.geometry();
    if !(mse >= 0.0 && mse.is_finite()) {
        return Err(Error::InvalidArgument(format!("mse must be >= 0, got {mse}")));
    }
    let hx = geom.x_max - mse / 2.0;
    let hy = geom.y_max - mse / 2.0;
    if !(hx > 0.0 && hy > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "mse {mse} leaves no working area in a {}x{} m room",
            2.0 * geom.x_max,
            2.0 * geom.y_max
        )));
    }
    let inflated = map.inflate(r_e)?;
    let mut values = ValueGrid::filled(geom.width, geom.height, CellValue::Obstacle);
    for (i, c) in inflated.cells().iter().enumerate() {
        let p = geom.center_unchecked(geom.index(i));
        let margin = (hx - p.x.abs()).min(hy - p.y.abs());
        let clear = margin >= 0.0 && margin >= r_e - 1e-9;
        if *c != CellClass::Occupied && clear {
            values.cells[i] = CellValue::Unexplored;
        }
    }
    if values.count(CellValue::Unexplored) == 0 {
        return Err(Error::NoFreeCell);
    }

    let open = ClassGrid::from_cells(
        geom,
        values
            .cells
            .iter()
            .map(|v| if *v == CellValue::Unexplored { CellClass::Free } else { CellClass::Occupied })
            .collect(),
    )?;
    let component: Vec<usize> = open
        .largest_component(CellClass::Free)
        .iter()
        .enumerate()
        .filter_map(|(i, m)| m.then_some(i))
        .collect();
    let mut rng = rng_from_seed(seed);
    let start = geom.index(component[rng.random_range(0..component.len())]);
    let finish = geom.index(component[rng.random_range(0..component.len())]);

    let reachable: Vec<bool> = values.bfs(start).iter().map(|d| *d != usize::MAX).collect();
    values.set(start, CellValue::Explored);
    Ok(CoverageState {
        geom,
        values,
        current: start,
        heading: Direction::PosX,
        sweep: Direction::PosX,
        start,
        finish,
        trajectory: vec![start],
        moves: vec![MoveKind::Start],
        r_e,
        mse,
        reachable,
        relocations: 0,
        finished: None,
    })
}

/// Decides and performs the next sweep move.
///
/// Moves ahead along the sweep direction into an unexplored cell. Otherwise,
/// if one of the three cells of the next lane (above, above-behind,
/// above-ahead) is unexplored and the cell above is passable, moves up and
/// reverses the sweep unless only the cell above-ahead is left. Otherwise
/// asks for relocation.
pub fn ggmr_step(state: &mut CoverageState) -> Action {
    if let Some(unreachable) = state.finished {
        return Action::Finished { unreachable };
    }
    let cur = state.current;
    let v = &state.values;
    if let Some(fwd) = state.sweep.apply(cur).filter(|n| v.get(*n) == CellValue::Unexplored) {
        state.enter(fwd, MoveKind::Forward);
        return Action::Forward(fwd);
    }
    if let Some(up) = Direction::PosY.apply(cur).filter(|n| v.contains(*n)) {
        let behind = v.get_offset(up, state.sweep.opposite());
        let ahead = v.get_offset(up, state.sweep);
        let above = v.get(up);
        let any_open = [behind, above, ahead].contains(&CellValue::Unexplored);
        if any_open && above != CellValue::Obstacle {
            state.sweep = if behind == CellValue::Unexplored || ahead != CellValue::Unexplored {
                state.sweep.opposite()
            } else {
                state.sweep
            };
            state.enter(up, MoveKind::Lane);
            return Action::Lane(up);
        }
    }
    Action::Relocate
}

/// Nearest unexplored cell by path length through passable cells; ties go to
/// the smallest `(a, b)`. `None` when no unexplored cell is reachable.
pub fn select_new_start(state: &CoverageState) -> Option<GridIndex> {
    let dist = state.values.bfs(state.current);
    let mut best: Option<(usize, GridIndex)> = None;
    for (i, v) in state.values.cells.iter().enumerate() {
        if *v != CellValue::Unexplored || dist[i] == usize::MAX {
            continue;
        }
        let cand = (dist[i], state.values.index(i));
        if best.is_none_or(|b| cand < b) {
            best = Some(cand);
        }
    }
    best.map(|(_, idx)| idx)
}

/// Coverage summary; `coverage_rate` is measured over the cells reachable
/// from the start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub covered_cells: usize,
    pub reachable_cells: usize,
    pub coverage_rate: f64,
    /// Cell transitions.
    pub steps: usize,
    pub path_length_m: f64,
    pub relocations: usize,
    /// Unexplored cells left that the robot cannot reach.
    pub unreachable_cells: usize,
    pub start: GridIndex,
    pub finish: GridIndex,
    /// Set when `max_steps` stopped the run early.
    pub truncated: bool,
}

pub fn coverage_report(state: &CoverageState, truncated: bool) -> CoverageReport {
    let reachable_cells = state.reachable.iter().filter(|r| **r).count();
    let covered_cells = state
        .values
        .cells
        .iter()
        .zip(&state.reachable)
        .filter(|(v, r)| **r && **v == CellValue::Explored)
        .count();
    let steps = state.trajectory.len() - 1;
    CoverageReport {
        covered_cells,
        reachable_cells,
        coverage_rate: if reachable_cells == 0 {
            1.0
        } else {
            covered_cells as f64 / reachable_cells as f64
        },
        steps,
        path_length_m: steps as f64 * state.geom.delta,
        relocations: state.relocations,
        unreachable_cells: state.finished.unwrap_or(0),
        start: state.start,
        finish: state.finish,
        truncated,
    }
}

/// Runs the sweep loop until nothing reachable is left or `max_steps` cell
/// transitions were made. `hook(state, from, to, kind)` runs after every
/// transition; an error from it aborts the run.
pub fn run_coverage<F>(state: &mut CoverageState, mut hook: F, max_steps: usize) -> Result<CoverageReport>
where
    F: FnMut(&CoverageState, GridIndex, GridIndex, MoveKind) -> Result<()>,
{
    if max_steps == 0 {
        return Err(Error::InvalidArgument("max_steps must be positive".into()));
    }
    let mut steps = 0;
    while steps < max_steps {
        let from = state.current;
        match ggmr_step(state) {
            Action::Forward(to) => {
                steps += 1;
                hook(state, from, to, MoveKind::Forward)?;
            }
            Action::Lane(to) => {
                steps += 1;
                hook(state, from, to, MoveKind::Lane)?;
            }
            Action::Relocate => match select_new_start(state) {
                Some(target) => {
                    let path = astar(&state.values, from, target)?;
                    state.relocations += 1;
                    for to in path.into_iter().skip(1) {
                        let prev = state.current;
                        state.enter(to, MoveKind::Relocate);
                        steps += 1;
                        hook(state, prev, to, MoveKind::Relocate)?;
                    }
                    state.sweep = Direction::PosX;
                }
                None => {
                    state.finished = Some(state.values.count(CellValue::Unexplored));
                }
            },
            Action::Finished { .. } => return Ok(coverage_report(state, false)),
        }
    }
    // every sweep move enters or borders a reachable unexplored cell
    let done = state.is_finished() || select_new_start(state).is_none();
    if done && !state.is_finished() {
        state.finished = Some(state.values.count(CellValue::Unexplored));
    }
    Ok(coverage_report(state, !done))
}

/// Coverage trajectory as CSV: `step,a,b,x_m,y_m,action`.
pub fn trajectory_csv(state: &CoverageState) -> String {
    let mut s = String::from("step,a,b,x_m,y_m,action\n");
    for (k, (idx, kind)) in state.trajectory.iter().zip(&state.moves).enumerate() {
        let p = state.geom.center_unchecked(*idx);
        let _ = writeln!(s, "{k},{},{},{:.6},{:.6},{}", idx.a, idx.b, p.x, p.y, kind.as_str());
    }
    s
}

pub fn write_trajectory_csv(state: &CoverageState, path: &Path) -> Result<()> {
    std::fs::write(path, trajectory_csv(state)).map_err(|e| Error::io(path, e))
}
