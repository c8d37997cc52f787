//! Per-cell radio map built from a tri-state geographic map.

use std::fmt::Write as _;
use std::path::Path;

use super::path_loss;
use crate::error::{Error, Result};
use crate::geometry::{Aabb3, Point2, Point3};
use crate::grid::{CellClass, ClassGrid, GridGeometry, GridIndex};
use crate::scenario::Scenario;

/// Heights given to occupied cells of a 2D map when testing blockage.
///
/// A cell within one cell of a wall footprint takes the tallest such wall;
/// otherwise one within a cell of an obstacle takes the tallest such
/// obstacle; anything else gets `default_height`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeightModel {
    pub walls: Vec<Aabb3>,
    pub obstacles: Vec<Aabb3>,
    pub default_height: f64,
}

impl HeightModel {
    pub fn from_scenario(scenario: &Scenario) -> Self {
        let default_height = scenario
            .obstacles
            .iter()
            .chain(&scenario.walls)
            .map(|b| b.height())
            .fold(f64::NAN, f64::max);
        Self {
            walls: scenario.walls.clone(),
            obstacles: scenario.obstacles.clone(),
            default_height: if default_height.is_nan() {
                scenario.ceiling_height
            } else {
                default_height
            },
        }
    }

    pub fn height_at(&self, p: Point2, delta: f64) -> f64 {
        let near = |boxes: &[Aabb3]| {
            boxes
                .iter()
                .filter(|b| b.footprint_distance(p.x, p.y) <= delta + 1e-9)
                .map(|b| b.height())
                .fold(f64::NAN, f64::max)
        };
        let wall = near(&self.walls);
        if !wall.is_nan() {
            return wall;
        }
        let obstacle = near(&self.obstacles);
        if !obstacle.is_nan() {
            return obstacle;
        }
        self.default_height
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioCell {
    pub los: bool,
    pub path_loss_db: f64,
}

impl RadioCell {
    pub fn gain_db(&self) -> f64 {
        -self.path_loss_db
    }
}

/// Expected channel power gain per cell; cells that are not explored-free
/// carry no data.
#[derive(Debug, Clone, PartialEq)]
pub struct RadioMap {
    geom: GridGeometry,
    fc_ghz: f64,
    cells: Vec<Option<RadioCell>>,
}

const CSV_HEADER: &str = "a,b,x_m,y_m,los,path_loss_db,gain_db";

impl RadioMap {
    pub fn empty(geom: GridGeometry, fc_ghz: f64) -> Self {
        Self {
            geom,
            fc_ghz,
            cells: vec![None; geom.cell_count()],
        }
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geom
    }

    pub fn fc_ghz(&self) -> f64 {
        self.fc_ghz
    }

    pub fn get(&self, idx: GridIndex) -> Option<RadioCell> {
        if self.geom.contains(idx) {
            self.cells[self.geom.linear(idx)]
        } else {
            None
        }
    }

    pub fn gain_db(&self, idx: GridIndex) -> Option<f64> {
        self.get(idx).map(|c| c.gain_db())
    }

    pub fn cells(&self) -> &[Option<RadioCell>] {
        &self.cells
    }

    pub fn set(&mut self, idx: GridIndex, cell: Option<RadioCell>) -> Result<()> {
        if !self.geom.contains(idx) {
            return Err(Error::IndexOutOfBounds(idx));
        }
        let i = self.geom.linear(idx);
        self.cells[i] = cell;
        Ok(())
    }

    pub fn data_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    /// One row per cell with data, ordered by `b` then `a`.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{CSV_HEADER}");
        for (i, cell) in self.cells.iter().enumerate() {
            if let Some(c) = cell {
                let idx = self.geom.index(i);
                let p = self.geom.center_unchecked(idx);
                let _ = writeln!(
                    s,
                    "{},{},{:.6},{:.6},{},{:.6},{:.6}",
                    idx.a,
                    idx.b,
                    p.x,
                    p.y,
                    u8::from(c.los),
                    c.path_loss_db,
                    c.gain_db()
                );
            }
        }
        s
    }

    /// Gain matrix, first row = largest `b`, `nan` where there is no data.
    pub fn to_grid_csv(&self) -> String {
        let g = &self.geom;
        let mut s = String::new();
        for b in (1..=g.height).rev() {
            let row: Vec<String> = (1..=g.width)
                .map(|a| match self.cells[g.linear(GridIndex::new(a, b))] {
                    Some(c) => format!("{:.6}", c.gain_db()),
                    None => "nan".to_string(),
                })
                .collect();
            let _ = writeln!(s, "{}", row.join(","));
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn write_grid_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_grid_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Parses the long-form CSV written by [`RadioMap::to_csv`] onto `geom`.
pub fn parse_radio_csv(text: &str, geom: GridGeometry, fc_ghz: f64, context: &str) -> Result<RadioMap> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        _ => return Err(Error::parse(context, format!("expected header '{CSV_HEADER}'"))),
    }
    let mut map = RadioMap::empty(geom, fc_ghz);
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        let row = n + 2;
        if f.len() != 7 {
            return Err(Error::parse(context, format!("line {row}: expected 7 fields")));
        }
        let bad = |what: &str| Error::parse(context, format!("line {row}: bad {what}"));
        let a: usize = f[0].parse().map_err(|_| bad("a"))?;
        let b: usize = f[1].parse().map_err(|_| bad("b"))?;
        let los = match f[4] {
            "0" => false,
            "1" => true,
            _ => return Err(bad("los flag")),
        };
        let pl: f64 = f[5].parse().map_err(|_| bad("path_loss_db"))?;
        let idx = GridIndex::new(a, b);
        if !geom.contains(idx) {
            return Err(Error::parse(context, format!("line {row}: cell {idx} outside the grid")));
        }
        map.set(idx, Some(RadioCell { los, path_loss_db: pl }))?;
    }
    Ok(map)
}

pub fn read_radio_csv(path: &Path, geom: GridGeometry, fc_ghz: f64) -> Result<RadioMap> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_radio_csv(&text, geom, fc_ghz, &path.display().to_string())
}

/// Walks the 2D cells crossed by the segment `p0 → p1`, reporting each cell
/// with the parameter interval `[t0, t1] ⊂ [0, 1]` it covers. A segment
/// through a cell corner reports both side cells with a zero-length interval.
fn traverse(geom: &GridGeometry, p0: Point2, p1: Point2, mut visit: impl FnMut(usize, f64, f64) -> bool) {
    let dx = p1.x - p0.x;
    let dy = p1.y - p0.y;
    // clip to the grid rectangle
    let (mut tl, mut th) = (0.0f64, 1.0f64);
    for (p, d, lo, hi) in [(p0.x, dx, -geom.x_max, geom.x_max), (p0.y, dy, -geom.y_max, geom.y_max)] {
        if d == 0.0 {
            if p < lo || p > hi {
                return;
            }
        } else {
            let (a, b) = ((lo - p) / d, (hi - p) / d);
            tl = tl.max(a.min(b));
            th = th.min(a.max(b));
        }
    }
    if tl > th {
        return;
    }
    let (w, h) = (geom.width as isize, geom.height as isize);
    let u = |t: f64| (p0.x + t * dx + geom.x_max) / geom.delta;
    let v = |t: f64| (p0.y + t * dy + geom.y_max) / geom.delta;
    // start cell from a point slightly inside the clipped segment
    let tm = if th > tl { tl + (th - tl) * 1e-9 } else { tl };
    let mut i = (u(tm).floor() as isize).clamp(0, w - 1);
    let mut j = (v(tm).floor() as isize).clamp(0, h - 1);
    let si: isize = if dx > 0.0 { 1 } else { -1 };
    let sj: isize = if dy > 0.0 { 1 } else { -1 };
    let cell_dt_i = if dx != 0.0 { geom.delta / dx.abs() } else { f64::INFINITY };
    let cell_dt_j = if dy != 0.0 { geom.delta / dy.abs() } else { f64::INFINITY };
    let boundary_t = |idx: isize, step: isize, origin: f64, d: f64, half: f64| -> f64 {
        if d == 0.0 {
            return f64::INFINITY;
        }
        let k = if step > 0 { idx + 1 } else { idx };
        let edge = k as f64 * geom.delta - half;
        (edge - origin) / d
    };
    let mut t_next_i = boundary_t(i, si, p0.x, dx, geom.x_max);
    let mut t_next_j = boundary_t(j, sj, p0.y, dy, geom.y_max);
    let lin = |i: isize, j: isize| (j * w + i) as usize;
    let mut t_cur = tl;
    loop {
        let t_exit = t_next_i.min(t_next_j).min(th);
        if !visit(lin(i, j), t_cur, t_exit) {
            return;
        }
        if t_exit >= th {
            return;
        }
        let tie = (t_next_i - t_next_j).abs() <= 1e-12 * (1.0 + t_next_i.abs());
        if tie {
            let (ni, nj) = (i + si, j + sj);
            if ni >= 0 && ni < w && !visit(lin(ni, j), t_exit, t_exit) {
                return;
            }
            if nj >= 0 && nj < h && !visit(lin(i, nj), t_exit, t_exit) {
                return;
            }
            i = ni;
            j = nj;
            t_next_i += cell_dt_i;
            t_next_j += cell_dt_j;
        } else if t_next_i < t_next_j {
            i += si;
            t_next_i += cell_dt_i;
        } else {
            j += sj;
            t_next_j += cell_dt_j;
        }
        if i < 0 || j < 0 || i >= w || j >= h {
            return;
        }
        t_cur = t_exit;
    }
}

/// True when the open segment from `ap` to `rx` meets an occupied cell
/// extruded from the floor to its height.
fn grid_blocked(geom: &GridGeometry, heights: &[f32], ap: Point3, rx: Point3) -> bool {
    let mut blocked = false;
    traverse(geom, Point2::new(ap.x, ap.y), Point2::new(rx.x, rx.y), |i, t0, t1| {
        let h = heights[i];
        if h.is_nan() || !(t1 > 0.0 && t0 < 1.0) {
            return true;
        }
        let z0 = ap.z + t0.max(0.0) * (rx.z - ap.z);
        let z1 = ap.z + t1.min(1.0) * (rx.z - ap.z);
        if z0.min(z1) <= h as f64 {
            blocked = true;
            return false;
        }
        true
    });
    blocked
}

/// Radio map of every explored-free cell of `geo`.
///
/// Blockage is tested against the occupied cells of `geo`, extruded to the
/// heights given by `heights`; access point, carrier and antenna height come
/// from `scenario`.
pub fn build_radio_map(geo: &ClassGrid, heights: &HeightModel, scenario: &Scenario) -> Result<RadioMap> {
    let geom = *geo.geometry();
    let cell_heights: Vec<f32> = geo
        .cells()
        .iter()
        .enumerate()
        .map(|(i, c)| match c {
            CellClass::Occupied => heights.height_at(geom.center_unchecked(geom.index(i)), geom.delta) as f32,
            _ => f32::NAN,
        })
        .collect();
    let ap = scenario.ap_position;
    let mut map = RadioMap::empty(geom, scenario.fc_ghz);
    for (i, c) in geo.cells().iter().enumerate() {
        if *c != CellClass::Free {
            continue;
        }
        let p = geom.center_unchecked(geom.index(i));
        let rx = Point3::new(p.x, p.y, scenario.h_m);
        let los = !grid_blocked(&geom, &cell_heights, ap, rx);
        let path_loss_db = path_loss(ap.distance(&rx), scenario.fc_ghz, los)?;
        map.cells[i] = Some(RadioCell { los, path_loss_db });
    }
    Ok(map)
}
