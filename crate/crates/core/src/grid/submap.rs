use super::{ClassGrid, GridGeometry, GridIndex, LogOddsParams, OccupancyGrid};

/// Cells a map changed since some epoch, together with the coverage path
/// segment that was driven while they were observed.
#[derive(Debug, Clone, PartialEq)]
pub struct SubMap {
    /// Ordinal of this sub-map among all extracted ones.
    pub index: usize,
    pub path: Vec<GridIndex>,
    pub cells: Vec<(usize, f32)>,
}

impl SubMap {
    /// Restricts `grid` to cells stamped strictly after `since_epoch`.
    pub fn extract(grid: &OccupancyGrid, since_epoch: u32, index: usize, path: Vec<GridIndex>) -> Self {
        let cells = grid
            .stamps()
            .iter()
            .zip(grid.log_odds_slice())
            .enumerate()
            .filter(|(_, (s, _))| **s > since_epoch)
            .map(|(i, (_, l))| (i, *l))
            .collect();
        Self { index, path, cells }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// Global geographic map assembled from sub-maps, latest write wins per cell.
#[derive(Debug, Clone)]
pub struct GlobalMap {
    grid: OccupancyGrid,
    merged: usize,
}

impl GlobalMap {
    pub fn new(geom: GridGeometry, params: LogOddsParams) -> Self {
        Self {
            grid: OccupancyGrid::with_params(geom, params),
            merged: 0,
        }
    }

    pub fn merge(&mut self, sub: &SubMap) {
        let stamp = sub.index as u32 + 1;
        for &(i, l) in &sub.cells {
            self.grid.set_log_odds_linear(i, l, stamp);
        }
        self.merged += 1;
    }

    pub fn merged_count(&self) -> usize {
        self.merged
    }

    pub fn grid(&self) -> &OccupancyGrid {
        &self.grid
    }

    pub fn classify(&self) -> ClassGrid {
        self.grid.classify()
    }
}
