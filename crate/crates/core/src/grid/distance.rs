use super::{GridGeometry, OccupancyGrid};
use crate::geometry::Point2;

const FAR: f64 = 1e20;

/// Euclidean distance (m) from every cell center to the nearest cell that
/// leans occupied (`log-odds > 0`).
#[derive(Debug, Clone)]
pub struct DistanceField {
    geom: GridGeometry,
    dist: Vec<f32>,
    has_obstacles: bool,
}

impl DistanceField {
    pub fn from_grid(grid: &OccupancyGrid) -> Self {
        let geom = *grid.geometry();
        let (w, h) = (geom.width, geom.height);
        let occupied: Vec<bool> = grid.log_odds_slice().iter().map(|l| *l > 0.0).collect();
        let has_obstacles = occupied.iter().any(|o| *o);
        if !has_obstacles {
            return Self {
                geom,
                dist: vec![f32::INFINITY; w * h],
                has_obstacles,
            };
        }

        // Separable exact squared EDT: columns first, then rows.
        let mut sq = vec![0.0f64; w * h];
        let mut f = vec![0.0f64; w.max(h)];
        let mut d = vec![0.0f64; w.max(h)];
        let mut v = vec![0usize; w.max(h)];
        let mut z = vec![0.0f64; w.max(h) + 1];
        for a in 0..w {
            for b in 0..h {
                f[b] = if occupied[b * w + a] { 0.0 } else { FAR };
            }
            edt_1d(&f[..h], &mut d[..h], &mut v, &mut z);
            for b in 0..h {
                sq[b * w + a] = d[b];
            }
        }
        for b in 0..h {
            f[..w].copy_from_slice(&sq[b * w..(b + 1) * w]);
            edt_1d(&f[..w], &mut d[..w], &mut v, &mut z);
            sq[b * w..(b + 1) * w].copy_from_slice(&d[..w]);
        }
        let delta = geom.delta;
        Self {
            geom,
            dist: sq.iter().map(|s| (s.sqrt() * delta) as f32).collect(),
            has_obstacles,
        }
    }

    pub fn has_obstacles(&self) -> bool {
        self.has_obstacles
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geom
    }

    pub fn at_linear(&self, i: usize) -> f64 {
        self.dist[i] as f64
    }

    /// Bilinear interpolation between cell centers. Points outside the grid
    /// use the nearest border value plus their distance to the border.
    pub fn distance_at(&self, p: Point2) -> f64 {
        let g = &self.geom;
        let o = g.origin();
        let u = (p.x - o.x) / g.delta;
        let v = (p.y - o.y) / g.delta;
        let umax = (g.width - 1) as f64;
        let vmax = (g.height - 1) as f64;
        let uc = u.clamp(0.0, umax);
        let vc = v.clamp(0.0, vmax);
        let outside = ((u - uc).powi(2) + (v - vc).powi(2)).sqrt() * g.delta;
        let i0 = (uc.floor() as usize).min(g.width.saturating_sub(2));
        let j0 = (vc.floor() as usize).min(g.height.saturating_sub(2));
        let i1 = (i0 + 1).min(g.width - 1);
        let j1 = (j0 + 1).min(g.height - 1);
        let fu = (uc - i0 as f64).clamp(0.0, 1.0);
        let fv = (vc - j0 as f64).clamp(0.0, 1.0);
        let w = g.width;
        let d00 = self.dist[j0 * w + i0] as f64;
        let d10 = self.dist[j0 * w + i1] as f64;
        let d01 = self.dist[j1 * w + i0] as f64;
        let d11 = self.dist[j1 * w + i1] as f64;
        let d = d00 * (1.0 - fu) * (1.0 - fv)
            + d10 * fu * (1.0 - fv)
            + d01 * (1.0 - fu) * fv
            + d11 * fu * fv;
        d + outside
    }
}

/// 1D squared distance transform of a sampled function (lower envelope of
/// parabolas).
fn edt_1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    if n == 0 {
        return;
    }
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    let intersect = |q: usize, p: usize| {
        ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64))
    };
    for q in 1..n {
        // z[0] = -inf stops the pop loop at k = 0
        let mut s = intersect(q, v[k]);
        while s <= z[k] {
            k -= 1;
            s = intersect(q, v[k]);
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, out) in d.iter_mut().enumerate().take(n) {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let diff = q as f64 - p as f64;
        *out = diff * diff + f[p];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{CellClass, ClassGrid, GridIndex};

    #[test]
    fn matches_brute_force() {
        let geom = GridGeometry::new(1.0, 0.7, 0.1).unwrap();
        let mut cg = ClassGrid::filled(geom, CellClass::Free);
        let occ = [(2, 3), (15, 12), (9, 1), (20, 14), (9, 9)];
        for (a, b) in occ {
            cg.set(GridIndex::new(a, b), CellClass::Occupied).unwrap();
        }
        let grid = OccupancyGrid::from_classes(&cg, Default::default());
        let field = DistanceField::from_grid(&grid);
        for idx in geom.indices() {
            let brute = occ
                .iter()
                .map(|(a, b)| {
                    let da = idx.a as f64 - *a as f64;
                    let db = idx.b as f64 - *b as f64;
                    (da * da + db * db).sqrt() * 0.1
                })
                .fold(f64::INFINITY, f64::min);
            let got = field.at_linear(geom.linear(idx));
            assert!((got - brute).abs() < 1e-5, "{idx}: {got} vs {brute}");
        }
    }

    #[test]
    fn empty_grid_has_no_obstacles() {
        let geom = GridGeometry::new(1.0, 1.0, 0.5).unwrap();
        let field = DistanceField::from_grid(&OccupancyGrid::new(geom));
        assert!(!field.has_obstacles());
    }

    #[test]
    fn interpolation_is_zero_on_occupied_center() {
        let geom = GridGeometry::new(1.0, 1.0, 0.1).unwrap();
        let mut cg = ClassGrid::filled(geom, CellClass::Free);
        let idx = GridIndex::new(5, 5);
        cg.set(idx, CellClass::Occupied).unwrap();
        let field = DistanceField::from_grid(&OccupancyGrid::from_classes(&cg, Default::default()));
        let c = geom.center(idx).unwrap();
        assert!(field.distance_at(c).abs() < 1e-9);
        assert!(field.distance_at(Point2::new(c.x + 0.05, c.y)) > 0.0);
    }
}
