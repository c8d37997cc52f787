//! Likelihood-field measurement model and hill-climbing scan matcher.

use std::sync::Arc;

use crate::geometry::{Point2, Pose};
use crate::grid::{DistanceField, GridGeometry, OccupancyGrid};
use crate::scenario::{LidarSpec, Scan};

/// Standard deviation of the hit model, in cells.
pub const HIT_SIGMA_CELLS: f64 = 2.0;
pub const LIKELIHOOD_FLOOR: f64 = 1e-6;

/// Beam endpoints of one scan in the robot frame, restricted to a subsample
/// of returned beams.
///
#[derive(Debug, Clone)]
pub struct ScanPoints {
    points: Vec<(f64, f64)>,
}

impl ScanPoints {
    pub fn new(scan: &Scan, lidar: &LidarSpec, max_beams: usize) -> Self {
        let n = scan.ranges.len();
        let stride = if max_beams == 0 { 1 } else { n.div_ceil(max_beams).max(1) };
        let points = scan
            .ranges
            .iter()
            .enumerate()
            .step_by(stride)
            .filter_map(|(k, r)| {
                let r = (*r)?;
                let (s, c) = lidar.beam_angle(k).sin_cos();
                Some((r * c, r * s))
            })
            .collect();
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Hit model over one map.
///
/// An endpoint is scored by its distance to the nearest mean return point of
/// an occupied cell in its 3 x 3 neighbourhood; further out the distance
/// field to occupied cell centers takes over. The mobile-space border counts
/// as an obstacle once the map holds any occupied cell. A map without
/// occupied cells gives a flat likelihood.
#[derive(Debug, Clone)]
pub struct LikelihoodField<'a> {
    map: &'a OccupancyGrid,
    field: Arc<DistanceField>,
    inv_two_sigma_sq: f64,
    floor: f64,
}

impl<'a> LikelihoodField<'a> {
    pub fn new(map: &'a OccupancyGrid) -> Self {
        Self::from_field(map, Arc::new(DistanceField::from_grid(map)))
    }

    /// `field` must have been computed from the current occupied set of `map`.
    pub fn from_field(map: &'a OccupancyGrid, field: Arc<DistanceField>) -> Self {
        let sigma = HIT_SIGMA_CELLS * field.geometry().delta;
        Self {
            map,
            field,
            inv_two_sigma_sq: 1.0 / (2.0 * sigma * sigma),
            floor: LIKELIHOOD_FLOOR,
        }
    }

    pub fn is_flat(&self) -> bool {
        !self.field.has_obstacles()
    }

    fn geometry(&self) -> &GridGeometry {
        self.field.geometry()
    }

    pub fn delta(&self) -> f64 {
        self.geometry().delta
    }

    fn nearest_hit(&self, p: Point2) -> Option<f64> {
        let g = self.geometry();
        let a = ((p.x + g.x_max) / g.delta).floor() as isize;
        let b = ((p.y + g.y_max) / g.delta).floor() as isize;
        let (w, h) = (g.width as isize, g.height as isize);
        let log_odds = self.map.log_odds_slice();
        let mut best: Option<f64> = None;
        for j in (b - 1).max(0)..=(b + 1).min(h - 1) {
            for i in (a - 1).max(0)..=(a + 1).min(w - 1) {
                let k = (j * w + i) as usize;
                if log_odds[k] > 0.0 {
                    let d = self.map.hit_point_linear(k).distance(&p);
                    best = Some(best.map_or(d, |b| b.min(d)));
                }
            }
        }
        best
    }

    fn distance(&self, p: Point2) -> f64 {
        let g = self.geometry();
        let ex = p.x.abs() - g.x_max;
        let ey = p.y.abs() - g.y_max;
        let border = if ex <= 0.0 && ey <= 0.0 {
            (-ex).min(-ey)
        } else {
            (ex.max(0.0).powi(2) + ey.max(0.0).powi(2)).sqrt()
        };
        let d = self.nearest_hit(p).unwrap_or_else(|| self.field.distance_at(p));
        d.min(border)
    }

    /// `ln p(o | m, x)`; zero for a flat map.
    pub fn log_likelihood(&self, pose: &Pose, points: &ScanPoints) -> f64 {
        if self.is_flat() {
            return 0.0;
        }
        let (s, c) = pose.theta.sin_cos();
        points
            .points
            .iter()
            .map(|&(bx, by)| {
                let p = Point2::new(pose.x + c * bx - s * by, pose.y + s * bx + c * by);
                let d = self.distance(p);
                ((-d * d * self.inv_two_sigma_sq).exp() + self.floor).ln()
            })
            .sum()
    }
}

/// `p(o | m, x)` under the likelihood-field model, over a 36-beam subsample.
pub fn measurement_likelihood(map: &OccupancyGrid, pose: &Pose, scan: &Scan, lidar: &LidarSpec) -> f64 {
    let points = ScanPoints::new(scan, lidar, super::DEFAULT_MATCH_BEAMS);
    LikelihoodField::new(map).log_likelihood(pose, &points).exp()
}

/// Hill-climbs the log-likelihood from `init`.
///
/// Steps start at (δ, δ, 1°) and are halved whenever no neighbour improves,
/// stopping once they drop below (δ/4, δ/4, 0.25°). Returns the best pose and
/// its log-likelihood, which is never below that of `init`.
pub fn scan_match_field(field: &LikelihoodField<'_>, points: &ScanPoints, init: Pose) -> (Pose, f64) {
    let delta = field.geometry().delta;
    let mut best = init;
    let mut best_score = field.log_likelihood(&init, points);
    if field.is_flat() || points.is_empty() {
        return (best, best_score);
    }
    let mut step_xy = delta;
    let mut step_th = 1f64.to_radians();
    let min_xy = delta / 4.0;
    let min_th = 0.25f64.to_radians();
    while step_xy >= min_xy - 1e-12 && step_th >= min_th - 1e-12 {
        let mut improved = true;
        let mut rounds = 0;
        while improved && rounds < 50 {
            improved = false;
            rounds += 1;
            let moves = [
                (step_xy, 0.0, 0.0),
                (-step_xy, 0.0, 0.0),
                (0.0, step_xy, 0.0),
                (0.0, -step_xy, 0.0),
                (0.0, 0.0, step_th),
                (0.0, 0.0, -step_th),
            ];
            let mut round_best = best;
            let mut round_score = best_score;
            for (dx, dy, dt) in moves {
                let cand = Pose::new(best.x + dx, best.y + dy, best.theta + dt);
                let score = field.log_likelihood(&cand, points);
                if score > round_score {
                    round_best = cand;
                    round_score = score;
                }
            }
            if round_score > best_score {
                best = round_best;
                best_score = round_score;
                improved = true;
            }
        }
        step_xy /= 2.0;
        step_th /= 2.0;
    }
    (best, best_score)
}

/// Convenience wrapper building the field from `map`. Returns the matched
/// pose and its measurement likelihood.
pub fn scan_match(map: &OccupancyGrid, scan: &Scan, lidar: &LidarSpec, init: Pose) -> (Pose, f64) {
    let field = LikelihoodField::new(map);
    let points = ScanPoints::new(scan, lidar, super::DEFAULT_MATCH_BEAMS);
    let (pose, score) = scan_match_field(&field, &points, init);
    (pose, score.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{rasterize_ground_truth, simulate_lidar, RobotState, Scenario};

    fn fixture() -> (OccupancyGrid, LidarSpec, Pose, Scan) {
        let sc = Scenario::fig2();
        let gt = rasterize_ground_truth(&sc, 0.1).unwrap();
        let lidar = LidarSpec {
            range_noise_sigma: 0.0,
            ..LidarSpec::default()
        };
        let pose = Pose::new(-4.0, 2.0, 0.3);
        let scan = simulate_lidar(&gt, &RobotState::at(pose), &lidar, 1, 0).unwrap();
        (gt, lidar, pose, scan)
    }

    #[test]
    fn true_pose_beats_displaced_pose() {
        let (gt, lidar, pose, scan) = fixture();
        let at_truth = measurement_likelihood(&gt, &pose, &scan, &lidar);
        let moved = Pose::new(pose.x + 0.6, pose.y - 0.4, pose.theta);
        let displaced = measurement_likelihood(&gt, &moved, &scan, &lidar);
        assert!(at_truth > displaced, "{at_truth} vs {displaced}");
    }

    #[test]
    fn empty_map_is_flat() {
        let (gt, lidar, pose, scan) = fixture();
        let empty = OccupancyGrid::new(*gt.geometry());
        let a = measurement_likelihood(&empty, &pose, &scan, &lidar);
        let b = measurement_likelihood(&empty, &Pose::new(1.0, 1.0, 2.0), &scan, &lidar);
        assert_eq!(a, 1.0);
        assert_eq!(a, b);
        let (p, _) = scan_match(&empty, &scan, &lidar, Pose::new(1.0, 1.0, 2.0));
        assert_eq!(p, Pose::new(1.0, 1.0, 2.0));
    }

    #[test]
    fn endpoints_on_occupied_cells_maximise_each_factor() {
        let g = GridGeometry::new(1.0, 1.0, 0.1).unwrap();
        let mut map = OccupancyGrid::new(g);
        map.set_log_odds_linear(g.linear(crate::grid::GridIndex::new(15, 10)), 5.0, 0);
        let field = LikelihoodField::new(&map);
        // center of (15, 10) is (0.45, -0.05)
        let pts = ScanPoints {
            points: vec![(0.45, 0.0)],
        };
        let at = field.log_likelihood(&Pose::new(0.0, -0.05, 0.0), &pts);
        assert!((at - (1.0 + LIKELIHOOD_FLOOR).ln()).abs() < 1e-12);
        let off = field.log_likelihood(&Pose::new(0.0, 0.1, 0.0), &pts);
        assert!(off < at);
    }

    #[test]
    fn matcher_never_worsens_and_recovers_offset() {
        let (gt, lidar, pose, scan) = fixture();
        let field = LikelihoodField::new(&gt);
        let pts = ScanPoints::new(&scan, &lidar, 36);
        let (p0, s0) = scan_match_field(&field, &pts, pose);
        assert!(s0 >= field.log_likelihood(&pose, &pts));
        assert!(p0.position().distance(&pose.position()) < 0.1);

        let init = Pose::new(pose.x + 0.1, pose.y - 0.05, pose.theta + 0.02);
        let (p, s) = scan_match_field(&field, &pts, init);
        assert!(s >= field.log_likelihood(&init, &pts));
        assert!(p.position().distance(&pose.position()) < 0.1, "{p:?}");
    }
}
