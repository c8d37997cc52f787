//! The two exploration pipelines: coverage on the true grid, and coverage
//! with the particle filter in the loop against a fine world raster.

use crate::coverage::{init_coverage, run_coverage, CoverageReport, CoverageState, Direction, MoveKind};
use crate::error::{Error, Result};
use crate::geometry::{Point2, Pose};
use crate::grid::{CellClass, ClassGrid, GlobalMap, GridIndex, LogOddsParams, OccupancyGrid, SubMap};
use crate::radio::{build_radio_map, HeightModel, RadioMap};
use crate::rng::derive_seed;
use crate::scenario::{
    rasterize_ground_truth, simulate_lidar, step_motion, MotionCommand, OdometryNoise, OdometryReading, RobotState,
    Scenario,
};
use crate::slam::{compute_ate, slam_step, AteReport, ParticleSet, SlamParams};

/// Target cell size of the raster the simulated sensors see (m).
const WORLD_CELL: f64 = 0.01;

const STREAM_MOTION: u64 = 1;
const STREAM_LIDAR: u64 = 2;
const STREAM_SLAM: u64 = 3;
const STREAM_TURN: u64 = 4;

/// Ground truth at one resolution.
#[derive(Debug, Clone)]
pub struct TruthMaps {
    /// Footprint raster with free cells outside the largest free region
    /// marked unexplored.
    pub classes: ClassGrid,
    pub radio: RadioMap,
}

impl TruthMaps {
    pub fn build(scenario: &Scenario, delta: f64) -> Result<Self> {
        let raw = scenario.ground_truth_classes(delta)?;
        let mobile = raw.largest_component(CellClass::Free);
        let cells = raw
            .cells()
            .iter()
            .zip(&mobile)
            .map(|(c, m)| match c {
                CellClass::Free if !m => CellClass::Unexplored,
                other => *other,
            })
            .collect();
        let classes = ClassGrid::from_cells(*raw.geometry(), cells)?;
        let radio = build_radio_map(&classes, &HeightModel::from_scenario(scenario), scenario)?;
        Ok(Self { classes, radio })
    }

    /// Cells counted by the accuracy metric.
    pub fn mobile_area(&self) -> usize {
        self.classes.cells().len() - self.classes.count(CellClass::Unexplored)
    }
}

/// Resolution of the sensor world for a map resolution `delta`: the largest
/// divisor `delta / k` not above 1 cm.
pub fn world_resolution(delta: f64) -> f64 {
    let k = (delta / WORLD_CELL - 1e-9).ceil().max(1.0);
    delta / k
}

/// Sensor world shared by every run at one resolution.
#[derive(Debug, Clone)]
pub struct SimWorld {
    pub grid: OccupancyGrid,
}

impl SimWorld {
    pub fn build(scenario: &Scenario, delta: f64) -> Result<Self> {
        Ok(Self {
            grid: rasterize_ground_truth(scenario, world_resolution(delta))?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimParams {
    pub v: f64,
    pub particles: usize,
    pub r_e: f64,
    pub scan_rate_hz: f64,
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub coverage: CoverageReport,
    pub state: CoverageState,
    /// Final geographic map.
    pub map: ClassGrid,
    pub radio: RadioMap,
    pub ate: Option<AteReport>,
    pub scans: usize,
    pub resamples: usize,
    /// (true, estimated) position at every scan; the coverage path itself
    /// for the theoretical pipeline.
    pub positions: Vec<(Point2, Point2)>,
}

/// Coverage on the true grid; the radio map is the ground truth.
pub fn theoretical_pipeline(truth: &TruthMaps, r_e: f64, seed: u64) -> Result<PipelineOutcome> {
    let mut state = init_coverage(&truth.classes, 0.0, r_e, seed)?;
    let max_steps = 8 * truth.classes.cells().len() + 16;
    let coverage = run_coverage(&mut state, |_, _, _, _| Ok(()), max_steps)?;
    let geom = truth.classes.geometry();
    let positions = state
        .trajectory
        .iter()
        .map(|idx| {
            let p = geom.center_unchecked(*idx);
            (p, p)
        })
        .collect();
    Ok(PipelineOutcome {
        coverage,
        state,
        map: truth.classes.clone(),
        radio: truth.radio.clone(),
        ate: None,
        scans: 0,
        resamples: 0,
        positions,
    })
}

struct Runner<'a> {
    scenario: &'a Scenario,
    world: &'a SimWorld,
    params: &'a SimParams,
    seed: u64,
    delta: f64,
    set: ParticleSet,
    pose: Pose,
    odom: OdometryReading,
    since_scan: f64,
    period: f64,
    global: GlobalMap,
    last_epoch: u32,
    segment: Vec<GridIndex>,
    estimated: Vec<Point2>,
    actual: Vec<Point2>,
    motions: u64,
    /// Moved since the last scan.
    pending: bool,
}

impl Runner<'_> {
    fn scan(&mut self, cell: GridIndex) -> Result<()> {
        let t = self.set.t() + 1;
        let lidar = &self.scenario.lidar;
        let scan = simulate_lidar(
            &self.world.grid,
            &RobotState::at(self.pose),
            lidar,
            derive_seed(self.seed, &[STREAM_LIDAR, t as u64]),
            t,
        )?;
        let report = slam_step(&mut self.set, &scan, &self.odom, derive_seed(self.seed, &[STREAM_SLAM]))?;
        self.set.tag_cell(cell);
        self.odom = OdometryReading::default();
        self.pending = false;
        self.estimated.push(report.pose.position());
        self.actual.push(self.pose.position());
        Ok(())
    }

    fn flush_submap(&mut self) {
        let t = self.set.t() as u32;
        if t == self.last_epoch {
            return;
        }
        let best = self.set.best();
        let sub = SubMap::extract(
            &best.map,
            self.last_epoch,
            self.global.merged_count(),
            std::mem::take(&mut self.segment),
        );
        self.global.merge(&sub);
        self.last_epoch = t;
    }

    fn motion(&mut self, command: MotionCommand, stream: u64) -> Result<Pose> {
        self.motions += 1;
        let out = step_motion(
            &RobotState::at(self.pose),
            &command,
            &self.scenario.odometry_noise,
            &self.world.grid,
            derive_seed(self.seed, &[stream, self.motions]),
        )?;
        self.odom = self.odom.then(&out.odometry);
        Ok(out.state.pose)
    }

    fn transition(&mut self, state: &CoverageState, from: GridIndex, to: GridIndex) -> Result<()> {
        let geom = state.geometry();
        let dir = Direction::between(from, to)
            .ok_or_else(|| Error::InvalidArgument(format!("coverage jumped from {from} to {to}")))?;
        let heading = dir.angle();
        let turn = crate::geometry::normalize_angle(heading - self.pose.theta);
        if turn.abs() > 1e-9 {
            // a waypoint: close the sub-map driven so far
            self.flush_submap();
            self.motion(MotionCommand { v: 0.0, omega: turn, dt: 1.0 }, STREAM_TURN)?;
            self.pose.theta = heading;
        }
        let dt = self.delta / self.params.v;
        self.motion(MotionCommand { v: self.params.v, omega: 0.0, dt }, STREAM_MOTION)?;
        let c = geom.center(to)?;
        self.pose = Pose::new(c.x, c.y, heading);
        self.segment.push(to);
        self.pending = true;
        self.since_scan += dt;
        if self.since_scan >= self.period - 1e-12 {
            self.since_scan = (self.since_scan - self.period).rem_euclid(self.period);
            self.scan(to)?;
        }
        Ok(())
    }
}

/// Coverage planned on the true grid while the robot localizes and maps with
/// the particle filter. At most `max_steps` cell transitions are driven.
pub fn simulational_pipeline(
    scenario: &Scenario,
    world: &SimWorld,
    truth: &TruthMaps,
    params: &SimParams,
    mse: f64,
    seed: u64,
    max_steps: Option<usize>,
) -> Result<PipelineOutcome> {
    if !(params.v > 0.0 && params.v.is_finite()) {
        return Err(Error::InvalidArgument(format!("speed must be positive, got {}", params.v)));
    }
    if !(params.scan_rate_hz > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "scan rate must be positive, got {}",
            params.scan_rate_hz
        )));
    }
    let geom = *truth.classes.geometry();
    let delta = geom.delta;
    let mut state = init_coverage(&truth.classes, mse, params.r_e, seed)?;
    let start = geom.center(state.start)?;
    let start = Pose::new(start.x, start.y, Direction::PosX.angle());

    let period = 1.0 / params.scan_rate_hz;
    // odometry readings accumulated between two scans
    let readings = (period * params.v / delta).ceil().max(1.0);
    let n = scenario.odometry_noise;
    let slam = SlamParams {
        particles: params.particles,
        motion_noise: OdometryNoise {
            sigma_x: n.sigma_x * readings.sqrt(),
            sigma_y: n.sigma_y * readings.sqrt(),
            sigma_theta: n.sigma_theta * readings.sqrt(),
        },
        ..SlamParams::default()
    };
    let set = ParticleSet::new(geom, start, slam, scenario.lidar.clone())?;
    let mut run = Runner {
        scenario,
        world,
        params,
        seed,
        delta,
        set,
        pose: start,
        odom: OdometryReading::default(),
        since_scan: 0.0,
        period,
        global: GlobalMap::new(geom, LogOddsParams::default()),
        last_epoch: 0,
        segment: vec![state.start],
        estimated: Vec::new(),
        actual: Vec::new(),
        motions: 0,
        pending: false,
    };
    run.scan(state.start)?;
    let limit = max_steps.unwrap_or(8 * geom.cell_count() + 16);
    let coverage = run_coverage(
        &mut state,
        |s, from, to, _kind: MoveKind| run.transition(s, from, to),
        limit,
    )?;
    if run.pending {
        run.scan(state.current)?;
    }
    run.flush_submap();

    let map = run.global.classify();
    let radio = build_radio_map(&map, &HeightModel::from_scenario(scenario), scenario)?;
    let ate = compute_ate(&run.estimated, &run.actual)?;
    Ok(PipelineOutcome {
        coverage,
        state,
        map,
        radio,
        ate: Some(ate),
        scans: run.estimated.len(),
        resamples: run.set.resample_count(),
        positions: run.actual.into_iter().zip(run.estimated).collect(),
    })
}

/// Boundary-shrink MSE: mean ATE mse of `runs` short filter runs of
/// `steps` transitions each.
pub fn calibrate_mse(
    scenario: &Scenario,
    world: &SimWorld,
    truth: &TruthMaps,
    params: &SimParams,
    runs: usize,
    steps: usize,
    seed: u64,
) -> Result<f64> {
    if runs == 0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for k in 0..runs {
        let s = derive_seed(seed, &[k as u64]);
        let out = simulational_pipeline(scenario, world, truth, params, 0.0, s, Some(steps))?;
        total += out.ate.map_or(0.0, |a| a.mse);
    }
    Ok(total / runs as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn world_resolution_divides_delta() {
        for (d, w) in [(0.05, 0.01), (0.1, 0.01), (0.15, 0.01), (0.25, 0.01), (0.02, 0.01), (0.005, 0.005)] {
            let r = world_resolution(d);
            assert!((r - w).abs() < 1e-12, "{d}");
            assert!(((d / r) - (d / r).round()).abs() < 1e-9);
        }
    }

    #[test]
    fn truth_marks_enclosed_space_unknown() {
        let sc = Scenario::fig2();
        let t = TruthMaps::build(&sc, 0.1).unwrap();
        assert!(t.classes.count(CellClass::Unexplored) > 0);
        assert_eq!(t.radio.data_count(), t.classes.count(CellClass::Free));
        assert_eq!(t.mobile_area(), t.classes.count(CellClass::Free) + t.classes.count(CellClass::Occupied));
    }

    #[test]
    fn theoretical_run_covers_everything() {
        let sc = Scenario::fig2();
        let t = TruthMaps::build(&sc, 0.25).unwrap();
        let out = theoretical_pipeline(&t, 0.2, 1).unwrap();
        assert_eq!(out.coverage.coverage_rate, 1.0);
        assert!(!out.coverage.truncated);
    }

    #[test]
    fn short_simulated_run_is_deterministic() {
        let sc = Scenario::fig2();
        let world = SimWorld::build(&sc, 0.25).unwrap();
        let t = TruthMaps::build(&sc, 0.25).unwrap();
        let p = SimParams { v: 0.6, particles: 3, r_e: 0.2, scan_rate_hz: 5.0 };
        let a = simulational_pipeline(&sc, &world, &t, &p, 0.0, 4, Some(30)).unwrap();
        let b = simulational_pipeline(&sc, &world, &t, &p, 0.0, 4, Some(30)).unwrap();
        assert_eq!(a.coverage, b.coverage);
        assert_eq!(a.map, b.map);
        assert_eq!(a.ate, b.ate);
        assert_eq!(a.scans, 31);
        assert!(a.ate.unwrap().rmse < 0.25);
    }
}
