//! Simulated LiDAR, unicycle kinematics and wheel odometry.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point2, Pose};
use crate::grid::{CellClass, GridGeometry, OccupancyGrid};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LidarSpec {
    pub beam_count: usize,
    pub max_range: f64,
    pub range_noise_sigma: f64,
    /// Angular field of view (rad), centered on the heading.
    pub angular_span: f64,
}

impl Default for LidarSpec {
    fn default() -> Self {
        Self {
            beam_count: 360,
            max_range: 8.0,
            range_noise_sigma: 0.01,
            angular_span: TAU,
        }
    }
}

impl LidarSpec {
    pub fn validate(&self) -> Result<()> {
        if self.beam_count < 1 {
            return Err(Error::InvalidScenario("lidar needs at least one beam".into()));
        }
        if !(self.max_range > 0.0 && self.max_range.is_finite()) {
            return Err(Error::InvalidScenario(format!(
                "lidar max_range must be positive, got {}",
                self.max_range
            )));
        }
        if !(self.range_noise_sigma >= 0.0) {
            return Err(Error::InvalidScenario(format!(
                "lidar range noise must be >= 0, got {}",
                self.range_noise_sigma
            )));
        }
        if !(self.angular_span > 0.0 && self.angular_span <= TAU + 1e-12) {
            return Err(Error::InvalidScenario(format!(
                "lidar angular span must be in (0, 2π], got {}",
                self.angular_span
            )));
        }
        Ok(())
    }

    /// Beam direction relative to the robot heading.
    pub fn beam_angle(&self, k: usize) -> f64 {
        -0.5 * self.angular_span + k as f64 * self.angular_span / self.beam_count as f64
    }
}

/// One sweep; `None` marks a beam without a return inside `max_range`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scan {
    pub t: usize,
    pub ranges: Vec<Option<f64>>,
}

/// Standard deviations of the additive odometry noise, per reading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdometryNoise {
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub sigma_theta: f64,
}

impl Default for OdometryNoise {
    fn default() -> Self {
        Self {
            sigma_x: 0.01,
            sigma_y: 0.01,
            sigma_theta: 0.005,
        }
    }
}

impl OdometryNoise {
    pub const ZERO: OdometryNoise = OdometryNoise {
        sigma_x: 0.0,
        sigma_y: 0.0,
        sigma_theta: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        if [self.sigma_x, self.sigma_y, self.sigma_theta]
            .iter()
            .all(|s| *s >= 0.0 && s.is_finite())
        {
            Ok(())
        } else {
            Err(Error::InvalidScenario(format!("invalid odometry noise {self:?}")))
        }
    }
}

/// Relative motion in the body frame of the earlier pose.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OdometryReading {
    pub dx: f64,
    pub dy: f64,
    pub dtheta: f64,
}

impl OdometryReading {
    pub fn between(from: &Pose, to: &Pose) -> Self {
        let (dx, dy, dtheta) = from.delta_to(to);
        Self { dx, dy, dtheta }
    }

    pub fn apply(&self, pose: &Pose) -> Pose {
        pose.compose(self.dx, self.dy, self.dtheta)
    }

    /// Reading equivalent to `self` followed by `next`.
    pub fn then(&self, next: &OdometryReading) -> OdometryReading {
        let origin = Pose::default();
        let end = next.apply(&self.apply(&origin));
        OdometryReading::between(&origin, &end)
    }

    pub fn is_zero(&self) -> bool {
        self.dx == 0.0 && self.dy == 0.0 && self.dtheta == 0.0
    }

    pub fn is_finite(&self) -> bool {
        self.dx.is_finite() && self.dy.is_finite() && self.dtheta.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RobotState {
    pub pose: Pose,
    pub v: f64,
}

impl RobotState {
    pub fn at(pose: Pose) -> Self {
        Self { pose, v: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionCommand {
    pub v: f64,
    pub omega: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionOutcome {
    pub state: RobotState,
    pub odometry: OdometryReading,
    pub collided: bool,
}

fn is_blocked(world: &OccupancyGrid, p: Point2) -> bool {
    let g = world.geometry();
    if !g.in_mobile_space(p) {
        return true;
    }
    world.class_at(g.world_to_grid_clamped(p)) == Some(CellClass::Occupied)
}

fn unicycle(pose: &Pose, v: f64, omega: f64, dt: f64) -> Pose {
    if omega.abs() < 1e-12 {
        let (s, c) = pose.theta.sin_cos();
        Pose::new(pose.x + v * dt * c, pose.y + v * dt * s, pose.theta)
    } else {
        let th1 = pose.theta + omega * dt;
        let r = v / omega;
        Pose::new(
            pose.x + r * (th1.sin() - pose.theta.sin()),
            pose.y + r * (pose.theta.cos() - th1.cos()),
            th1,
        )
    }
}

/// Integrates a unicycle command exactly and reports noisy odometry.
///
/// Motion halts at the last collision-free point when the path would enter
/// an occupied cell or leave the mobile space; the outcome is then flagged.
/// A robot that does not move reads zero odometry.
pub fn step_motion(
    state: &RobotState,
    command: &MotionCommand,
    noise: &OdometryNoise,
    world: &OccupancyGrid,
    seed: u64,
) -> Result<MotionOutcome> {
    if !(command.dt > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "time step must be positive, got {}",
            command.dt
        )));
    }
    let arc = command.v.abs() * command.dt;
    let step = world.geometry().delta / 4.0;
    let substeps = ((arc / step).ceil() as usize).max(1);
    let sub_dt = command.dt / substeps as f64;

    let mut pose = state.pose;
    let mut collided = false;
    for k in 1..=substeps {
        let next = unicycle(&state.pose, command.v, command.omega, sub_dt * k as f64);
        if command.v != 0.0 && is_blocked(world, next.position()) {
            collided = true;
            break;
        }
        pose = next;
    }

    let truth = OdometryReading::between(&state.pose, &pose);
    let odometry = if truth.is_zero() {
        truth
    } else {
        let mut rng = rng_from_seed(seed);
        let nx: f64 = rng.sample(StandardNormal);
        let ny: f64 = rng.sample(StandardNormal);
        let nt: f64 = rng.sample(StandardNormal);
        OdometryReading {
            dx: truth.dx + noise.sigma_x * nx,
            dy: truth.dy + noise.sigma_y * ny,
            dtheta: truth.dtheta + noise.sigma_theta * nt,
        }
    };
    Ok(MotionOutcome {
        state: RobotState {
            pose,
            v: if collided { 0.0 } else { command.v },
        },
        odometry,
        collided,
    })
}

/// Distance along a ray to the first occupied cell, or to the border of the
/// mobile space, by grid traversal.
fn cast_ray(world: &OccupancyGrid, origin: Point2, angle: f64, limit: f64) -> f64 {
    let g: &GridGeometry = world.geometry();
    let (dir_y, dir_x) = angle.sin_cos();
    // continuous cell coordinates; cell i spans [i, i+1)
    let u0 = (origin.x + g.x_max) / g.delta;
    let v0 = (origin.y + g.y_max) / g.delta;
    let mut i = (u0.floor() as isize).clamp(0, g.width as isize - 1);
    let mut j = (v0.floor() as isize).clamp(0, g.height as isize - 1);
    let step_i: isize = if dir_x > 0.0 { 1 } else { -1 };
    let step_j: isize = if dir_y > 0.0 { 1 } else { -1 };
    let t_delta_i = if dir_x != 0.0 { 1.0 / dir_x.abs() } else { f64::INFINITY };
    let t_delta_j = if dir_y != 0.0 { 1.0 / dir_y.abs() } else { f64::INFINITY };
    let mut t_max_i = if dir_x > 0.0 {
        ((i + 1) as f64 - u0) * t_delta_i
    } else if dir_x < 0.0 {
        (u0 - i as f64) * t_delta_i
    } else {
        f64::INFINITY
    };
    let mut t_max_j = if dir_y > 0.0 {
        ((j + 1) as f64 - v0) * t_delta_j
    } else if dir_y < 0.0 {
        (v0 - j as f64) * t_delta_j
    } else {
        f64::INFINITY
    };
    let limit_cells = limit / g.delta;
    loop {
        let t_entry = t_max_i.min(t_max_j);
        if t_entry > limit_cells {
            return f64::INFINITY;
        }
        if t_max_i < t_max_j {
            i += step_i;
            t_max_i += t_delta_i;
        } else {
            j += step_j;
            t_max_j += t_delta_j;
        }
        if i < 0 || j < 0 || i >= g.width as isize || j >= g.height as isize {
            return t_entry * g.delta;
        }
        let linear = j as usize * g.width + i as usize;
        if world.log_odds_slice()[linear] > world.params().occupied_threshold {
            return t_entry * g.delta;
        }
    }
}

/// Simulates one LiDAR sweep from `pose` against the ground-truth grid.
pub fn simulate_lidar(
    ground_truth: &OccupancyGrid,
    pose: &RobotState,
    spec: &LidarSpec,
    seed: u64,
    t: usize,
) -> Result<Scan> {
    let p = pose.pose.position();
    let g = ground_truth.geometry();
    if !g.in_mobile_space(p) {
        return Err(Error::OutsideMobileSpace { x: p.x, y: p.y });
    }
    if ground_truth.class_at(g.world_to_grid_clamped(p)) == Some(CellClass::Occupied) {
        return Err(Error::PoseInObstacle { x: p.x, y: p.y });
    }
    let mut rng = rng_from_seed(seed);
    let ranges = (0..spec.beam_count)
        .map(|k| {
            let d = cast_ray(ground_truth, p, pose.pose.theta + spec.beam_angle(k), spec.max_range);
            if d > spec.max_range {
                return None;
            }
            let noise: f64 = if spec.range_noise_sigma > 0.0 {
                spec.range_noise_sigma * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            Some((d + noise).clamp(1e-6, spec.max_range))
        })
        .collect();
    Ok(Scan { t, ranges })
}
