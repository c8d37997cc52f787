//! Ground-truth world description and its rasterization.
//!
//! A [`Scenario`] is loaded from a JSON document:
//!
//! ```json
//! {
//!   "room": {"x_max": 5.0, "y_max": 3.5, "height": 3.0},
//!   "ap": {"x": 0.0, "y": 3.5, "z": 2.5},
//!   "fc_ghz": 3.5,
//!   "h_m": 0.3,
//!   "noise_power_dbm": -90.0,
//!   "walls": [{"x": [-3.75, 3.75], "y": [1.0, 1.5], "h": 1.8}],
//!   "obstacles": [{"x": [-2.65, -1.35], "y": [2.5, 3.5], "h": 1.5}],
//!   "lidar": {"beam_count": 360, "max_range": 8.0, "range_noise_sigma": 0.01, "angular_span": 6.283185307179586},
//!   "odometry_noise": {"sigma_x": 0.01, "sigma_y": 0.01, "sigma_theta": 0.005}
//! }
//! ```
//!
//! `room`, `walls` and `obstacles` are required. Boxes stand on the floor
//! unless `"z0"` is given. `ap` defaults to `(0, y_max, 2.5)`, `fc_ghz` to
//! 3.5, `h_m` to 0.3, and `lidar` / `odometry_noise` to the defaults of
//! [`LidarSpec`] and [`OdometryNoise`].

mod sensors;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Aabb3, Point3};
use crate::grid::{CellClass, ClassGrid, GridGeometry, LogOddsParams, OccupancyGrid};

pub use sensors::{
    simulate_lidar, step_motion, LidarSpec, MotionCommand, MotionOutcome, OdometryNoise,
    OdometryReading, RobotState, Scan,
};

/// Default height of the access point above the floor (m).
pub const DEFAULT_AP_HEIGHT: f64 = 2.5;
pub const DEFAULT_FC_GHZ: f64 = 3.5;
pub const DEFAULT_ROBOT_ANTENNA_HEIGHT: f64 = 0.3;

const FIG2_JSON: &str = include_str!("../../scenarios/fig2.json");
const FIG2_PADDED_JSON: &str = include_str!("../../scenarios/fig2_padded.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RoomConfig {
    x_max: f64,
    y_max: f64,
    height: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoxConfig {
    x: [f64; 2],
    y: [f64; 2],
    h: f64,
    #[serde(default)]
    z0: f64,
}

impl BoxConfig {
    fn to_aabb(&self) -> Aabb3 {
        Aabb3::new(
            Point3::new(self.x[0], self.y[0], self.z0),
            Point3::new(self.x[1], self.y[1], self.h),
        )
    }

    fn from_aabb(b: &Aabb3) -> Self {
        Self {
            x: [b.min.x, b.max.x],
            y: [b.min.y, b.max.y],
            h: b.max.z,
            z0: b.min.z,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioConfig {
    room: RoomConfig,
    #[serde(default)]
    ap: Option<Point3>,
    #[serde(default)]
    fc_ghz: Option<f64>,
    #[serde(default)]
    h_m: Option<f64>,
    #[serde(default)]
    noise_power_dbm: Option<f64>,
    walls: Vec<BoxConfig>,
    obstacles: Vec<BoxConfig>,
    #[serde(default)]
    lidar: Option<LidarSpec>,
    #[serde(default)]
    odometry_noise: Option<OdometryNoise>,
}

/// Validated ground-truth environment.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub x_max: f64,
    pub y_max: f64,
    pub ceiling_height: f64,
    pub ap_position: Point3,
    /// Robot antenna height (m).
    pub h_m: f64,
    pub fc_ghz: f64,
    pub obstacles: Vec<Aabb3>,
    pub walls: Vec<Aabb3>,
    /// Carried for reporting only; no formula consumes it.
    pub noise_power_dbm: Option<f64>,
    pub lidar: LidarSpec,
    pub odometry_noise: OdometryNoise,
}

/// Builds a [`Scenario`] from a parsed JSON tree.
pub fn load_scenario(config: &serde_json::Value) -> Result<Scenario> {
    let cfg: ScenarioConfig = serde_json::from_value(config.clone())
        .map_err(|e| Error::InvalidScenario(e.to_string()))?;
    Scenario::from_config(cfg)
}

impl Scenario {
    fn from_config(cfg: ScenarioConfig) -> Result<Self> {
        let s = Scenario {
            x_max: cfg.room.x_max,
            y_max: cfg.room.y_max,
            ceiling_height: cfg.room.height,
            ap_position: cfg
                .ap
                .unwrap_or(Point3::new(0.0, cfg.room.y_max, DEFAULT_AP_HEIGHT)),
            h_m: cfg.h_m.unwrap_or(DEFAULT_ROBOT_ANTENNA_HEIGHT),
            fc_ghz: cfg.fc_ghz.unwrap_or(DEFAULT_FC_GHZ),
            obstacles: cfg.obstacles.iter().map(BoxConfig::to_aabb).collect(),
            walls: cfg.walls.iter().map(BoxConfig::to_aabb).collect(),
            noise_power_dbm: cfg.noise_power_dbm,
            lidar: cfg.lidar.unwrap_or_default(),
            odometry_noise: cfg.odometry_noise.unwrap_or_default(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig =
            serde_json::from_str(text).map_err(|e| Error::InvalidScenario(e.to_string()))?;
        Self::from_config(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    /// The 10 m x 7 m x 3 m test room: an inner rectangular wall ring
    /// (outer perimeter 21 m, 0.5 m thick, 1.8 m high), three 1.3 x 1 x 1.5 m
    /// obstacles and the access point at (0, 3.5, 2.5).
    pub fn fig2() -> Self {
        Self::from_json_str(FIG2_JSON).expect("shipped scenario is valid")
    }

    /// Same layout in a 10.5 m x 7.5 m room, whose extents are divisible by
    /// 0.05, 0.1, 0.15 and 0.25 m alike.
    pub fn fig2_padded() -> Self {
        Self::from_json_str(FIG2_PADDED_JSON).expect("shipped scenario is valid")
    }

    /// Empty room with the given half-extents and default radio parameters.
    pub fn open_room(x_max: f64, y_max: f64) -> Result<Self> {
        Self::from_json_str(&format!(
            r#"{{"room": {{"x_max": {x_max}, "y_max": {y_max}, "height": 3.0}}, "walls": [], "obstacles": []}}"#
        ))
    }

    pub fn to_json(&self) -> serde_json::Value {
        let cfg = ScenarioConfig {
            room: RoomConfig {
                x_max: self.x_max,
                y_max: self.y_max,
                height: self.ceiling_height,
            },
            ap: Some(self.ap_position),
            fc_ghz: Some(self.fc_ghz),
            h_m: Some(self.h_m),
            noise_power_dbm: self.noise_power_dbm,
            walls: self.walls.iter().map(BoxConfig::from_aabb).collect(),
            obstacles: self.obstacles.iter().map(BoxConfig::from_aabb).collect(),
            lidar: Some(self.lidar.clone()),
            odometry_noise: Some(self.odometry_noise),
        };
        serde_json::to_value(cfg).expect("scenario serializes")
    }

    /// Walls followed by obstacles.
    pub fn boxes(&self) -> impl Iterator<Item = &Aabb3> {
        self.walls.iter().chain(self.obstacles.iter())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidScenario(m));
        if !(self.x_max > 0.0 && self.y_max > 0.0 && self.x_max.is_finite() && self.y_max.is_finite()) {
            return bad(format!(
                "room half-extents must be positive, got x_max={}, y_max={}",
                self.x_max, self.y_max
            ));
        }
        if !(self.ceiling_height > 0.0) {
            return bad(format!("ceiling height must be positive, got {}", self.ceiling_height));
        }
        if !(self.fc_ghz > 0.0 && self.fc_ghz.is_finite()) {
            return bad(format!("carrier frequency must be positive, got {}", self.fc_ghz));
        }
        if !(self.h_m > 0.0 && self.h_m < self.ceiling_height) {
            return bad(format!("robot antenna height {} outside (0, ceiling)", self.h_m));
        }
        let ap = self.ap_position;
        let tol = 1e-9;
        if ap.x.abs() > self.x_max + tol
            || ap.y.abs() > self.y_max + tol
            || ap.z < 0.0
            || ap.z > self.ceiling_height + tol
        {
            return bad(format!("access point ({}, {}, {}) outside the room", ap.x, ap.y, ap.z));
        }
        for (kind, list) in [("wall", &self.walls), ("obstacle", &self.obstacles)] {
            for (i, b) in list.iter().enumerate() {
                if !b.has_positive_extent() {
                    return bad(format!("{kind} {i} has a non-positive extent"));
                }
                if b.min.x < -self.x_max - tol
                    || b.max.x > self.x_max + tol
                    || b.min.y < -self.y_max - tol
                    || b.max.y > self.y_max + tol
                {
                    return bad(format!(
                        "{kind} {i} spans x [{}, {}], y [{}, {}] beyond the room [-{}, {}] x [-{}, {}]",
                        b.min.x, b.max.x, b.min.y, b.max.y, self.x_max, self.x_max, self.y_max, self.y_max
                    ));
                }
            }
        }
        self.lidar.validate()?;
        self.odometry_noise.validate()?;
        Ok(())
    }

    pub fn grid_geometry(&self, delta: f64) -> Result<GridGeometry> {
        GridGeometry::new(self.x_max, self.y_max, delta)
    }

    /// Tri-state ground truth: a cell is occupied iff its center lies in the
    /// footprint of a wall or obstacle; every other cell is free.
    pub fn ground_truth_classes(&self, delta: f64) -> Result<ClassGrid> {
        let geom = self.grid_geometry(delta)?;
        let cells = geom
            .indices()
            .map(|idx| {
                let c = geom.center_unchecked(idx);
                if self.boxes().any(|b| b.footprint_contains(c.x, c.y)) {
                    CellClass::Occupied
                } else {
                    CellClass::Free
                }
            })
            .collect();
        ClassGrid::from_cells(geom, cells)
    }
}

/// Rasterizes the scenario footprints at resolution `delta` into a saturated
/// occupancy grid.
pub fn rasterize_ground_truth(scenario: &Scenario, delta: f64) -> Result<OccupancyGrid> {
    let classes = scenario.ground_truth_classes(delta)?;
    Ok(OccupancyGrid::from_classes(&classes, LogOddsParams::default()))
}
