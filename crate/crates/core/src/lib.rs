//! Simultaneous localization and radio mapping for a connected indoor robot.
//!
//! A robot explores an unknown room with a LiDAR, building an occupancy grid
//! with a Rao-Blackwellized particle filter while a boustrophedon coverage
//! planner drives it over every reachable cell. From the resulting geographic
//! map a radio map of the expected channel power gain to a fixed access point
//! is derived, using the 3GPP InF-SH path-loss model with a LoS/NLoS switch
//! decided by 3D occlusion.
//!
//! Module map:
//!
//! * [`scenario`]: ground-truth world, rasterization, LiDAR and odometry simulation
//! * [`grid`]: occupancy grid, index transforms, Bresenham tracing, inflation, PGM I/O
//! * [`slam`]: particle filter with the scan-matched Gaussian proposal
//! * [`coverage`]: grid coverage exploration with A* relocation
//! * [`radio`]: channel model, path loss, line-of-sight and radio map assembly
//! * [`experiment`]: end-to-end pipelines, accuracy metric and file exports

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coverage;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod grid;
pub mod radio;
pub mod rng;
pub mod scenario;
pub mod slam;

pub use error::{Error, Result};
pub use geometry::{normalize_angle, Aabb3, Point2, Point3, Pose};
pub use grid::{CellClass, ClassGrid, GridGeometry, GridIndex, OccupancyGrid};
pub use scenario::Scenario;
