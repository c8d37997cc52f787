use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point2;

/// Absolute trajectory error over paired positions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AteReport {
    pub q0: usize,
    /// Mean squared positional error (m²), x and y pooled per sample.
    pub mse: f64,
    pub rmse: f64,
}

pub fn compute_ate(observed: &[Point2], truth: &[Point2]) -> Result<AteReport> {
    if observed.len() != truth.len() {
        return Err(Error::DimensionMismatch(format!(
            "trajectory lengths differ: {} estimated vs {} true",
            observed.len(),
            truth.len()
        )));
    }
    if observed.is_empty() {
        return Err(Error::InvalidArgument("empty trajectory".into()));
    }
    let sum: f64 = observed
        .iter()
        .zip(truth)
        .map(|(o, t)| (o.x - t.x).powi(2) + (o.y - t.y).powi(2))
        .sum();
    let mse = sum / observed.len() as f64;
    Ok(AteReport {
        q0: observed.len(),
        mse,
        rmse: mse.sqrt(),
    })
}
