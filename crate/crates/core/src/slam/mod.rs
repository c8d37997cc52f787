//! Rao-Blackwellized particle filter with an improved scan-matching proposal.
//!
//! Each particle owns a pose history and an occupancy grid. A step draws a
//! new pose per particle from a Gaussian fitted around the scan-match peak,
//! multiplies the weight by the proposal normalizer η, integrates the scan
//! into the particle's map, and resamples only when the effective sample size
//! drops below a fraction of the particle count.

mod ate;
mod likelihood;
mod proposal;

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use ate::{compute_ate, AteReport};
pub use likelihood::{
    measurement_likelihood, scan_match, scan_match_field, LikelihoodField, ScanPoints, HIT_SIGMA_CELLS,
    LIKELIHOOD_FLOOR,
};
pub use proposal::{
    proposal_moments, sample_gaussian, sample_proposal, MotionPrior, ProposalOutcome, ProposalStats, WINDOW_CELLS,
    WINDOW_THETA_DEG,
};

use crate::error::{Error, Result};
use crate::geometry::{Point2, Pose};
use crate::grid::{DistanceField, GridGeometry, GridIndex, OccupancyGrid};
use crate::rng::{derive_seed, rng_from_seed};
use crate::scenario::{LidarSpec, OdometryNoise, OdometryReading, Scan};

pub const DEFAULT_MATCH_BEAMS: usize = 36;
const RESAMPLE_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SlamParams {
    pub particles: usize,
    /// Samples `z` drawn around the scan-match peak.
    pub proposal_samples: usize,
    pub match_beams: usize,
    pub resample_threshold: f64,
    /// Odometry noise accumulated between two scans, used by the motion prior.
    pub motion_noise: OdometryNoise,
}

impl Default for SlamParams {
    fn default() -> Self {
        Self {
            particles: 30,
            proposal_samples: 20,
            match_beams: DEFAULT_MATCH_BEAMS,
            resample_threshold: 0.5,
            motion_noise: OdometryNoise::default(),
        }
    }
}

impl SlamParams {
    pub fn validate(&self) -> Result<()> {
        if self.particles < 1 {
            return Err(Error::InvalidArgument("need at least one particle".into()));
        }
        if self.proposal_samples < 3 {
            return Err(Error::InvalidArgument(format!(
                "proposal needs z >= 3 samples, got {}",
                self.proposal_samples
            )));
        }
        if !(0.0..=1.0).contains(&self.resample_threshold) {
            return Err(Error::InvalidArgument(format!(
                "resample threshold must lie in [0, 1], got {}",
                self.resample_threshold
            )));
        }
        self.motion_noise.validate()
    }

    /// Motion prior with standard deviations floored at (δ/4, δ/4, 0.5°) so
    /// that noiseless odometry still yields a proper density.
    pub fn motion_prior(&self, delta: f64) -> MotionPrior {
        MotionPrior {
            sigma_x: self.motion_noise.sigma_x.max(delta / 4.0),
            sigma_y: self.motion_noise.sigma_y.max(delta / 4.0),
            sigma_theta: self.motion_noise.sigma_theta.max(0.5f64.to_radians()),
        }
    }
}

struct TrajNode {
    pose: Pose,
    parent: Option<Arc<TrajNode>>,
}

impl Drop for TrajNode {
    // unlink iteratively; long histories would otherwise recurse on drop
    fn drop(&mut self) {
        let mut next = self.parent.take();
        while let Some(node) = next {
            match Arc::try_unwrap(node) {
                Ok(mut n) => next = n.parent.take(),
                Err(_) => break,
            }
        }
    }
}

/// Persistent pose history; clones share their common prefix.
#[derive(Clone, Default)]
pub struct Trajectory {
    head: Option<Arc<TrajNode>>,
    len: usize,
}

impl Trajectory {
    pub fn push(&mut self, pose: Pose) {
        let parent = self.head.take();
        self.head = Some(Arc::new(TrajNode { pose, parent }));
        self.len += 1;
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn last(&self) -> Option<Pose> {
        self.head.as_ref().map(|n| n.pose)
    }

    /// Poses from newest to oldest.
    pub fn iter_rev(&self) -> impl Iterator<Item = Pose> + '_ {
        let mut cur = self.head.as_deref();
        std::iter::from_fn(move || {
            let node = cur?;
            cur = node.parent.as_deref();
            Some(node.pose)
        })
    }

    /// Pose at step `t` (0-based).
    pub fn get(&self, t: usize) -> Option<Pose> {
        if t >= self.len {
            return None;
        }
        self.iter_rev().nth(self.len - 1 - t)
    }

    pub fn to_vec(&self) -> Vec<Pose> {
        let mut v: Vec<Pose> = self.iter_rev().collect();
        v.reverse();
        v
    }
}

impl fmt::Debug for Trajectory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Trajectory")
            .field("len", &self.len)
            .field("last", &self.last())
            .finish()
    }
}

#[derive(Debug, Clone)]
pub struct Particle {
    pub trajectory: Trajectory,
    pub weight: f64,
    pub map: OccupancyGrid,
    /// Cached distance field of `map`; `None` once the map's occupied set changed.
    field: Option<Arc<DistanceField>>,
    /// Set when the last proposal fell back to raw odometry.
    pub flagged: bool,
}

impl Particle {
    pub fn new(map: OccupancyGrid, start: Pose, weight: f64) -> Self {
        let mut trajectory = Trajectory::default();
        trajectory.push(start);
        Self {
            trajectory,
            weight,
            map,
            field: None,
            flagged: false,
        }
    }

    pub fn pose(&self) -> Pose {
        self.trajectory.last().unwrap_or_default()
    }

    fn cached_field(&mut self) -> Arc<DistanceField> {
        let field = self
            .field
            .get_or_insert_with(|| Arc::new(DistanceField::from_grid(&self.map)));
        Arc::clone(field)
    }
}

#[derive(Debug, Clone)]
pub struct ParticleSet {
    particles: Vec<Particle>,
    params: SlamParams,
    lidar: LidarSpec,
    t: usize,
    cell_steps: HashMap<GridIndex, usize>,
    resample_count: usize,
}

/// Summary of one filter update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub pose: Pose,
    pub n_eff: f64,
    pub resampled: bool,
    /// Particles whose proposal fell back to odometry.
    pub fallbacks: usize,
    /// True when every weight vanished and the set was reset to uniform.
    pub weights_reset: bool,
}

impl ParticleSet {
    /// `I` particles at `start`, each with an empty map over `geom`.
    pub fn new(geom: GridGeometry, start: Pose, params: SlamParams, lidar: LidarSpec) -> Result<Self> {
        params.validate()?;
        lidar.validate()?;
        let w = 1.0 / params.particles as f64;
        let particles = (0..params.particles)
            .map(|_| Particle::new(OccupancyGrid::new(geom), start, w))
            .collect();
        Ok(Self {
            particles,
            params,
            lidar,
            t: 0,
            cell_steps: HashMap::new(),
            resample_count: 0,
        })
    }

    /// Builds a set from explicit particles. Weights are normalized.
    pub fn from_particles(particles: Vec<Particle>, params: SlamParams, lidar: LidarSpec) -> Result<Self> {
        if particles.is_empty() {
            return Err(Error::InvalidArgument("particle set must not be empty".into()));
        }
        let mut set = Self {
            t: particles[0].trajectory.len().saturating_sub(1),
            particles,
            params,
            lidar,
            cell_steps: HashMap::new(),
            resample_count: 0,
        };
        let mut w = set.weights();
        normalize_weights(&mut w);
        set.set_weights(&w);
        Ok(set)
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn params(&self) -> &SlamParams {
        &self.params
    }

    /// Number of completed filter steps.
    pub fn t(&self) -> usize {
        self.t
    }

    pub fn resample_count(&self) -> usize {
        self.resample_count
    }

    pub fn weights(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.weight).collect()
    }

    fn set_weights(&mut self, w: &[f64]) {
        for (p, w) in self.particles.iter_mut().zip(w) {
            p.weight = *w;
        }
    }

    pub fn effective_sample_size(&self) -> f64 {
        effective_sample_size(&self.weights())
    }

    /// Index of the heaviest particle; ties go to the lowest index.
    pub fn best_index(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.particles.iter().enumerate() {
            if p.weight > self.particles[best].weight {
                best = i;
            }
        }
        best
    }

    pub fn best(&self) -> &Particle {
        &self.particles[self.best_index()]
    }

    /// Associates the latest step with the grid cell the robot occupied.
    pub fn tag_cell(&mut self, idx: GridIndex) {
        self.cell_steps.insert(idx, self.t);
    }
}

/// `w_t = w_{t-1} · η`.
pub fn update_weight(weight: f64, eta: f64) -> f64 {
    weight * eta
}

/// Normalizes in place. Returns true when every weight was zero (or not
/// finite) and the vector was reset to uniform.
pub fn normalize_weights(w: &mut [f64]) -> bool {
    let sum: f64 = w.iter().filter(|v| v.is_finite() && **v > 0.0).sum();
    if !(sum > 0.0) || !sum.is_finite() {
        let u = 1.0 / w.len() as f64;
        w.iter_mut().for_each(|v| *v = u);
        return true;
    }
    for v in w.iter_mut() {
        *v = if v.is_finite() && *v > 0.0 { *v / sum } else { 0.0 };
    }
    false
}

/// Log-domain weight update and normalization. Returns true on reset.
fn update_log_weights(w: &mut [f64], log_eta: &[f64]) -> bool {
    let logs: Vec<f64> = w.iter().zip(log_eta).map(|(w, e)| w.ln() + e).collect();
    let lse = proposal::log_sum_exp(logs.iter().copied());
    if !lse.is_finite() {
        let u = 1.0 / w.len() as f64;
        w.iter_mut().for_each(|v| *v = u);
        return true;
    }
    for (v, l) in w.iter_mut().zip(&logs) {
        *v = (l - lse).exp();
    }
    // exact renormalization against rounding
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    false
}

/// `1 / Σ w²` for normalized weights.
pub fn effective_sample_size(w: &[f64]) -> f64 {
    1.0 / w.iter().map(|v| v * v).sum::<f64>()
}

/// Systematic (low-variance) resampling; returns the survivor index for each
/// output slot, in non-decreasing order.
pub fn systematic_resample(w: &[f64], seed: u64) -> Vec<usize> {
    let n = w.len();
    let mut rng = rng_from_seed(seed);
    let u0: f64 = rng.random::<f64>() / n as f64;
    let mut out = Vec::with_capacity(n);
    let mut cum = w[0];
    let mut i = 0;
    for k in 0..n {
        let u = u0 + k as f64 / n as f64;
        while u > cum && i + 1 < n {
            i += 1;
            cum += w[i];
        }
        out.push(i);
    }
    out
}

/// Resamples when `N_eff < threshold · I`. Survivors are deep copies with
/// weight `1/I`. Returns whether resampling happened.
pub fn selective_resample(set: &mut ParticleSet, threshold: f64, seed: u64) -> bool {
    let n = set.particles.len();
    let w = set.weights();
    if effective_sample_size(&w) >= threshold * n as f64 {
        return false;
    }
    let picks = systematic_resample(&w, seed);
    let mut old: Vec<Option<Particle>> = std::mem::take(&mut set.particles).into_iter().map(Some).collect();
    let mut out = Vec::with_capacity(n);
    for (k, &i) in picks.iter().enumerate() {
        // the last slot referring to `i` takes ownership, earlier ones copy
        let last_use = picks[k + 1..].first() != Some(&i);
        let mut p = if last_use {
            old[i].take().expect("survivor taken twice")
        } else {
            old[i].as_ref().expect("survivor taken twice").clone()
        };
        p.weight = 1.0 / n as f64;
        out.push(p);
    }
    set.particles = out;
    set.resample_count += 1;
    true
}

/// Unweighted mean position with circular-mean heading.
pub fn estimate_pose(set: &ParticleSet) -> Pose {
    mean_pose(set.particles.iter().map(|p| p.pose()))
}

fn mean_pose(poses: impl Iterator<Item = Pose>) -> Pose {
    let (mut x, mut y, mut s, mut c, mut n) = (0.0, 0.0, 0.0, 0.0, 0usize);
    for p in poses {
        x += p.x;
        y += p.y;
        s += p.theta.sin();
        c += p.theta.cos();
        n += 1;
    }
    let n = n.max(1) as f64;
    Pose::new(x / n, y / n, s.atan2(c))
}

/// Mean over particles of the position each one held when the robot was
/// last tagged at `idx`; `None` if the cell was never tagged.
pub fn estimate_cell(set: &ParticleSet, idx: GridIndex) -> Option<Point2> {
    let t = *set.cell_steps.get(&idx)?;
    let pose = mean_pose(set.particles.iter().filter_map(|p| p.trajectory.get(t)));
    Some(pose.position())
}

/// One full filter update: proposal, weight update and map update per
/// particle, then normalization, selective resampling and pose estimation.
pub fn slam_step(set: &mut ParticleSet, scan: &Scan, odom: &OdometryReading, seed: u64) -> Result<StepReport> {
    if !odom.is_finite() {
        return Err(Error::InvalidArgument("odometry must be finite".into()));
    }
    let t = set.t + 1;
    let geom = *set.particles[0].map.geometry();
    let delta = geom.delta;
    let points = ScanPoints::new(scan, &set.lidar, set.params.match_beams);
    let prior = set.params.motion_prior(delta);
    let z = set.params.proposal_samples;
    let lidar = &set.lidar;

    let log_eta: Vec<f64> = set
        .particles
        .par_iter_mut()
        .enumerate()
        .map(|(i, p)| {
            let cached = p.cached_field();
            let field = LikelihoodField::from_field(&p.map, cached);
            let predicted = odom.apply(&p.pose());
            let out = sample_proposal(
                &field,
                &points,
                predicted,
                &prior,
                z,
                derive_seed(seed, &[i as u64, t as u64]),
            );
            p.trajectory.push(out.pose);
            p.flagged = out.fallback;
            p.map.set_epoch(t as u32);
            if p.map.integrate_scan(&out.pose, scan, lidar) > 0 {
                p.field = None;
            }
            out.stats.map_or(f64::NEG_INFINITY, |s| s.log_eta)
        })
        .collect();
    let fallbacks = set.particles.iter().filter(|p| p.flagged).count();

    let mut w = set.weights();
    let weights_reset = update_log_weights(&mut w, &log_eta);
    set.set_weights(&w);
    let n_eff = effective_sample_size(&w);
    let threshold = set.params.resample_threshold;
    let resampled = selective_resample(set, threshold, derive_seed(seed, &[RESAMPLE_STREAM, t as u64]));
    set.t = t;
    Ok(StepReport {
        pose: estimate_pose(set),
        n_eff,
        resampled,
        fallbacks,
        weights_reset,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{rasterize_ground_truth, simulate_lidar, RobotState, Scenario};

    fn geom() -> GridGeometry {
        GridGeometry::new(1.0, 1.0, 0.1).unwrap()
    }

    fn set_with_poses(poses: &[Pose]) -> ParticleSet {
        let particles = poses
            .iter()
            .map(|p| Particle::new(OccupancyGrid::new(geom()), *p, 1.0))
            .collect();
        ParticleSet::from_particles(particles, SlamParams::default(), LidarSpec::default()).unwrap()
    }

    #[test]
    fn weight_update_examples() {
        let mut w = vec![0.25; 4];
        let eta = [0.3; 4];
        let mut updated: Vec<f64> = w.iter().zip(eta).map(|(w, e)| update_weight(*w, e)).collect();
        assert!(!normalize_weights(&mut updated));
        assert!(updated.iter().all(|v| (v - 0.25).abs() < 1e-15));

        let eta = [2.0, 1.0, 1.0, 1.0];
        let mut updated: Vec<f64> = w.iter().zip(eta).map(|(w, e)| update_weight(*w, e)).collect();
        normalize_weights(&mut updated);
        assert!((updated[0] - 2.0 / 5.0).abs() < 1e-15);

        let log_eta = [0.0f64.ln(), 0.0, 0.0, 0.0];
        update_log_weights(&mut w, &log_eta);
        assert_eq!(w[0], 0.0);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);

        let mut dead = vec![0.5, 0.5];
        assert!(update_log_weights(&mut dead, &[f64::NEG_INFINITY; 2]));
        assert_eq!(dead, vec![0.5, 0.5]);
    }

    #[test]
    fn effective_sample_size_examples() {
        assert!((effective_sample_size(&[0.25; 4]) - 4.0).abs() < 1e-12);
        assert_eq!(effective_sample_size(&[1.0, 0.0, 0.0]), 1.0);
        assert_eq!(effective_sample_size(&[0.5, 0.5, 0.0, 0.0]), 2.0);
    }

    #[test]
    fn resampling_triggers_only_below_threshold() {
        let mut set = set_with_poses(&[Pose::new(0.0, 0.0, 0.0), Pose::new(0.5, 0.0, 0.0), Pose::new(0.7, 0.0, 0.0)]);
        assert!(!selective_resample(&mut set, 0.5, 1));
        set.set_weights(&[0.0, 1.0, 0.0]);
        assert!(selective_resample(&mut set, 0.5, 1));
        assert_eq!(set.len(), 3);
        for p in set.particles() {
            assert_eq!(p.pose(), Pose::new(0.5, 0.0, 0.0));
            assert!((p.weight - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn pose_estimate_examples() {
        let set = set_with_poses(&[Pose::new(1.0, 0.0, 0.0), Pose::new(2.0, 0.0, 0.0), Pose::new(3.0, 0.0, 0.0)]);
        assert!((estimate_pose(&set).x - 2.0).abs() < 1e-15);

        let single = set_with_poses(&[Pose::new(0.3, -0.2, 1.0)]);
        let p = estimate_pose(&single);
        assert!((p.x - 0.3).abs() < 1e-15 && (p.y + 0.2).abs() < 1e-15 && (p.theta - 1.0).abs() < 1e-12);

        let a = 179f64.to_radians();
        let wrap = set_with_poses(&[Pose::new(0.0, 0.0, a), Pose::new(0.0, 0.0, -a)]);
        assert!((estimate_pose(&wrap).theta.abs() - std::f64::consts::PI).abs() < 1e-9);
    }

    #[test]
    fn trajectory_history_is_shared_and_indexed() {
        let mut a = Trajectory::default();
        for k in 0..5 {
            a.push(Pose::new(k as f64, 0.0, 0.0));
        }
        let mut b = a.clone();
        b.push(Pose::new(9.0, 0.0, 0.0));
        assert_eq!(a.len(), 5);
        assert_eq!(b.get(2), Some(Pose::new(2.0, 0.0, 0.0)));
        assert_eq!(b.get(5), Some(Pose::new(9.0, 0.0, 0.0)));
        assert_eq!(a.get(5), None);
        assert_eq!(b.to_vec().len(), 6);

        let mut long = Trajectory::default();
        for _ in 0..200_000 {
            long.push(Pose::default());
        }
        drop(long);
    }

    #[test]
    fn estimate_cell_uses_tagged_step() {
        let mut set = set_with_poses(&[Pose::new(0.0, 0.0, 0.0), Pose::new(0.2, 0.0, 0.0)]);
        assert_eq!(estimate_cell(&set, GridIndex::new(10, 10)), None);
        set.tag_cell(GridIndex::new(10, 10));
        let p = estimate_cell(&set, GridIndex::new(10, 10)).unwrap();
        assert!((p.x - 0.1).abs() < 1e-15);
    }

    fn run_noiseless(seed: u64) -> Vec<Pose> {
        let sc = Scenario::fig2();
        let gt = rasterize_ground_truth(&sc, 0.1).unwrap();
        let lidar = LidarSpec {
            range_noise_sigma: 0.0,
            ..LidarSpec::default()
        };
        let params = SlamParams {
            particles: 3,
            motion_noise: OdometryNoise::ZERO,
            ..SlamParams::default()
        };
        let start = Pose::new(-4.45, 2.05, 0.0);
        let mut set = ParticleSet::new(*gt.geometry(), start, params, lidar.clone()).unwrap();
        let mut truth = start;
        let mut out = Vec::new();
        for k in 0..20 {
            let next = Pose::new(truth.x + 0.1, truth.y, 0.0);
            let odom = if k == 0 {
                OdometryReading::default()
            } else {
                OdometryReading::between(&truth, &next)
            };
            if k > 0 {
                truth = next;
            }
            let scan = simulate_lidar(&gt, &RobotState::at(truth), &lidar, 0, k).unwrap();
            let r = slam_step(&mut set, &scan, &odom, seed).unwrap();
            assert!((set.weights().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(r.n_eff >= 1.0 - 1e-9 && r.n_eff <= set.len() as f64 + 1e-9);
            assert!(r.pose.position().distance(&truth.position()) < 0.1, "step {k}: {:?} vs {truth:?}", r.pose);
            out.push(r.pose);
        }
        out
    }

    #[test]
    fn noiseless_tracking_and_determinism() {
        assert_eq!(run_noiseless(5), run_noiseless(5));
    }

    proptest::proptest! {
        #[test]
        fn systematic_counts_are_floor_or_ceil(raw in proptest::collection::vec(0.01f64..1.0, 1..40), seed in 0u64..1000) {
            let s: f64 = raw.iter().sum();
            let w: Vec<f64> = raw.iter().map(|v| v / s).collect();
            let n = w.len();
            let picks = systematic_resample(&w, seed);
            proptest::prop_assert_eq!(picks.len(), n);
            proptest::prop_assert!(picks.windows(2).all(|p| p[0] <= p[1]));
            for (i, wi) in w.iter().enumerate() {
                let c = picks.iter().filter(|p| **p == i).count() as f64;
                let e = wi * n as f64;
                proptest::prop_assert!(c >= (e - 1e-9).floor() && c <= (e + 1e-9).ceil(), "slot {} count {} expected {}", i, c, e);
            }
        }
    }

    #[test]
    fn resampling_frequencies_pass_chi_square() {
        let w = [0.05, 0.1, 0.15, 0.3, 0.4];
        let runs = 4000;
        let mut counts = [0usize; 5];
        for seed in 0..runs {
            for i in systematic_resample(&w, seed) {
                counts[i] += 1;
            }
        }
        let total = (runs as usize * w.len()) as f64;
        let chi2: f64 = counts
            .iter()
            .zip(&w)
            .map(|(c, p)| (*c as f64 - total * p).powi(2) / (total * p))
            .sum();
        // 4 degrees of freedom, 0.999 quantile
        assert!(chi2 < 18.47, "chi2 = {chi2}, counts {counts:?}");
    }
}
