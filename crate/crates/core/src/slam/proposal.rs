//! Improved proposal: Gaussian fitted to likelihood-weighted samples drawn
//! around the scan-match optimum.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use super::likelihood::{scan_match_field, LikelihoodField, ScanPoints};
use crate::geometry::{normalize_angle, Pose};
use crate::rng::rng_from_seed;

/// Half-widths of the sampling box around the scan-match optimum.
pub const WINDOW_CELLS: f64 = 2.0;
pub const WINDOW_THETA_DEG: f64 = 3.0;

/// Standard deviations of the motion prior `p(x_j | x_{t-1}, l_{t-1})`,
/// expressed in the body frame of the odometry-propagated pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MotionPrior {
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub sigma_theta: f64,
}

impl MotionPrior {
    fn log_density(&self, predicted: &Pose, x: &Pose) -> f64 {
        let (ex, ey, et) = predicted.delta_to(x);
        let q = (ex / self.sigma_x).powi(2) + (ey / self.sigma_y).powi(2) + (et / self.sigma_theta).powi(2);
        let norm = 1.5 * std::f64::consts::TAU.ln() + (self.sigma_x * self.sigma_y * self.sigma_theta).ln();
        -0.5 * q - norm
    }
}

/// Weighted sample set behind one particle's proposal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProposalStats {
    pub samples: Vec<Pose>,
    /// `ln(p(o | m, x_j) · p(x_j | x_{t-1}, l_{t-1}))` per sample.
    pub log_weights: Vec<f64>,
    pub mu: Pose,
    /// Covariance over (x, y, theta).
    pub sigma: [[f64; 3]; 3],
    /// `ln η`, with `η = Σ_j p(o | m, x_j) · p(x_j | x_{t-1}, l_{t-1})`.
    pub log_eta: f64,
}

impl ProposalStats {
    pub fn eta(&self) -> f64 {
        self.log_eta.exp()
    }
}

pub(crate) fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + values.map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Weighted mean and covariance of `samples`. Headings are unwrapped
/// relative to the first sample before averaging. `None` when every weight
/// is zero.
pub fn proposal_moments(samples: Vec<Pose>, log_weights: Vec<f64>) -> Option<ProposalStats> {
    assert_eq!(samples.len(), log_weights.len());
    let log_eta = log_sum_exp(log_weights.iter().copied());
    if samples.is_empty() || !log_eta.is_finite() {
        return None;
    }
    let ref_theta = samples[0].theta;
    let vecs: Vec<[f64; 3]> = samples
        .iter()
        .map(|p| [p.x, p.y, ref_theta + normalize_angle(p.theta - ref_theta)])
        .collect();
    let w: Vec<f64> = log_weights.iter().map(|l| (l - log_eta).exp()).collect();
    let mut mean = [0.0; 3];
    for (v, wj) in vecs.iter().zip(&w) {
        for k in 0..3 {
            mean[k] += wj * v[k];
        }
    }
    let mut sigma = [[0.0; 3]; 3];
    for (v, wj) in vecs.iter().zip(&w) {
        let d = [v[0] - mean[0], v[1] - mean[1], v[2] - mean[2]];
        for r in 0..3 {
            for c in 0..3 {
                sigma[r][c] += wj * d[r] * d[c];
            }
        }
    }
    Some(ProposalStats {
        samples,
        log_weights,
        mu: Pose::new(mean[0], mean[1], mean[2]),
        sigma,
        log_eta,
    })
}

/// Lower-triangular factor of a positive semidefinite 3×3 matrix. Directions
/// with no variance get a zero column.
fn cholesky3(a: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut l = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = a[i][i] - s;
                l[i][j] = if d > 1e-300 { d.sqrt() } else { 0.0 };
            } else if l[j][j] > 0.0 {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    l
}

/// Draws one pose from `N(mu, sigma)`.
pub fn sample_gaussian(stats: &ProposalStats, seed: u64) -> Pose {
    let l = cholesky3(&stats.sigma);
    if l.iter().flatten().all(|v| *v == 0.0) {
        return stats.mu;
    }
    let mut rng = rng_from_seed(seed);
    let n: [f64; 3] = [
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    ];
    let off = |r: usize| (0..=r).map(|k| l[r][k] * n[k]).sum::<f64>();
    Pose::new(stats.mu.x + off(0), stats.mu.y + off(1), stats.mu.theta + off(2))
}

/// Result of one particle's proposal step.
#[derive(Debug, Clone)]
pub struct ProposalOutcome {
    pub pose: Pose,
    pub stats: Option<ProposalStats>,
    /// Set when η vanished and the raw odometry pose was used instead.
    pub fallback: bool,
}

/// Scan-matches from `predicted`, takes the optimum plus `z - 1` poses drawn
/// uniformly in the window around it, and draws the new pose from the
/// Gaussian fitted to their likelihood-times-prior weights.
pub fn sample_proposal(
    field: &LikelihoodField<'_>,
    points: &ScanPoints,
    predicted: Pose,
    prior: &MotionPrior,
    z: usize,
    seed: u64,
) -> ProposalOutcome {
    let delta = field.delta();
    let (center, _) = scan_match_field(field, points, predicted);
    let half_xy = WINDOW_CELLS * delta;
    let half_th = WINDOW_THETA_DEG.to_radians();
    let mut rng = rng_from_seed(seed);
    // the optimum itself is kept as the first sample; the box is far wider
    // than the posterior, so purely random samples would rarely land on it
    let samples: Vec<Pose> = std::iter::once(center)
        .chain((1..z).map(|_| {
            Pose::new(
                center.x + rng.random_range(-half_xy..=half_xy),
                center.y + rng.random_range(-half_xy..=half_xy),
                center.theta + rng.random_range(-half_th..=half_th),
            )
        }))
        .collect();
    let log_weights: Vec<f64> = samples
        .iter()
        .map(|x| field.log_likelihood(x, points) + prior.log_density(&predicted, x))
        .collect();
    match proposal_moments(samples, log_weights) {
        Some(stats) => {
            let pose = sample_gaussian(&stats, rng.random());
            ProposalOutcome {
                pose,
                stats: Some(stats),
                fallback: false,
            }
        }
        None => ProposalOutcome {
            pose: predicted,
            stats: None,
            fallback: true,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_samples_collapse() {
        let p = Pose::new(1.0, -2.0, 0.5);
        let stats = proposal_moments(vec![p; 5], vec![-3.0; 5]).unwrap();
        assert_eq!(stats.mu, p);
        assert!(stats.sigma.iter().flatten().all(|v| v.abs() < 1e-15));
        assert_eq!(sample_gaussian(&stats, 9), p);
    }

    #[test]
    fn two_equal_samples_average() {
        let stats = proposal_moments(
            vec![Pose::new(0.0, 0.0, 0.0), Pose::new(1.0, 0.0, 0.0)],
            vec![-1.0, -1.0],
        )
        .unwrap();
        assert!((stats.mu.x - 0.5).abs() < 1e-15);
        assert!((stats.sigma[0][0] - 0.25).abs() < 1e-15);
        assert!((stats.log_eta - (2.0f64.ln() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn headings_unwrap_across_pi() {
        let a = 179f64.to_radians();
        let stats = proposal_moments(vec![Pose::new(0.0, 0.0, a), Pose::new(0.0, 0.0, -a)], vec![0.0, 0.0]).unwrap();
        assert!((stats.mu.theta.abs() - std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn all_zero_weights_give_none() {
        assert!(proposal_moments(vec![Pose::default()], vec![f64::NEG_INFINITY]).is_none());
    }

    #[test]
    fn gaussian_draw_is_deterministic() {
        let stats = proposal_moments(
            vec![Pose::new(0.0, 0.0, 0.0), Pose::new(0.1, 0.2, 0.01), Pose::new(-0.1, 0.1, 0.0)],
            vec![0.0, -0.5, -1.0],
        )
        .unwrap();
        assert_eq!(sample_gaussian(&stats, 4), sample_gaussian(&stats, 4));
        assert_ne!(sample_gaussian(&stats, 4), sample_gaussian(&stats, 5));
    }

    proptest::proptest! {
        #[test]
        fn moments_match_direct_sums(pts in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0, -0.5f64..0.5, -5.0f64..0.0), 1..30)) {
            let samples: Vec<Pose> = pts.iter().map(|p| Pose::new(p.0, p.1, p.2)).collect();
            let logw: Vec<f64> = pts.iter().map(|p| p.3).collect();
            let st = proposal_moments(samples.clone(), logw.clone()).unwrap();
            let w: Vec<f64> = logw.iter().map(|l| l.exp()).collect();
            let eta: f64 = w.iter().sum();
            proptest::prop_assert!((st.log_eta - eta.ln()).abs() < 1e-9);
            let comp = |p: &Pose, k: usize| [p.x, p.y, p.theta][k];
            let mean: Vec<f64> = (0..3)
                .map(|k| samples.iter().zip(&w).map(|(p, wj)| wj * comp(p, k)).sum::<f64>() / eta)
                .collect();
            proptest::prop_assert!((st.mu.x - mean[0]).abs() < 1e-9);
            proptest::prop_assert!((st.mu.y - mean[1]).abs() < 1e-9);
            proptest::prop_assert!((st.mu.theta - mean[2]).abs() < 1e-9);
            for r in 0..3 {
                for c in 0..3 {
                    let cov = samples
                        .iter()
                        .zip(&w)
                        .map(|(p, wj)| wj * (comp(p, r) - mean[r]) * (comp(p, c) - mean[c]))
                        .sum::<f64>()
                        / eta;
                    proptest::prop_assert!((st.sigma[r][c] - cov).abs() < 1e-9);
                }
            }
        }
    }
}
