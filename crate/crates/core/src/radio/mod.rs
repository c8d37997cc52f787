//! Channel model and radio-map construction.
//!
//! The expected channel power gain at a receiver is the negative InF-SH path
//! loss, with the LoS or NLoS branch chosen by a 3D blockage test between the
//! access point and the receiver antenna. Small-scale Rician fading has unit
//! mean power, so it does not change the expectation; it is still available
//! for sampling.

mod map;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use map::{build_radio_map, parse_radio_csv, read_radio_csv, HeightModel, RadioCell, RadioMap};

use crate::error::{Error, Result};
use crate::geometry::{Point2, Point3};
use crate::rng::rng_from_seed;
use crate::scenario::Scenario;

pub const DEFAULT_ALPHA_BAR: f64 = 10.0;

/// InF-SH path loss in dB for distance `d` (m) and carrier `fc` (GHz).
/// The NLoS branch is never below the LoS value.
pub fn path_loss(d: f64, fc_ghz: f64, los: bool) -> Result<f64> {
    if !(d > 0.0 && d.is_finite()) {
        return Err(Error::InvalidArgument(format!("distance must be positive, got {d}")));
    }
    if !(fc_ghz > 0.0 && fc_ghz.is_finite()) {
        return Err(Error::InvalidArgument(format!("carrier frequency must be positive, got {fc_ghz}")));
    }
    let l_los = 31.84 + 21.5 * d.log10() + 19.0 * fc_ghz.log10();
    if los {
        Ok(l_los)
    } else {
        Ok(l_los.max(32.4 + 23.0 * d.log10() + 20.0 * fc_ghz.log10()))
    }
}

/// True when the open segment between the two points touches any wall or
/// obstacle box. Symmetric in its endpoints.
pub fn los_blocked(scenario: &Scenario, ap: Point3, receiver: Point3) -> bool {
    scenario.boxes().any(|b| b.intersects_open_segment(&ap, &receiver))
}

/// Expected channel power gain (dB) at a receiver antenna above `cell_center`.
pub fn expected_gain(scenario: &Scenario, cell_center: Point2) -> Result<f64> {
    let rx = Point3::new(cell_center.x, cell_center.y, scenario.h_m);
    let ap = scenario.ap_position;
    let los = !los_blocked(scenario, ap, rx);
    Ok(-path_loss(ap.distance(&rx), scenario.fc_ghz, los)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RicianParams {
    /// Rician factor of an unblocked link (linear).
    pub alpha_bar: f64,
}

impl Default for RicianParams {
    fn default() -> Self {
        Self {
            alpha_bar: DEFAULT_ALPHA_BAR,
        }
    }
}

impl RicianParams {
    pub fn new(alpha_bar: f64) -> Result<Self> {
        if !(alpha_bar >= 0.0) {
            return Err(Error::InvalidArgument(format!("Rician factor must be >= 0, got {alpha_bar}")));
        }
        Ok(Self { alpha_bar })
    }

    /// Position-dependent factor: zero when the link is blocked.
    pub fn alpha(&self, blocked: bool) -> f64 {
        if blocked {
            0.0
        } else {
            self.alpha_bar
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelSample {
    pub h: Complex64,
}

impl ChannelSample {
    pub fn power(&self) -> f64 {
        self.h.norm_sqr()
    }
}

/// Deterministic line-of-sight component, unit modulus.
const LOS_PHASE: f64 = std::f64::consts::FRAC_PI_4;

/// Draws `n` independent small-scale fading samples from one seeded stream.
pub fn sample_channels(params: &RicianParams, blocked: bool, n: usize, seed: u64) -> Vec<ChannelSample> {
    let alpha = params.alpha(blocked);
    let los = Complex64::from_polar(1.0, LOS_PHASE) * (alpha / (alpha + 1.0)).sqrt();
    let scatter = (1.0 / (alpha + 1.0)).sqrt() * std::f64::consts::FRAC_1_SQRT_2;
    let mut rng = rng_from_seed(seed);
    (0..n)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            ChannelSample {
                h: los + Complex64::new(re, im) * scatter,
            }
        })
        .collect()
}

pub fn sample_channel(params: &RicianParams, blocked: bool, seed: u64) -> ChannelSample {
    sample_channels(params, blocked, 1, seed)[0]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_loss_examples() {
        assert!((path_loss(1.0, 1.0, true).unwrap() - 31.84).abs() < 1e-12);
        // 31.84 + 21.5 + 19 log10(3.5); 32.4 + 23 + 20 log10(3.5)
        let l = 19.0 * 3.5f64.log10();
        let n = 20.0 * 3.5f64.log10();
        assert!((path_loss(10.0, 3.5, true).unwrap() - (53.34 + l)).abs() < 1e-12);
        assert!((path_loss(10.0, 3.5, false).unwrap() - (55.4 + n)).abs() < 1e-12);
        assert!((path_loss(10.0, 3.5, true).unwrap() - 63.677).abs() < 1e-3);
        assert!((path_loss(10.0, 3.5, false).unwrap() - 66.281).abs() < 1e-3);
        assert!(path_loss(0.0, 3.5, true).is_err());
        assert!(path_loss(1.0, -1.0, true).is_err());
    }

    #[test]
    fn nlos_branch_takes_the_max() {
        // at very short range the NLoS formula drops below LoS
        let d = 0.1;
        let los = path_loss(d, 1.0, true).unwrap();
        assert_eq!(path_loss(d, 1.0, false).unwrap(), los);
    }

    #[test]
    fn gain_below_the_access_point() {
        let s = Scenario::fig2();
        let g = expected_gain(&s, Point2::new(0.0, 3.5)).unwrap();
        // d = 2.2 m
        let expect = -(31.84 + 21.5 * 2.2f64.log10() + 19.0 * 3.5f64.log10());
        assert!((g - expect).abs() < 1e-12);
        assert!((g + 49.539).abs() < 1e-3);
        let nlos = -path_loss(2.2, 3.5, false).unwrap();
        assert!(nlos < g);
    }

    #[test]
    fn symmetric_cells_get_equal_gain() {
        let s = Scenario::fig2();
        for (x, y) in [(4.2, 0.3), (2.0, -2.0), (0.7, 2.2)] {
            let a = expected_gain(&s, Point2::new(x, y)).unwrap();
            let b = expected_gain(&s, Point2::new(-x, y)).unwrap();
            assert!((a - b).abs() < 1e-12, "({x}, {y})");
        }
    }

    #[test]
    fn blockage_examples() {
        let s = Scenario::fig2();
        let ap = s.ap_position;
        assert!(!los_blocked(&s, ap, Point3::new(0.0, 3.0, 0.3)));
        // inside the wall ring, looking through the 1.8 m north wall
        let inside = Point3::new(0.0, 0.0, 0.3);
        assert!(los_blocked(&s, ap, inside));
        assert!(los_blocked(&s, inside, ap));
        // AP-to-receiver segment passing over a 1.5 m obstacle stays above it
        let high_ap = Point3::new(2.0, 3.5, 2.9);
        let rx = Point3::new(2.0, 2.0, 2.0);
        assert!(!los_blocked(&s, high_ap, rx));
    }

    #[test]
    fn channel_sampling_is_deterministic_and_blocked_is_rayleigh() {
        let p = RicianParams::default();
        assert_eq!(sample_channel(&p, false, 3), sample_channel(&p, false, 3));
        assert_ne!(sample_channel(&p, false, 3), sample_channel(&p, false, 4));
        assert_eq!(p.alpha(true), 0.0);
        let strong = RicianParams::new(1e6).unwrap();
        let s = sample_channels(&strong, false, 1000, 1);
        assert!(s.iter().all(|c| (c.power() - 1.0).abs() < 1e-2));
        assert!(RicianParams::new(-1.0).is_err());
    }

    proptest::proptest! {
        #[test]
        fn nlos_never_below_los(d in 0.01f64..200.0, fc in 0.5f64..100.0) {
            proptest::prop_assert!(path_loss(d, fc, false).unwrap() >= path_loss(d, fc, true).unwrap());
        }

        #[test]
        fn blockage_is_symmetric(x0 in -5.0f64..5.0, y0 in -3.5f64..3.5, z0 in 0.0f64..3.0,
                                 x1 in -5.0f64..5.0, y1 in -3.5f64..3.5, z1 in 0.0f64..3.0) {
            let s = Scenario::fig2();
            let (p, q) = (Point3::new(x0, y0, z0), Point3::new(x1, y1, z1));
            proptest::prop_assert_eq!(los_blocked(&s, p, q), los_blocked(&s, q, p));
        }
    }
}
