//! Canned worlds and sensor rigs used by the evaluation pipeline and the
//! test suites.
//!
//! `quad`: a 470 m rectangular loop with dense landmarks except for one
//! 50 m zero-density stretch (plus short sparse shoulders around it, so the
//! desert is not fed by neighbours at the sensor's range). One GPS dropout
//! zone sits on the far side of the loop.
//!
//! `rich`: the same loop uniformly populated, poles deliberately sparser
//! than in `quad` so pole-only matching has visible gaps while pole+corner
//! matching stays comfortable.

use crate::matcher::IcpConfig;
use crate::sim::{FeatureZone, GpsSpec, LidarSpec, OdometrySpec, RouteSpec, SensorSpec, WorldSpec};

pub const QUAD_SEED: u64 = 42;
pub const RICH_SEED: u64 = 7;

/// Rectangle (150 m x 85 m): a 470 m closed loop.
fn loop_route() -> RouteSpec {
    RouteSpec {
        points: vec![(0.0, 0.0), (150.0, 0.0), (150.0, 85.0), (0.0, 85.0)],
        closed: true,
    }
}

pub fn quad_world(seed: u64) -> WorldSpec {
    WorldSpec {
        zones: vec![
            FeatureZone {
                interval: (0.0, 140.0),
                poles_per_100m: 45.0,
                corners_per_100m: 22.0,
            },
            FeatureZone {
                interval: (140.0, 150.0),
                poles_per_100m: 2.0,
                corners_per_100m: 1.0,
            },
            // the feature desert
            FeatureZone {
                interval: (150.0, 200.0),
                poles_per_100m: 0.0,
                corners_per_100m: 0.0,
            },
            FeatureZone {
                interval: (200.0, 210.0),
                poles_per_100m: 2.0,
                corners_per_100m: 1.0,
            },
            FeatureZone {
                interval: (210.0, 470.0),
                poles_per_100m: 45.0,
                corners_per_100m: 22.0,
            },
        ],
        route: loop_route(),
        gps_dropout_zones: vec![(300.0, 340.0)],
        seed,
    }
}

pub fn quad_sensors() -> SensorSpec {
    SensorSpec {
        lidar: LidarSpec {
            max_range: 15.0,
            fov: std::f64::consts::TAU,
            detection_probability: 0.95,
            position_sigma: 0.05,
            clutter_rate: 0.0,
            period: 0.5,
        },
        gps: GpsSpec {
            sigma: 2.0,
            period: 1.0,
            speed_threshold: 0.5,
        },
        odometry: OdometrySpec {
            velocity_sigma: 0.04,
            yaw_rate_sigma: 0.006,
            yaw_rate_bias: 0.002,
            period: 0.1,
        },
    }
}

/// Matcher settings for the preset worlds. Four inliers instead of the
/// default three: with landmarks this dense a couple of stragglers at the
/// desert rim should not count as a usable match.
pub fn preset_icp() -> IcpConfig {
    IcpConfig {
        min_inliers: 4,
        ..IcpConfig::default()
    }
}

pub fn rich_world(seed: u64) -> WorldSpec {
    WorldSpec {
        zones: vec![FeatureZone {
            interval: (0.0, 470.0),
            poles_per_100m: 12.0,
            corners_per_100m: 10.0,
        }],
        route: loop_route(),
        gps_dropout_zones: vec![],
        seed,
    }
}

pub fn rich_sensors() -> SensorSpec {
    SensorSpec {
        lidar: LidarSpec {
            clutter_rate: 0.5,
            ..quad_sensors().lidar
        },
        ..quad_sensors()
    }
}

pub const PRESET_SPEED: f64 = 2.0;
