//! Deterministic synthetic worlds and sensor streams.
//!
//! A world is a feature map placed along a route polyline; a run traverses
//! the route at constant speed and emits odometry increments, GPS-like
//! fixes and lidar feature frames, all driven by one seeded RNG so that a
//! fixed (spec, seed) reproduces the dataset byte for byte. Generation is
//! single-threaded to keep the draw order stable.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pose::{wrap_angle, Point2, Pose2D};
use crate::world::{
    FeatureClass, FeatureFrame, FeatureMap, MapFeature, Observation, Trajectory, WorldError,
};

/// Features are strewn 2-15 m to the side of the route.
pub const LATERAL_OFFSET_RANGE: (f64, f64) = (2.0, 15.0);

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid world spec: {0}")]
    InvalidWorldSpec(String),
    #[error("invalid sensor spec: {0}")]
    InvalidSensorSpec(String),
    #[error("route must contain at least two distinct points")]
    EmptyRoute,
    #[error("speed must be positive, got {0}")]
    InvalidSpeed(f64),
    #[error("{0} period must be an integer multiple of the odometry period")]
    IncompatiblePeriods(&'static str),
    #[error(transparent)]
    World(#[from] WorldError),
}

/// One arc-length interval of the route with its landmark densities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureZone {
    /// Arc-length interval along the route, meters, start <= end.
    pub interval: (f64, f64),
    pub poles_per_100m: f64,
    pub corners_per_100m: f64,
}

/// Route polyline. A closed route gets the segment back to the first point
/// appended automatically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteSpec {
    pub points: Vec<(f64, f64)>,
    pub closed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSpec {
    pub zones: Vec<FeatureZone>,
    pub route: RouteSpec,
    /// Arc-length intervals where GPS fixes are suppressed.
    pub gps_dropout_zones: Vec<(f64, f64)>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LidarSpec {
    pub max_range: f64,
    /// Full field-of-view angle, radians.
    pub fov: f64,
    pub detection_probability: f64,
    pub position_sigma: f64,
    /// Mean false detections per frame (Poisson).
    pub clutter_rate: f64,
    pub period: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpsSpec {
    pub sigma: f64,
    pub period: f64,
    /// Minimum speed for a GPS pair to yield a usable heading, m/s.
    pub speed_threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdometrySpec {
    /// Noise on the measured velocity, m/s (1 sigma).
    pub velocity_sigma: f64,
    /// Noise on the measured yaw rate, rad/s (1 sigma).
    pub yaw_rate_sigma: f64,
    /// Constant yaw-rate bias for the whole run, rad/s.
    pub yaw_rate_bias: f64,
    pub period: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorSpec {
    pub lidar: LidarSpec,
    pub gps: GpsSpec,
    pub odometry: OdometrySpec,
}

/// One odometry increment: distance travelled and heading change since the
/// previous tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdomSample {
    pub timestamp: f64,
    pub delta_distance: f64,
    pub delta_heading: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpsFix {
    pub timestamp: f64,
    pub easting: f64,
    pub northing: f64,
    pub sigma: f64,
}

/// Everything one simulated run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub ground_truth: Trajectory,
    pub odometry: Vec<OdomSample>,
    pub gps: Vec<GpsFix>,
    pub frames: Vec<FeatureFrame>,
}

impl WorldSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        let length = Polyline::new(&self.route)?.length();
        for (i, z) in self.zones.iter().enumerate() {
            if z.poles_per_100m < 0.0 || z.corners_per_100m < 0.0 {
                return Err(SimError::InvalidWorldSpec(format!(
                    "zone {i} has a negative density"
                )));
            }
            if z.interval.0 > z.interval.1 || z.interval.0 < 0.0 || z.interval.1 > length + 1e-9 {
                return Err(SimError::InvalidWorldSpec(format!(
                    "zone {i} interval {:?} outside route [0, {length:.3}]",
                    z.interval
                )));
            }
        }
        for (i, z) in self.gps_dropout_zones.iter().enumerate() {
            if z.0 > z.1 || z.0 < 0.0 || z.1 > length + 1e-9 {
                return Err(SimError::InvalidWorldSpec(format!(
                    "dropout zone {i} {z:?} outside route [0, {length:.3}]"
                )));
            }
        }
        Ok(())
    }
}

impl SensorSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: &str| Err(SimError::InvalidSensorSpec(msg.to_string()));
        if self.lidar.max_range <= 0.0 || self.lidar.fov <= 0.0 {
            return bad("lidar range and fov must be positive");
        }
        if !(0.0..=1.0).contains(&self.lidar.detection_probability) {
            return bad("detection_probability must be in [0, 1]");
        }
        if self.lidar.position_sigma < 0.0
            || self.lidar.clutter_rate < 0.0
            || self.gps.sigma < 0.0
            || self.odometry.velocity_sigma < 0.0
            || self.odometry.yaw_rate_sigma < 0.0
        {
            return bad("noise parameters must be non-negative");
        }
        if self.lidar.period <= 0.0 || self.gps.period <= 0.0 || self.odometry.period <= 0.0 {
            return bad("periods must be positive");
        }
        Ok(())
    }
}

/// Route polyline with cumulative arc lengths, for arc-parameterised lookup.
#[derive(Debug, Clone)]
pub struct Polyline {
    points: Vec<Point2>,
    cumulative: Vec<f64>,
}

impl Polyline {
    pub fn new(route: &RouteSpec) -> Result<Self, SimError> {
        let mut points: Vec<Point2> = route.points.iter().map(|&(x, y)| Point2::new(x, y)).collect();
        if route.closed {
            if let (Some(first), Some(last)) = (points.first().copied(), points.last()) {
                if first.distance(last) > 1e-12 {
                    points.push(first);
                }
            }
        }
        if points.len() < 2 {
            return Err(SimError::EmptyRoute);
        }
        let mut cumulative = Vec::with_capacity(points.len());
        cumulative.push(0.0);
        for i in 1..points.len() {
            let d = points[i].distance(&points[i - 1]);
            cumulative.push(cumulative[i - 1] + d);
        }
        if *cumulative.last().unwrap() <= 0.0 {
            return Err(SimError::EmptyRoute);
        }
        Ok(Polyline { points, cumulative })
    }

    pub fn from_trajectory(traj: &Trajectory) -> Result<Self, SimError> {
        let points = RouteSpec {
            points: traj
                .samples()
                .iter()
                .map(|s| (s.pose.easting, s.pose.northing))
                .collect(),
            closed: false,
        };
        Polyline::new(&points)
    }

    pub fn length(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    /// Index of the segment containing arc `s` (forward-looking at vertices).
    fn segment_of(&self, s: f64) -> usize {
        if s <= 0.0 {
            return 0;
        }
        if s >= self.length() {
            return self.points.len() - 2;
        }
        self.cumulative.partition_point(|&c| c <= s).min(self.points.len() - 1) - 1
    }

    pub fn point_at(&self, s: f64) -> Point2 {
        let s = s.clamp(0.0, self.length());
        let i = self.segment_of(s);
        let seg_len = self.cumulative[i + 1] - self.cumulative[i];
        let f = if seg_len > 0.0 {
            (s - self.cumulative[i]) / seg_len
        } else {
            0.0
        };
        let a = self.points[i];
        let b = self.points[i + 1];
        Point2::new(a.x + f * (b.x - a.x), a.y + f * (b.y - a.y))
    }

    /// Heading of the segment containing arc `s` (piecewise constant).
    pub fn heading_at(&self, s: f64) -> f64 {
        let i = self.segment_of(s.clamp(0.0, self.length()));
        let a = self.points[i];
        let b = self.points[i + 1];
        (b.y - a.y).atan2(b.x - a.x)
    }

    /// Arc length of the point on the polyline nearest to `p`.
    pub fn nearest_arc(&self, p: &Point2) -> f64 {
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..self.points.len() - 1 {
            let a = self.points[i];
            let b = self.points[i + 1];
            let abx = b.x - a.x;
            let aby = b.y - a.y;
            let len2 = abx * abx + aby * aby;
            let t = if len2 > 0.0 {
                (((p.x - a.x) * abx + (p.y - a.y) * aby) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let q = Point2::new(a.x + t * abx, a.y + t * aby);
            let d = p.distance(&q);
            if d < best.0 {
                best = (d, self.cumulative[i] + t * len2.sqrt());
            }
        }
        best.1
    }
}

fn poisson_count(rng: &mut ChaCha12Rng, lambda: f64) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    let dist = Poisson::new(lambda).expect("positive lambda");
    dist.sample(rng) as u64
}

fn normal(rng: &mut ChaCha12Rng, sigma: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    z * sigma
}

/// Generate the landmark map and route trajectory for `spec`.
///
/// Feature counts per zone are Poisson draws at the requested densities;
/// each feature sits at a uniform arc position inside its zone, offset
/// laterally 2-15 m to a random side of the route. Deterministic for a
/// fixed spec.
pub fn generate_world(spec: &WorldSpec) -> Result<(FeatureMap, Trajectory), SimError> {
    spec.validate()?;
    let line = Polyline::new(&spec.route)?;
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);

    let mut features = Vec::new();
    let mut next_id = 0u32;
    for zone in &spec.zones {
        let zone_len = zone.interval.1 - zone.interval.0;
        for (class, per_100m) in [
            (FeatureClass::Pole, zone.poles_per_100m),
            (FeatureClass::Corner, zone.corners_per_100m),
        ] {
            let count = poisson_count(&mut rng, per_100m * zone_len / 100.0);
            for _ in 0..count {
                let s = zone.interval.0 + rng.random::<f64>() * zone_len;
                let lateral = LATERAL_OFFSET_RANGE.0
                    + rng.random::<f64>() * (LATERAL_OFFSET_RANGE.1 - LATERAL_OFFSET_RANGE.0);
                let side = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let at = line.point_at(s);
                let heading = line.heading_at(s);
                let position = Point2::new(
                    at.x - heading.sin() * lateral * side,
                    at.y + heading.cos() * lateral * side,
                );
                features.push(MapFeature {
                    id: next_id,
                    class,
                    position,
                });
                next_id += 1;
            }
        }
    }

    let route_samples: Vec<(f64, Pose2D)> = line
        .cumulative
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            // Dummy 1 m/s parameterisation; simulate_run applies real speed.
            let t = s;
            (t, Pose2D::new(line.points[i].x, line.points[i].y, line.heading_at(s)))
        })
        .collect();
    // Collapse zero-length duplicate vertices so timestamps stay strict.
    let mut deduped: Vec<(f64, Pose2D)> = Vec::with_capacity(route_samples.len());
    for s in route_samples {
        if deduped.last().map_or(true, |l| s.0 > l.0) {
            deduped.push(s);
        }
    }
    let route = Trajectory::from_timed_poses(deduped)?;
    Ok((FeatureMap::new(features)?, route))
}

fn in_zones(zones: &[(f64, f64)], s: f64) -> bool {
    zones.iter().any(|&(a, b)| s >= a && s < b)
}

fn period_multiple(period: f64, base: f64, what: &'static str) -> Result<u64, SimError> {
    let ratio = period / base;
    let rounded = ratio.round();
    if rounded < 1.0 || (ratio - rounded).abs() > 1e-9 {
        return Err(SimError::IncompatiblePeriods(what));
    }
    Ok(rounded as u64)
}

/// Traverse `route` at constant `speed`, producing ground truth plus noisy
/// odometry, GPS and lidar streams. GPS fixes are suppressed while the
/// cumulative arc length sits inside any of `gps_dropout_zones`.
///
/// Ground truth is the midpoint-model integration of the ideal per-tick
/// increments, so noise-free odometry re-integrates to it exactly. GPS and
/// lidar periods must be integer multiples of the odometry period so every
/// emission falls on a truth sample.
pub fn simulate_run(
    map: &FeatureMap,
    route: &Trajectory,
    sensors: &SensorSpec,
    speed: f64,
    seed: u64,
    gps_dropout_zones: &[(f64, f64)],
) -> Result<Dataset, SimError> {
    if speed <= 0.0 {
        return Err(SimError::InvalidSpeed(speed));
    }
    sensors.validate()?;
    let line = Polyline::from_trajectory(route)?;
    let length = line.length();
    let dt = sensors.odometry.period;
    let gps_every = period_multiple(sensors.gps.period, dt, "gps")?;
    let lidar_every = period_multiple(sensors.lidar.period, dt, "lidar")?;

    let mut rng = ChaCha12Rng::seed_from_u64(seed);

    let start = Pose2D::new(line.point_at(0.0).x, line.point_at(0.0).y, line.heading_at(0.0));

    // Ideal increments along the route, then truth by midpoint integration.
    let mut truth_poses: Vec<(f64, Pose2D)> = vec![(0.0, start)];
    let mut arcs: Vec<f64> = vec![0.0];
    let mut odometry = Vec::new();
    let mut pose = start;
    let mut s_prev = 0.0;
    let mut prev_heading = line.heading_at(0.0);
    let mut k = 0u64;
    while s_prev < length {
        k += 1;
        let t = k as f64 * dt;
        let s = (speed * t).min(length);
        let delta_d = s - s_prev;
        let route_heading = line.heading_at(s);
        let delta_h = wrap_angle(route_heading - prev_heading);
        pose = pose.advance(delta_d, delta_h);
        truth_poses.push((t, pose));
        arcs.push(s);

        let noisy_d = delta_d + normal(&mut rng, sensors.odometry.velocity_sigma) * dt;
        let noisy_h = delta_h
            + (sensors.odometry.yaw_rate_bias + normal(&mut rng, sensors.odometry.yaw_rate_sigma))
                * dt;
        odometry.push(OdomSample {
            timestamp: t,
            delta_distance: noisy_d,
            delta_heading: noisy_h,
        });

        s_prev = s;
        prev_heading = route_heading;
    }

    let n_ticks = k;
    let mut gps = Vec::new();
    let mut frames = Vec::new();
    for tick in 0..=n_ticks {
        let (t, truth) = truth_poses[tick as usize];
        let s = arcs[tick as usize];

        if tick % gps_every == 0 && !in_zones(gps_dropout_zones, s) {
            gps.push(GpsFix {
                timestamp: t,
                easting: truth.easting + normal(&mut rng, sensors.gps.sigma),
                northing: truth.northing + normal(&mut rng, sensors.gps.sigma),
                sigma: sensors.gps.sigma,
            });
        }

        if tick % lidar_every == 0 {
            let mut observations = Vec::new();
            for f in map.features() {
                let local = truth.inverse_transform_point(&f.position);
                let range = local.norm();
                let bearing = local.y.atan2(local.x);
                if range > sensors.lidar.max_range || bearing.abs() > sensors.lidar.fov / 2.0 {
                    continue;
                }
                let u: f64 = rng.random();
                if u < sensors.lidar.detection_probability {
                    observations.push(Observation {
                        class: f.class,
                        point: Point2::new(
                            local.x + normal(&mut rng, sensors.lidar.position_sigma),
                            local.y + normal(&mut rng, sensors.lidar.position_sigma),
                        ),
                    });
                }
            }
            let clutter = poisson_count(&mut rng, sensors.lidar.clutter_rate);
            for _ in 0..clutter {
                let r = sensors.lidar.max_range * rng.random::<f64>().sqrt();
                let b = (rng.random::<f64>() - 0.5) * sensors.lidar.fov;
                let class = if rng.random::<bool>() {
                    FeatureClass::Pole
                } else {
                    FeatureClass::Corner
                };
                observations.push(Observation {
                    class,
                    point: Point2::new(r * b.cos(), r * b.sin()),
                });
            }
            frames.push(FeatureFrame {
                timestamp: t,
                observations,
                true_pose: Some(truth),
            });
        }
    }

    Ok(Dataset {
        ground_truth: Trajectory::from_timed_poses(truth_poses)?,
        odometry,
        gps,
        frames,
    })
}
