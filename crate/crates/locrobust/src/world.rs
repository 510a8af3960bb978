//! Shared domain types: classed point landmarks, sensor frames, trajectories.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pose::{Point2, Pose2D};

#[derive(Debug, Error, PartialEq)]
pub enum WorldError {
    #[error("duplicate feature id {0}")]
    DuplicateFeatureId(u32),
    #[error("feature {0} has a non-finite position")]
    NonFinitePosition(u32),
    #[error("trajectory timestamps must be strictly increasing (sample {0})")]
    NonIncreasingTimestamps(usize),
    #[error("trajectory needs at least one sample")]
    EmptyTrajectory,
    #[error("unknown feature class '{0}'")]
    UnknownClass(String),
}

/// Landmark class. Correspondence in the matcher requires class equality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureClass {
    Pole,
    Corner,
}

impl FeatureClass {
    pub const ALL: [FeatureClass; 2] = [FeatureClass::Pole, FeatureClass::Corner];

    pub fn as_str(&self) -> &'static str {
        match self {
            FeatureClass::Pole => "pole",
            FeatureClass::Corner => "corner",
        }
    }
}

impl fmt::Display for FeatureClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureClass {
    type Err = WorldError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pole" => Ok(FeatureClass::Pole),
            "corner" => Ok(FeatureClass::Corner),
            other => Err(WorldError::UnknownClass(other.to_string())),
        }
    }
}

/// One landmark in the prior map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapFeature {
    pub id: u32,
    pub class: FeatureClass,
    pub position: Point2,
}

/// The prior map: classed 2D point landmarks with unique ids.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    features: Vec<MapFeature>,
}

impl FeatureMap {
    pub fn new(features: Vec<MapFeature>) -> Result<Self, WorldError> {
        let mut seen = std::collections::HashSet::new();
        for f in &features {
            if !seen.insert(f.id) {
                return Err(WorldError::DuplicateFeatureId(f.id));
            }
            if !f.position.is_finite() {
                return Err(WorldError::NonFinitePosition(f.id));
            }
        }
        Ok(FeatureMap { features })
    }

    pub fn features(&self) -> &[MapFeature] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn count_class(&self, class: FeatureClass) -> usize {
        self.features.iter().filter(|f| f.class == class).count()
    }

    /// Map restricted to the given classes (ids and order preserved).
    pub fn filtered(&self, classes: &[FeatureClass]) -> FeatureMap {
        FeatureMap {
            features: self
                .features
                .iter()
                .filter(|f| classes.contains(&f.class))
                .copied()
                .collect(),
        }
    }
}

/// One classed point observed in the sensor frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub class: FeatureClass,
    pub point: Point2,
}

/// One sensor observation frame: classed points in the sensor frame,
/// with the simulator's ground-truth pose when available.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFrame {
    pub timestamp: f64,
    pub observations: Vec<Observation>,
    pub true_pose: Option<Pose2D>,
}

impl FeatureFrame {
    /// Frame restricted to the given classes.
    pub fn filtered(&self, classes: &[FeatureClass]) -> FeatureFrame {
        FeatureFrame {
            timestamp: self.timestamp,
            observations: self
                .observations
                .iter()
                .filter(|o| classes.contains(&o.class))
                .copied()
                .collect(),
            true_pose: self.true_pose,
        }
    }
}

/// Map each sensor-frame observation into the global frame by `pose`.
pub fn transform_frame_to_global(pose: &Pose2D, frame: &FeatureFrame) -> Vec<(FeatureClass, Point2)> {
    frame
        .observations
        .iter()
        .map(|o| (o.class, pose.transform_point(&o.point)))
        .collect()
}

/// One trajectory sample: time, pose, and cumulative distance travelled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub timestamp: f64,
    pub pose: Pose2D,
    pub arc_length: f64,
}

/// Time-ordered pose samples with cumulative arc length.
///
/// Arc length is the running sum of Euclidean distances between consecutive
/// positions; heading changes contribute nothing.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    samples: Vec<TrajectorySample>,
}

impl Trajectory {
    /// Build from timed poses, computing cumulative arc length.
    pub fn from_timed_poses(poses: Vec<(f64, Pose2D)>) -> Result<Self, WorldError> {
        if poses.is_empty() {
            return Err(WorldError::EmptyTrajectory);
        }
        let mut samples = Vec::with_capacity(poses.len());
        let mut arc = 0.0;
        for (i, (t, pose)) in poses.iter().enumerate() {
            if i > 0 {
                if *t <= poses[i - 1].0 {
                    return Err(WorldError::NonIncreasingTimestamps(i));
                }
                arc += pose.position_distance(&poses[i - 1].1);
            }
            samples.push(TrajectorySample {
                timestamp: *t,
                pose: *pose,
                arc_length: arc,
            });
        }
        Ok(Trajectory { samples })
    }

    /// Rebuild from stored samples (e.g. read back from a dataset file).
    pub fn from_samples(samples: Vec<TrajectorySample>) -> Result<Self, WorldError> {
        if samples.is_empty() {
            return Err(WorldError::EmptyTrajectory);
        }
        for i in 1..samples.len() {
            if samples[i].timestamp <= samples[i - 1].timestamp {
                return Err(WorldError::NonIncreasingTimestamps(i));
            }
        }
        Ok(Trajectory { samples })
    }

    pub fn samples(&self) -> &[TrajectorySample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn first(&self) -> &TrajectorySample {
        &self.samples[0]
    }

    pub fn last(&self) -> &TrajectorySample {
        &self.samples[self.samples.len() - 1]
    }

    pub fn total_length(&self) -> f64 {
        self.last().arc_length
    }

    /// Cumulative arc length at time `t`, linearly interpolated and clamped
    /// to the trajectory span.
    pub fn arc_at_time(&self, t: f64) -> f64 {
        if t <= self.first().timestamp {
            return self.first().arc_length;
        }
        if t >= self.last().timestamp {
            return self.last().arc_length;
        }
        let idx = self
            .samples
            .partition_point(|s| s.timestamp <= t)
            .min(self.samples.len() - 1);
        let a = &self.samples[idx - 1];
        let b = &self.samples[idx];
        let f = (t - a.timestamp) / (b.timestamp - a.timestamp);
        a.arc_length + f * (b.arc_length - a.arc_length)
    }

    /// Pose at time `t`, interpolating position linearly and heading along
    /// the shortest angular path; clamped to the trajectory span.
    pub fn pose_at_time(&self, t: f64) -> Pose2D {
        if t <= self.first().timestamp {
            return self.first().pose;
        }
        if t >= self.last().timestamp {
            return self.last().pose;
        }
        let idx = self
            .samples
            .partition_point(|s| s.timestamp <= t)
            .min(self.samples.len() - 1);
        let a = &self.samples[idx - 1];
        let b = &self.samples[idx];
        let f = (t - a.timestamp) / (b.timestamp - a.timestamp);
        let dh = b.pose.heading_difference(&a.pose);
        Pose2D::new(
            a.pose.easting + f * (b.pose.easting - a.pose.easting),
            a.pose.northing + f * (b.pose.northing - a.pose.northing),
            a.pose.heading + f * dh,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn map_rejects_duplicate_ids() {
        let f = |id| MapFeature {
            id,
            class: FeatureClass::Pole,
            position: Point2::new(0.0, 0.0),
        };
        let err = FeatureMap::new(vec![f(1), f(1)]).unwrap_err();
        assert_eq!(err, WorldError::DuplicateFeatureId(1));
    }

    #[test]
    fn map_rejects_non_finite() {
        let features = vec![MapFeature {
            id: 7,
            class: FeatureClass::Corner,
            position: Point2::new(f64::NAN, 0.0),
        }];
        assert_eq!(
            FeatureMap::new(features).unwrap_err(),
            WorldError::NonFinitePosition(7)
        );
    }

    #[test]
    fn trajectory_rejects_non_increasing_time() {
        let p = Pose2D::identity();
        let err = Trajectory::from_timed_poses(vec![(0.0, p), (0.0, p)]).unwrap_err();
        assert_eq!(err, WorldError::NonIncreasingTimestamps(1));
    }

    #[test]
    fn class_filter_keeps_order() {
        let mk = |id, class, x| MapFeature {
            id,
            class,
            position: Point2::new(x, 0.0),
        };
        let map = FeatureMap::new(vec![
            mk(0, FeatureClass::Pole, 0.0),
            mk(1, FeatureClass::Corner, 1.0),
            mk(2, FeatureClass::Pole, 2.0),
        ])
        .unwrap();
        let poles = map.filtered(&[FeatureClass::Pole]);
        assert_eq!(poles.features().iter().map(|f| f.id).collect::<Vec<_>>(), vec![0, 2]);
    }

    proptest! {
        // Arc length must equal the sum of consecutive segment lengths,
        // positions only.
        #[test]
        fn arc_length_is_segment_sum(points in prop::collection::vec((-50.0..50.0f64, -50.0..50.0f64, -3.0..3.0f64), 1..20)) {
            let timed: Vec<(f64, Pose2D)> = points
                .iter()
                .enumerate()
                .map(|(i, (x, y, h))| (i as f64, Pose2D::new(*x, *y, *h)))
                .collect();
            let traj = Trajectory::from_timed_poses(timed.clone()).unwrap();
            let mut expected = 0.0;
            for w in timed.windows(2) {
                expected += w[1].1.position_distance(&w[0].1);
            }
            prop_assert!((traj.total_length() - expected).abs() < 1e-9);
            prop_assert_eq!(traj.first().arc_length, 0.0);
            for w in traj.samples().windows(2) {
                prop_assert!(w[1].arc_length >= w[0].arc_length);
            }
        }
    }
}
