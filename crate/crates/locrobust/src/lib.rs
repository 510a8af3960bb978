//! Localisation robustness toolkit: a deterministic 2D scenario simulator,
//! a class-constrained point-ICP matcher, an unscented Kalman filter over
//! (Easting, Northing, Heading), and the two robustness metrics computed on
//! top of them — valid prior threshold boundaries and probability of
//! absence of updates curves.

pub mod cli;
pub mod filter;
pub mod io;
pub mod manifest;
pub mod matcher;
pub mod metrics;
pub mod oracle;
pub mod plot;
pub mod pose;
pub mod presets;
pub mod sim;
pub mod world;

pub use pose::{wrap_angle, Point2, Pose2D};
pub use world::{FeatureClass, FeatureFrame, FeatureMap, MapFeature, Observation, Trajectory};
