//! Class-constrained 2D point ICP against a landmark map, seeded by a pose
//! prior.
//!
//! Correspondence is frame-to-map nearest neighbour, one-directional, class
//! constrained (pole to pole, corner to corner), gated by distance.
//! Duplicates are allowed within one iteration. Nearest-neighbour search is
//! an exact linear scan so that results are deterministic.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pose::{Point2, Pose2D};
use crate::world::{FeatureFrame, FeatureMap};

#[derive(Debug, Error, PartialEq)]
pub enum MatcherError {
    #[error("rigid alignment needs at least 2 correspondences, got {0}")]
    TooFewCorrespondences(usize),
    #[error("rotation unobservable: all frame points coincide")]
    DegenerateGeometry,
    #[error("invalid ICP config: {0}")]
    InvalidConfig(&'static str),
}

/// ICP tuning. The defaults are deliberate choices, not derived values:
/// gate 3 m, 50 iterations, convergence at (1e-4 m, 1e-5 rad), at least
/// 3 inliers, and 0.5 m RMS to call a match valid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcpConfig {
    /// Max nearest-neighbour distance for a correspondence (m).
    pub correspondence_gate: f64,
    pub max_iterations: usize,
    /// Per-iteration update below (m, rad) stops the iteration.
    pub convergence_tol: (f64, f64),
    /// Minimum correspondences for a valid match.
    pub min_inliers: usize,
    /// Maximum RMS residual (m) for a valid match.
    pub max_rms: f64,
}

impl Default for IcpConfig {
    fn default() -> Self {
        IcpConfig {
            correspondence_gate: 3.0,
            max_iterations: 50,
            convergence_tol: (1e-4, 1e-5),
            min_inliers: 3,
            max_rms: 0.5,
        }
    }
}

impl IcpConfig {
    pub fn validate(&self) -> Result<(), MatcherError> {
        if !(self.correspondence_gate > 0.0) {
            return Err(MatcherError::InvalidConfig("correspondence_gate must be > 0"));
        }
        if self.max_iterations < 1 {
            return Err(MatcherError::InvalidConfig("max_iterations must be >= 1"));
        }
        if self.min_inliers < 2 {
            return Err(MatcherError::InvalidConfig("min_inliers must be >= 2"));
        }
        Ok(())
    }
}

/// ICP outcome. `converged` is the validity verdict: the iteration settled
/// AND the inlier/RMS gates passed. A wrong-but-confident pose can still
/// report `converged = true`; judging it against ground truth is the VPT
/// metric's job, not the matcher's.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchResult {
    pub converged: bool,
    pub pose: Pose2D,
    pub rms: f64,
    pub inlier_count: usize,
    pub iterations: usize,
}

/// Per-iteration diagnostics: which observation matched which feature id,
/// and the correspondence SSE before/after the rigid update.
#[derive(Debug, Clone, PartialEq)]
pub struct IcpIterationTrace {
    pub correspondences: Vec<(usize, u32)>,
    pub sse_before: f64,
    pub sse_after: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IcpTrace {
    pub iterations: Vec<IcpIterationTrace>,
}

/// Closed-form least-squares rigid registration of paired points.
///
/// Returns the transform T minimising sum |T(p) - q|^2 over pairs (p, q),
/// via centroids and the aggregate cross/dot angle.
pub fn rigid_align(pairs: &[(Point2, Point2)]) -> Result<Pose2D, MatcherError> {
    if pairs.len() < 2 {
        return Err(MatcherError::TooFewCorrespondences(pairs.len()));
    }
    let n = pairs.len() as f64;
    let mut pc = Point2::new(0.0, 0.0);
    let mut qc = Point2::new(0.0, 0.0);
    for (p, q) in pairs {
        pc.x += p.x;
        pc.y += p.y;
        qc.x += q.x;
        qc.y += q.y;
    }
    pc.x /= n;
    pc.y /= n;
    qc.x /= n;
    qc.y /= n;

    let spread = pairs
        .iter()
        .map(|(p, _)| p.distance(&pc))
        .fold(0.0, f64::max);
    if spread < 1e-12 {
        return Err(MatcherError::DegenerateGeometry);
    }

    let mut dot = 0.0;
    let mut cross = 0.0;
    for (p, q) in pairs {
        let px = p.x - pc.x;
        let py = p.y - pc.y;
        let qx = q.x - qc.x;
        let qy = q.y - qc.y;
        dot += px * qx + py * qy;
        cross += px * qy - py * qx;
    }
    let theta = cross.atan2(dot);
    let (s, c) = theta.sin_cos();
    Ok(Pose2D::new(
        qc.x - (c * pc.x - s * pc.y),
        qc.y - (s * pc.x + c * pc.y),
        theta,
    ))
}

/// Nearest same-class map feature within the gate, by exact linear scan.
/// Ties break to the lowest feature index, keeping results deterministic.
fn nearest_in_gate(map: &FeatureMap, class: crate::world::FeatureClass, p: &Point2, gate: f64) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (idx, f) in map.features().iter().enumerate() {
        if f.class != class {
            continue;
        }
        let d = f.position.distance(p);
        if d <= gate && best.map_or(true, |(_, bd)| d < bd) {
            best = Some((idx, d));
        }
    }
    best
}

/// Align `frame` to `map` starting from `prior`. Failures are encoded in
/// the result (`converged = false`), never as panics or errors.
pub fn icp_match(prior: &Pose2D, frame: &FeatureFrame, map: &FeatureMap, cfg: &IcpConfig) -> MatchResult {
    icp_match_traced(prior, frame, map, cfg).0
}

/// Like [`icp_match`] but also returns per-iteration diagnostics.
pub fn icp_match_traced(
    prior: &Pose2D,
    frame: &FeatureFrame,
    map: &FeatureMap,
    cfg: &IcpConfig,
) -> (MatchResult, IcpTrace) {
    cfg.validate().expect("invalid ICP config");

    let mut trace = IcpTrace::default();
    let mut result = MatchResult {
        converged: false,
        pose: *prior,
        rms: f64::INFINITY,
        inlier_count: 0,
        iterations: 0,
    };
    if frame.observations.is_empty() {
        return (result, trace);
    }

    let mut pose = *prior;
    let mut settled = false;

    for _ in 0..cfg.max_iterations {
        // (a) project the frame through the current estimate
        let globals: Vec<Point2> = frame
            .observations
            .iter()
            .map(|o| pose.transform_point(&o.point))
            .collect();

        // (b) gated class-constrained nearest neighbours
        let mut pairs: Vec<(Point2, Point2)> = Vec::new();
        let mut ids: Vec<(usize, u32)> = Vec::new();
        let mut sse_before = 0.0;
        for (obs_idx, (obs, g)) in frame.observations.iter().zip(&globals).enumerate() {
            if let Some((feat_idx, d)) = nearest_in_gate(map, obs.class, g, cfg.correspondence_gate) {
                let feat = &map.features()[feat_idx];
                pairs.push((*g, feat.position));
                ids.push((obs_idx, feat.id));
                sse_before += d * d;
            }
        }

        result.inlier_count = pairs.len();
        if pairs.len() < 2 {
            result.rms = f64::INFINITY;
            break;
        }

        // (c) closed-form rigid update
        let delta = match rigid_align(&pairs) {
            Ok(d) => d,
            Err(_) => break,
        };
        pose = delta.compose(&pose);

        let mut sse_after = 0.0;
        for (p, q) in &pairs {
            let moved = delta.transform_point(p);
            sse_after += moved.distance(q).powi(2);
        }

        result.iterations += 1;
        result.rms = (sse_after / pairs.len() as f64).sqrt();
        trace.iterations.push(IcpIterationTrace {
            correspondences: ids,
            sse_before,
            sse_after,
        });

        let shift = delta.position().norm();
        if shift < cfg.convergence_tol.0 && delta.heading.abs() < cfg.convergence_tol.1 {
            settled = true;
            break;
        }
    }

    result.pose = pose;
    result.converged =
        settled && result.inlier_count >= cfg.min_inliers && result.rms <= cfg.max_rms;
    (result, trace)
}
