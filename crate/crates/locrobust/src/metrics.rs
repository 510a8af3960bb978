//! Localisation robustness metrics.
//!
//! Valid prior threshold (VPT): perturb the pose prior on a lattice of
//! (dx, dy, dtheta) offsets around the true pose at one map location and
//! record where matching still recovers the truth. The boundary's size is
//! summarised as sqrt(valid area) at a chosen heading slice.
//!
//! Probability of absence of updates (PAU): slide windows of length l along
//! the trajectory and count the fraction that contain no accepted global
//! update. One shared start set serves every l, which makes the curve
//! non-increasing in l by construction.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matcher::{icp_match, IcpConfig};
use crate::pose::Pose2D;
use crate::world::{FeatureFrame, FeatureMap};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("invalid VPT grid: {0}")]
    InvalidGrid(&'static str),
    #[error("theta slice {0} is not aligned to the lattice heading step")]
    MisalignedThetaSlice(f64),
    #[error("frame at arc {0:.3} carries no true pose")]
    MissingTruePose(f64),
    #[error("profile frames must be ordered by arc length")]
    UnorderedFrames,
    #[error("invalid PAU request: {0}")]
    InvalidPauRequest(String),
    #[error("PAU window start set is empty: trajectory {traj:.3} m shorter than max length {max_len:.3} m")]
    EmptyStartSet { traj: f64, max_len: f64 },
    #[error("PAU curves are on different length grids")]
    MismatchedGrids,
    #[error("curve needs at least two points for an area")]
    TooFewPoints,
    #[error("margin series do not overlap in arc length")]
    EmptyOverlap,
}

/// Search lattice over prior perturbations: +/-extent at the given step in
/// each axis, heading likewise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VptGridSpec {
    pub xy_step: f64,
    pub xy_extent: f64,
    pub heading_step: f64,
    pub heading_extent: f64,
}

impl VptGridSpec {
    /// The grid used in the evaluation runs: 1 m steps, 0.1 rad heading
    /// steps.
    pub fn survey_default() -> Self {
        VptGridSpec {
            xy_step: 1.0,
            xy_extent: 8.0,
            heading_step: 0.1,
            heading_extent: 0.3,
        }
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        if !(self.xy_step > 0.0 && self.heading_step > 0.0) {
            return Err(MetricsError::InvalidGrid("steps must be positive"));
        }
        if self.xy_extent < self.xy_step || self.heading_extent < self.heading_step {
            return Err(MetricsError::InvalidGrid("extents must be at least one step"));
        }
        Ok(())
    }

    /// Offsets per positive axis direction (lattice spans -n..=n).
    pub fn n_xy(&self) -> i32 {
        (self.xy_extent / self.xy_step + 1e-9).floor() as i32
    }

    pub fn n_heading(&self) -> i32 {
        (self.heading_extent / self.heading_step + 1e-9).floor() as i32
    }
}

/// Pose recovery tolerance for a lattice cell to count as valid: the match
/// must land within this distance and heading of the truth, so confidently
/// wrong matches are counted as failures rather than successes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidityTol {
    pub position: f64,
    pub heading: f64,
}

impl Default for ValidityTol {
    fn default() -> Self {
        ValidityTol {
            position: 0.5,
            heading: 0.05,
        }
    }
}

/// Validity lattice at one map location.
#[derive(Debug, Clone, PartialEq)]
pub struct VptBoundary {
    pub arc_length: f64,
    pub true_pose: Pose2D,
    pub grid: VptGridSpec,
    valid: Vec<bool>,
}

impl VptBoundary {
    fn index(&self, ix: i32, iy: i32, ih: i32) -> usize {
        let nx = self.grid.n_xy();
        let nh = self.grid.n_heading();
        let sx = (ix + nx) as usize;
        let sy = (iy + nx) as usize;
        let sh = (ih + nh) as usize;
        (sx * (2 * nx as usize + 1) + sy) * (2 * nh as usize + 1) + sh
    }

    pub fn is_valid(&self, ix: i32, iy: i32, ih: i32) -> bool {
        self.valid[self.index(ix, iy, ih)]
    }

    /// Whether matching succeeded with the exact true pose as prior. A
    /// frame with enough features is expected valid here; callers should
    /// surface a violation rather than ignore it.
    pub fn zero_offset_valid(&self) -> bool {
        self.is_valid(0, 0, 0)
    }

    pub fn cells(&self) -> impl Iterator<Item = (i32, i32, i32, bool)> + '_ {
        let nx = self.grid.n_xy();
        let nh = self.grid.n_heading();
        (-nx..=nx).flat_map(move |ix| {
            (-nx..=nx).flat_map(move |iy| {
                (-nh..=nh).map(move |ih| (ix, iy, ih, self.is_valid(ix, iy, ih)))
            })
        })
    }
}

/// Evaluate the validity lattice for one frame: each cell perturbs the true
/// pose by the cell offset, runs the matcher from that prior, and checks
/// the recovered pose against the truth. Cells are independent and run in
/// parallel; assembly order is fixed by index, so results are deterministic
/// regardless of thread count.
pub fn vpt_evaluate(
    frame: &FeatureFrame,
    map: &FeatureMap,
    true_pose: &Pose2D,
    grid: &VptGridSpec,
    icp_cfg: &IcpConfig,
    tol: &ValidityTol,
) -> Result<VptBoundary, MetricsError> {
    grid.validate()?;
    let nx = grid.n_xy();
    let nh = grid.n_heading();
    let offsets: Vec<(i32, i32, i32)> = (-nx..=nx)
        .flat_map(|ix| (-nx..=nx).flat_map(move |iy| (-nh..=nh).map(move |ih| (ix, iy, ih))))
        .collect();

    let valid: Vec<bool> = offsets
        .par_iter()
        .map(|&(ix, iy, ih)| {
            let prior = Pose2D::new(
                true_pose.easting + ix as f64 * grid.xy_step,
                true_pose.northing + iy as f64 * grid.xy_step,
                true_pose.heading + ih as f64 * grid.heading_step,
            );
            let result = icp_match(&prior, frame, map, icp_cfg);
            result.converged
                && result.pose.position_distance(true_pose) <= tol.position
                && result.pose.heading_difference(true_pose).abs() <= tol.heading
        })
        .collect();

    Ok(VptBoundary {
        arc_length: 0.0,
        true_pose: *true_pose,
        grid: *grid,
        valid,
    })
}

/// How heading offsets combine when collapsing the lattice to an (x, y)
/// area: a cell counts only if valid at every heading within the slice
/// (conservative), or at any of them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadingRule {
    AllWithinSlice,
    AnyWithinSlice,
}

/// Boundary radius at a heading slice: sqrt of the valid (x, y) area, where
/// a cell is valid per [`HeadingRule::AllWithinSlice`]. Zero when nothing
/// matches.
pub fn vpt_radius(boundary: &VptBoundary, theta_slice: f64) -> Result<f64, MetricsError> {
    vpt_radius_with(boundary, theta_slice, HeadingRule::AllWithinSlice)
}

pub fn vpt_radius_with(
    boundary: &VptBoundary,
    theta_slice: f64,
    rule: HeadingRule,
) -> Result<f64, MetricsError> {
    let step = boundary.grid.heading_step;
    let k = (theta_slice / step).round();
    if (theta_slice - k * step).abs() > 1e-9 || k < 0.0 || k as i32 > boundary.grid.n_heading() {
        return Err(MetricsError::MisalignedThetaSlice(theta_slice));
    }
    let k = k as i32;
    let nx = boundary.grid.n_xy();
    let mut count = 0usize;
    for ix in -nx..=nx {
        for iy in -nx..=nx {
            let cell = match rule {
                HeadingRule::AllWithinSlice => (-k..=k).all(|ih| boundary.is_valid(ix, iy, ih)),
                HeadingRule::AnyWithinSlice => (-k..=k).any(|ih| boundary.is_valid(ix, iy, ih)),
            };
            if cell {
                count += 1;
            }
        }
    }
    let area = count as f64 * boundary.grid.xy_step * boundary.grid.xy_step;
    Ok(area.sqrt())
}

/// Radius and aggregate summary of a VPT sweep along a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct VptProfile {
    /// (arc length, boundary radius) per evaluated frame.
    pub radii: Vec<(f64, f64)>,
    pub windows: Vec<VptWindowAgg>,
    /// Arc lengths of frames where even the exact prior failed to match.
    pub zero_offset_failures: Vec<f64>,
}

/// Non-zero radius statistics over one arc-length window; all zeros when
/// the window saw no successful match.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VptWindowAgg {
    pub start: f64,
    pub end: f64,
    pub min_nonzero: f64,
    pub max_nonzero: f64,
    pub median_nonzero: f64,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return 0.0;
    }
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Evaluate the boundary radius for every (arc, frame) location and
/// aggregate non-zero radii over consecutive windows of `window` meters.
pub fn vpt_profile(
    locations: &[(f64, &FeatureFrame)],
    map: &FeatureMap,
    grid: &VptGridSpec,
    icp_cfg: &IcpConfig,
    tol: &ValidityTol,
    theta_slice: f64,
    window: f64,
) -> Result<VptProfile, MetricsError> {
    grid.validate()?;
    if locations.windows(2).any(|w| w[1].0 < w[0].0) {
        return Err(MetricsError::UnorderedFrames);
    }
    let mut radii = Vec::with_capacity(locations.len());
    let mut zero_offset_failures = Vec::new();
    for (arc, frame) in locations {
        let true_pose = frame
            .true_pose
            .as_ref()
            .ok_or(MetricsError::MissingTruePose(*arc))?;
        let mut boundary = vpt_evaluate(frame, map, true_pose, grid, icp_cfg, tol)?;
        boundary.arc_length = *arc;
        if !boundary.zero_offset_valid() && !frame.observations.is_empty() {
            zero_offset_failures.push(*arc);
        }
        radii.push((*arc, vpt_radius(&boundary, theta_slice)?));
    }

    let mut windows = Vec::new();
    if let (Some(first), Some(last)) = (locations.first(), locations.last()) {
        let start0 = (first.0 / window).floor() * window;
        let mut start = start0;
        while start <= last.0 {
            let end = start + window;
            let mut in_window: Vec<f64> = radii
                .iter()
                .filter(|(a, r)| *a >= start && *a < end && *r > 0.0)
                .map(|(_, r)| *r)
                .collect();
            in_window.sort_by(f64::total_cmp);
            windows.push(VptWindowAgg {
                start,
                end,
                min_nonzero: in_window.first().copied().unwrap_or(0.0),
                max_nonzero: in_window.last().copied().unwrap_or(0.0),
                median_nonzero: median(&in_window),
            });
            start += window;
        }
    }

    Ok(VptProfile {
        radii,
        windows,
        zero_offset_failures,
    })
}

/// P(AU_l) sampled over window lengths, with the grid it was computed on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PauCurve {
    pub lengths: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub window_stride: f64,
    pub trajectory_length: f64,
}

fn validate_pau_inputs(
    trajectory_length: f64,
    lengths: &[f64],
    stride: f64,
) -> Result<f64, MetricsError> {
    if stride <= 0.0 {
        return Err(MetricsError::InvalidPauRequest(format!(
            "stride must be positive, got {stride}"
        )));
    }
    if lengths.is_empty() {
        return Err(MetricsError::InvalidPauRequest("no window lengths".into()));
    }
    for w in lengths.windows(2) {
        if w[1] <= w[0] {
            return Err(MetricsError::InvalidPauRequest(
                "lengths must be strictly increasing".into(),
            ));
        }
    }
    let max_len = *lengths.last().unwrap();
    if lengths[0] < 0.0 || max_len > trajectory_length {
        return Err(MetricsError::InvalidPauRequest(format!(
            "lengths must lie in [0, {trajectory_length}]"
        )));
    }
    if trajectory_length - max_len < 0.0 {
        return Err(MetricsError::EmptyStartSet {
            traj: trajectory_length,
            max_len,
        });
    }
    Ok(max_len)
}

/// Shared start positions for every window length: multiples of the stride
/// no greater than `trajectory_length - max_len`, so each start admits the
/// longest window. This single start set makes P(AU_l) non-increasing in l.
pub(crate) fn pau_window_starts(trajectory_length: f64, max_len: f64, stride: f64) -> Vec<f64> {
    let limit = trajectory_length - max_len;
    let mut starts = Vec::new();
    let mut k = 0u64;
    loop {
        let s = k as f64 * stride;
        if s > limit + 1e-9 {
            break;
        }
        starts.push(s);
        k += 1;
    }
    starts
}

/// Compute the PAU curve from accepted update arc positions.
///
/// A window [s, s+l] counts as update-free iff no event lies strictly
/// inside (s, s+l); events exactly on an endpoint do not rescue a window.
pub fn pau_curve(
    event_arcs: &[f64],
    trajectory_length: f64,
    lengths: &[f64],
    stride: f64,
) -> Result<PauCurve, MetricsError> {
    let max_len = validate_pau_inputs(trajectory_length, lengths, stride)?;
    let starts = pau_window_starts(trajectory_length, max_len, stride);
    if starts.is_empty() {
        return Err(MetricsError::EmptyStartSet {
            traj: trajectory_length,
            max_len,
        });
    }
    let mut events: Vec<f64> = event_arcs.to_vec();
    events.sort_by(f64::total_cmp);

    let probabilities = lengths
        .iter()
        .map(|&l| {
            let au = starts
                .iter()
                .filter(|&&s| {
                    // first event strictly after the window start
                    let idx = events.partition_point(|&e| e <= s);
                    idx == events.len() || events[idx] >= s + l
                })
                .count();
            au as f64 / starts.len() as f64
        })
        .collect();

    Ok(PauCurve {
        lengths: lengths.to_vec(),
        probabilities,
        window_stride: stride,
        trajectory_length,
    })
}

/// Smallest listed length with P(AU_l) at or below `p`; `None` when the
/// curve never reaches it.
pub fn pau_cutoff(curve: &PauCurve, p: f64) -> Result<Option<f64>, MetricsError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(MetricsError::InvalidPauRequest(format!(
            "cutoff probability must be in (0, 1), got {p}"
        )));
    }
    Ok(curve
        .lengths
        .iter()
        .zip(&curve.probabilities)
        .find(|(_, &prob)| prob <= p)
        .map(|(&l, _)| l))
}

/// Trapezoidal area under the (l, P) samples.
pub fn pau_area(curve: &PauCurve) -> Result<f64, MetricsError> {
    if curve.lengths.len() < 2 {
        return Err(MetricsError::TooFewPoints);
    }
    let mut area = 0.0;
    for i in 1..curve.lengths.len() {
        let dl = curve.lengths[i] - curve.lengths[i - 1];
        area += 0.5 * (curve.probabilities[i] + curve.probabilities[i - 1]) * dl;
    }
    Ok(area)
}

/// Area between two curves on an identical length grid: `pau_area(a) -
/// pau_area(b)`, positive when `a` sits above `b`.
pub fn pau_area_between(a: &PauCurve, b: &PauCurve) -> Result<f64, MetricsError> {
    if a.lengths.len() != b.lengths.len()
        || a.lengths.iter().zip(&b.lengths).any(|(x, y)| (x - y).abs() > 1e-12)
    {
        return Err(MetricsError::MismatchedGrids);
    }
    Ok(pau_area(a)? - pau_area(b)?)
}

/// One sample of the robustness margin: VPT radius minus filter position
/// bound at a common arc position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginPoint {
    pub arc_length: f64,
    pub vpt_radius: f64,
    pub bound: f64,
    pub margin: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginReport {
    pub points: Vec<MarginPoint>,
    /// Contiguous arc intervals where the margin is non-positive.
    pub flagged_intervals: Vec<(f64, f64)>,
}

fn interpolate(series: &[(f64, f64)], x: f64) -> f64 {
    if x <= series[0].0 {
        return series[0].1;
    }
    if x >= series[series.len() - 1].0 {
        return series[series.len() - 1].1;
    }
    let idx = series.partition_point(|(a, _)| *a <= x).min(series.len() - 1);
    let (x0, y0) = series[idx - 1];
    let (x1, y1) = series[idx];
    if x1 == x0 {
        return y0;
    }
    y0 + (x - x0) / (x1 - x0) * (y1 - y0)
}

/// Resample both series onto a shared arc grid over their overlap and take
/// the margin radius - bound. Intervals with non-positive margin are where
/// prior uncertainty has outgrown what the matcher tolerates, so
/// initialisation or continued matching is likely to fail there.
pub fn robustness_margin(
    vpt_radii: &[(f64, f64)],
    bounds: &[(f64, f64)],
    step: f64,
) -> Result<MarginReport, MetricsError> {
    if vpt_radii.is_empty() || bounds.is_empty() || step <= 0.0 {
        return Err(MetricsError::EmptyOverlap);
    }
    let start = vpt_radii[0].0.max(bounds[0].0);
    let end = vpt_radii[vpt_radii.len() - 1].0.min(bounds[bounds.len() - 1].0);
    if end <= start {
        return Err(MetricsError::EmptyOverlap);
    }

    let mut points = Vec::new();
    let mut k = 0u64;
    loop {
        let arc = start + k as f64 * step;
        if arc > end + 1e-9 {
            break;
        }
        let r = interpolate(vpt_radii, arc);
        let b = interpolate(bounds, arc);
        let margin = r - b;
        points.push(MarginPoint {
            arc_length: arc,
            vpt_radius: r,
            bound: b,
            margin,
            flagged: margin <= 0.0,
        });
        k += 1;
    }

    let mut flagged_intervals = Vec::new();
    let mut open: Option<f64> = None;
    for p in &points {
        match (p.flagged, open) {
            (true, None) => open = Some(p.arc_length),
            (false, Some(s)) => {
                flagged_intervals.push((s, p.arc_length));
                open = None;
            }
            _ => {}
        }
    }
    if let Some(s) = open {
        flagged_intervals.push((s, points.last().unwrap().arc_length));
    }

    Ok(MarginReport {
        points,
        flagged_intervals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::Point2;
    use crate::world::{FeatureClass, MapFeature, Observation};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn pole(id: u32, x: f64, y: f64) -> MapFeature {
        MapFeature {
            id,
            class: FeatureClass::Pole,
            position: Point2::new(x, y),
        }
    }

    fn frame_seen_from(map: &FeatureMap, pose: &Pose2D) -> FeatureFrame {
        FeatureFrame {
            timestamp: 0.0,
            observations: map
                .features()
                .iter()
                .map(|f| Observation {
                    class: f.class,
                    point: pose.inverse_transform_point(&f.position),
                })
                .collect(),
            true_pose: Some(*pose),
        }
    }

    fn small_grid() -> VptGridSpec {
        VptGridSpec {
            xy_step: 1.0,
            xy_extent: 3.0,
            heading_step: 0.1,
            heading_extent: 0.2,
        }
    }

    #[test]
    fn empty_frame_yields_all_invalid_lattice() {
        let map = FeatureMap::new(vec![pole(0, 5.0, 5.0)]).unwrap();
        let frame = FeatureFrame {
            timestamp: 0.0,
            observations: vec![],
            true_pose: Some(Pose2D::identity()),
        };
        let b = vpt_evaluate(
            &frame,
            &map,
            &Pose2D::identity(),
            &small_grid(),
            &IcpConfig::default(),
            &ValidityTol::default(),
        )
        .unwrap();
        assert!(b.cells().all(|(_, _, _, v)| !v));
        assert_eq!(vpt_radius(&b, 0.1).unwrap(), 0.0);
    }

    fn asymmetric_map() -> FeatureMap {
        FeatureMap::new(vec![
            pole(0, 8.0, 2.0),
            pole(1, -5.0, 9.0),
            pole(2, -9.0, -4.0),
            pole(3, 3.0, -8.0),
            pole(4, 12.0, -11.0),
            MapFeature {
                id: 5,
                class: FeatureClass::Corner,
                position: Point2::new(-2.0, -13.0),
            },
            MapFeature {
                id: 6,
                class: FeatureClass::Corner,
                position: Point2::new(14.0, 9.0),
            },
        ])
        .unwrap()
    }

    #[test]
    fn zero_offset_is_valid_for_dense_frame() {
        let map = asymmetric_map();
        let truth = Pose2D::new(1.0, 0.5, 0.2);
        let frame = frame_seen_from(&map, &truth);
        let b = vpt_evaluate(
            &frame,
            &map,
            &truth,
            &small_grid(),
            &IcpConfig::default(),
            &ValidityTol::default(),
        )
        .unwrap();
        assert!(b.zero_offset_valid());
    }

    #[test]
    fn square_world_quarter_turn_is_invalid() {
        // Four poles at square corners around the sensor: a prior rotated by
        // pi/2 converges onto the symmetric solution, which is a wrong pose.
        let map = FeatureMap::new(vec![
            pole(0, 5.0, 5.0),
            pole(1, -5.0, 5.0),
            pole(2, -5.0, -5.0),
            pole(3, 5.0, -5.0),
        ])
        .unwrap();
        let truth = Pose2D::identity();
        let frame = frame_seen_from(&map, &truth);
        let grid = VptGridSpec {
            xy_step: 1.0,
            xy_extent: 1.0,
            heading_step: PI / 8.0,
            heading_extent: PI / 2.0,
        };
        let b = vpt_evaluate(
            &frame,
            &map,
            &truth,
            &grid,
            &IcpConfig::default(),
            &ValidityTol::default(),
        )
        .unwrap();
        assert!(b.zero_offset_valid());
        // the quarter-turn offsets land on the rotated fixed point
        assert!(!b.is_valid(0, 0, 4));
        assert!(!b.is_valid(0, 0, -4));
        // and the matcher itself is confidently wrong there, not diverged
        let rotated = Pose2D::new(0.0, 0.0, PI / 2.0);
        let r = icp_match(&rotated, &frame, &map, &IcpConfig::default());
        assert!(r.converged);
        assert!(r.pose.heading_difference(&truth).abs() > 1.0);
    }

    #[test]
    fn radius_counts_cells() {
        // Hand-build a boundary with exactly 9 jointly-valid cells.
        let grid = VptGridSpec {
            xy_step: 1.0,
            xy_extent: 2.0,
            heading_step: 0.1,
            heading_extent: 0.1,
        };
        let nx = grid.n_xy();
        let nh = grid.n_heading();
        let mut valid = vec![false; ((2 * nx + 1) * (2 * nx + 1) * (2 * nh + 1)) as usize];
        let mut boundary = VptBoundary {
            arc_length: 0.0,
            true_pose: Pose2D::identity(),
            grid,
            valid: valid.clone(),
        };
        for ix in -1..=1 {
            for iy in -1..=1 {
                for ih in -nh..=nh {
                    let idx = boundary.index(ix, iy, ih);
                    valid[idx] = true;
                }
            }
        }
        boundary.valid = valid;
        assert_abs_diff_eq!(vpt_radius(&boundary, 0.1).unwrap(), 3.0, epsilon = 1e-12);
        // misaligned slice rejected
        assert!(matches!(
            vpt_radius(&boundary, 0.15),
            Err(MetricsError::MisalignedThetaSlice(_))
        ));
    }

    #[test]
    fn radius_non_increasing_in_theta_slice() {
        let map = asymmetric_map();
        let truth = Pose2D::identity();
        let frame = frame_seen_from(&map, &truth);
        let grid = VptGridSpec {
            xy_step: 1.0,
            xy_extent: 4.0,
            heading_step: 0.1,
            heading_extent: 0.4,
        };
        let b = vpt_evaluate(
            &frame,
            &map,
            &truth,
            &grid,
            &IcpConfig::default(),
            &ValidityTol::default(),
        )
        .unwrap();
        let mut prev = f64::INFINITY;
        for k in 0..=4 {
            let r = vpt_radius(&b, k as f64 * 0.1).unwrap();
            assert!(r <= prev + 1e-12, "radius grew with slice width");
            prev = r;
        }
    }

    #[test]
    fn radius_matches_naive_counter_and_mirror_symmetry() {
        let map = asymmetric_map();
        let truth = Pose2D::identity();
        let frame = frame_seen_from(&map, &truth);
        let grid = small_grid();
        let tol = ValidityTol::default();
        let cfg = IcpConfig::default();
        let b = vpt_evaluate(&frame, &map, &truth, &grid, &cfg, &tol).unwrap();

        // naive recount of the jointly-valid cells at slice 0.1
        let k = 1;
        let nx = grid.n_xy();
        let mut count = 0;
        for ix in -nx..=nx {
            for iy in -nx..=nx {
                if (-k..=k).all(|ih| b.is_valid(ix, iy, ih)) {
                    count += 1;
                }
            }
        }
        let expect = ((count as f64) * grid.xy_step * grid.xy_step).sqrt();
        assert_abs_diff_eq!(vpt_radius(&b, 0.1).unwrap(), expect, epsilon = 1e-12);

        // mirrored world produces the mirrored lattice and the same radius
        let mirrored = FeatureMap::new(
            map.features()
                .iter()
                .map(|f| MapFeature {
                    id: f.id,
                    class: f.class,
                    position: Point2::new(f.position.x, -f.position.y),
                })
                .collect(),
        )
        .unwrap();
        let mtruth = Pose2D::identity();
        let mframe = frame_seen_from(&mirrored, &mtruth);
        let mb = vpt_evaluate(&mframe, &mirrored, &mtruth, &grid, &cfg, &tol).unwrap();
        assert_abs_diff_eq!(
            vpt_radius(&b, 0.1).unwrap(),
            vpt_radius(&mb, 0.1).unwrap(),
            epsilon = 1e-12
        );
        for (ix, iy, ih, v) in b.cells() {
            assert_eq!(mb.is_valid(ix, -iy, -ih), v, "mirror mismatch at ({ix},{iy},{ih})");
        }
    }

    #[test]
    fn profile_window_aggregation() {
        // windows with radii {0, 2, 4} -> span (2, 4), median 3
        let sorted = [2.0, 4.0];
        assert_eq!(median(&sorted), 3.0);

        let map = asymmetric_map();
        let truth = Pose2D::identity();
        let frame = frame_seen_from(&map, &truth);
        let locations: Vec<(f64, &FeatureFrame)> =
            vec![(0.0, &frame), (2.0, &frame), (4.0, &frame)];
        let p = vpt_profile(
            &locations,
            &map,
            &small_grid(),
            &IcpConfig::default(),
            &ValidityTol::default(),
            0.1,
            6.0,
        )
        .unwrap();
        // identical frames: span collapses to the common radius
        assert_eq!(p.windows.len(), 1);
        let w = &p.windows[0];
        assert!(w.max_nonzero > 0.0);
        assert_abs_diff_eq!(w.min_nonzero, w.max_nonzero, epsilon = 1e-12);
        assert_abs_diff_eq!(w.median_nonzero, w.max_nonzero, epsilon = 1e-12);
    }

    #[test]
    fn pau_fig3_scenario() {
        // 9 windows of length 10 at stride 5 over 50 m, 3 of them
        // update-free: P = 1/3.
        let events = [12.0, 22.0, 42.0];
        let curve = pau_curve(&events, 50.0, &[10.0], 5.0).unwrap();
        assert_eq!(curve.probabilities, vec![3.0 / 9.0]);
    }

    #[test]
    fn pau_trivial_cases() {
        // dense events at every stride: zero probability from l >= stride
        let events: Vec<f64> = (1..100).map(|k| k as f64 * 0.5).collect();
        let lengths = [0.5, 1.0, 2.0, 4.0];
        let curve = pau_curve(&events, 50.0, &lengths, 0.5).unwrap();
        for (l, p) in curve.lengths.iter().zip(&curve.probabilities) {
            if *l >= 1.0 {
                assert_eq!(*p, 0.0, "expected 0 at l={l}");
            }
        }

        // zero events: P = 1 everywhere
        let curve = pau_curve(&[], 50.0, &lengths, 0.5).unwrap();
        assert!(curve.probabilities.iter().all(|&p| p == 1.0));
    }

    #[test]
    fn pau_endpoint_events_do_not_rescue() {
        // event exactly at a window boundary is not strictly inside
        let curve = pau_curve(&[10.0], 20.0, &[10.0], 10.0).unwrap();
        // windows [0,10] and [10,20]: event at 10 rescues neither
        assert_eq!(curve.probabilities, vec![1.0]);
    }

    #[test]
    fn pau_monotone_and_dominated() {
        let events = [3.0, 7.0, 7.5, 19.0, 33.0, 41.0];
        let lengths: Vec<f64> = (1..=20).map(|k| k as f64).collect();
        let curve = pau_curve(&events, 60.0, &lengths, 0.5).unwrap();
        for w in curve.probabilities.windows(2) {
            assert!(w[1] <= w[0] + 1e-15);
        }
        // adding events never worsens any point of the curve
        let mut more = events.to_vec();
        more.extend([11.0, 26.0, 50.0]);
        let better = pau_curve(&more, 60.0, &lengths, 0.5).unwrap();
        for (a, b) in curve.probabilities.iter().zip(&better.probabilities) {
            assert!(b <= a);
        }
    }

    #[test]
    fn pau_rejects_bad_requests() {
        assert!(matches!(
            pau_curve(&[], 10.0, &[20.0], 1.0),
            Err(MetricsError::InvalidPauRequest(_))
        ));
        assert!(matches!(
            pau_curve(&[], 10.0, &[1.0], 0.0),
            Err(MetricsError::InvalidPauRequest(_))
        ));
        assert!(matches!(
            pau_curve(&[], 10.0, &[2.0, 2.0], 1.0),
            Err(MetricsError::InvalidPauRequest(_))
        ));
    }

    #[test]
    fn pau_cutoff_cases() {
        let curve = PauCurve {
            lengths: vec![1.0, 4.0, 6.0],
            probabilities: vec![0.5, 0.05, 0.01],
            window_stride: 0.5,
            trajectory_length: 50.0,
        };
        assert_eq!(pau_cutoff(&curve, 0.05).unwrap(), Some(4.0));

        let never = PauCurve {
            probabilities: vec![1.0, 1.0, 1.0],
            ..curve.clone()
        };
        assert_eq!(pau_cutoff(&never, 0.05).unwrap(), None);

        let always = PauCurve {
            probabilities: vec![0.0, 0.0, 0.0],
            ..curve.clone()
        };
        assert_eq!(pau_cutoff(&always, 0.05).unwrap(), Some(1.0));

        assert!(pau_cutoff(&curve, 0.0).is_err());
    }

    #[test]
    fn pau_area_cases() {
        let ones = PauCurve {
            lengths: vec![0.0, 5.0, 10.0],
            probabilities: vec![1.0, 1.0, 1.0],
            window_stride: 0.5,
            trajectory_length: 50.0,
        };
        assert_abs_diff_eq!(pau_area(&ones).unwrap(), 10.0, epsilon = 1e-12);

        let zeros = PauCurve {
            probabilities: vec![0.0, 0.0, 0.0],
            ..ones.clone()
        };
        assert_eq!(pau_area(&zeros).unwrap(), 0.0);
        assert_abs_diff_eq!(pau_area_between(&ones, &zeros).unwrap(), 10.0, epsilon = 1e-12);

        let other_grid = PauCurve {
            lengths: vec![0.0, 5.0, 11.0],
            ..ones.clone()
        };
        assert_eq!(
            pau_area_between(&ones, &other_grid).unwrap_err(),
            MetricsError::MismatchedGrids
        );
    }

    #[test]
    fn margin_basic_cases() {
        let radii: Vec<(f64, f64)> = (0..=10).map(|k| (k as f64 * 10.0, 10.0)).collect();
        let bounds: Vec<(f64, f64)> = (0..=10).map(|k| (k as f64 * 10.0, 2.0)).collect();
        let report = robustness_margin(&radii, &bounds, 5.0).unwrap();
        assert!(report.flagged_intervals.is_empty());
        assert!(report.points.iter().all(|p| (p.margin - 8.0).abs() < 1e-12));

        // zero-radius stretch gets flagged
        let radii: Vec<(f64, f64)> = (0..=10)
            .map(|k| {
                let arc = k as f64 * 10.0;
                let r = if (30.0..=60.0).contains(&arc) { 0.0 } else { 10.0 };
                (arc, r)
            })
            .collect();
        let report = robustness_margin(&radii, &bounds, 1.0).unwrap();
        assert_eq!(report.flagged_intervals.len(), 1);
        let (s, e) = report.flagged_intervals[0];
        assert!(s >= 20.0 && s <= 31.0, "start {s}");
        assert!(e >= 59.0 && e <= 71.0, "end {e}");

        // disjoint series rejected
        let far: Vec<(f64, f64)> = vec![(1000.0, 1.0), (1001.0, 1.0)];
        assert_eq!(
            robustness_margin(&radii, &far, 1.0).unwrap_err(),
            MetricsError::EmptyOverlap
        );
    }
}
