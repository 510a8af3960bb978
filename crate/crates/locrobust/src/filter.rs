//! Unscented Kalman filter over (Easting, Northing, Heading).
//!
//! Prediction propagates sigma points through the midpoint motion model;
//! heading statistics use the unit-vector mean so the +/-pi seam never
//! corrupts the average. Global pose observations (GPS or ICP) are gated by
//! Mahalanobis distance against a chi-square threshold and applied with a
//! Joseph-form update. The four strategies share this one filter and differ
//! only in which observation sources are switched on.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matcher::{icp_match, IcpConfig};
use crate::pose::{wrap_angle, Pose2D};
use crate::sim::{Dataset, GpsFix};
use crate::world::{FeatureClass, FeatureMap};

/// Eigenvalues above this (negative) floor still count as PSD.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// Heading variance used when fusing a position-only GPS fix as a full pose
/// observation; large enough that the heading row of the update is inert.
const GPS_HEADING_PLACEHOLDER_VAR: f64 = 1e6;

#[derive(Debug, Error, PartialEq)]
pub enum FilterError {
    #[error("covariance is not positive semi-definite (min eigenvalue {0:.3e})")]
    NonPsdCovariance(f64),
    #[error("singular innovation covariance")]
    SingularInnovation,
    #[error("timestamp {t:.3} precedes filter state at {state_t:.3}")]
    NonMonotonicTimestamp { t: f64, state_t: f64 },
    #[error("GPS initialisation failed: no reading pair exceeded the speed threshold")]
    InitialisationFailed,
    #[error("dataset stream '{0}' is not time-ordered")]
    DatasetNotTimeOrdered(&'static str),
}

/// Filter state: pose estimate, 3x3 covariance (m^2, m^2, rad^2), time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterState {
    pub pose: Pose2D,
    pub covariance: Matrix3<f64>,
    pub timestamp: f64,
}

impl FilterState {
    pub fn new(pose: Pose2D, covariance: Matrix3<f64>, timestamp: f64) -> Self {
        FilterState {
            pose,
            covariance,
            timestamp,
        }
    }

    pub fn min_covariance_eigenvalue(&self) -> f64 {
        let sym = (self.covariance + self.covariance.transpose()) * 0.5;
        sym.symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn check_psd(&self) -> Result<(), FilterError> {
        let min = self.min_covariance_eigenvalue();
        if min < -PSD_TOLERANCE {
            return Err(FilterError::NonPsdCovariance(min));
        }
        Ok(())
    }
}

/// Scaled unscented transform parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UkfParams {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
}

impl Default for UkfParams {
    fn default() -> Self {
        UkfParams {
            alpha: 0.1,
            beta: 2.0,
            kappa: 0.0,
        }
    }
}

/// Odometry process noise, scaled by distance travelled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcessNoise {
    pub distance_sigma_per_m: f64,
    pub heading_sigma_per_m: f64,
}

impl Default for ProcessNoise {
    fn default() -> Self {
        ProcessNoise {
            distance_sigma_per_m: 0.02,
            heading_sigma_per_m: 0.003,
        }
    }
}

const STATE_DIM: usize = 3;

struct SigmaPoints {
    points: Vec<Vector3<f64>>,
    w_mean0: f64,
    w_cov0: f64,
    w_i: f64,
}

fn symmetric_sqrt(cov: &Matrix3<f64>) -> Result<Matrix3<f64>, FilterError> {
    let sym = (cov + cov.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut min = f64::INFINITY;
    for &l in eig.eigenvalues.iter() {
        min = min.min(l);
    }
    if min < -PSD_TOLERANCE {
        return Err(FilterError::NonPsdCovariance(min));
    }
    let sqrt_vals = Vector3::new(
        eig.eigenvalues[0].max(0.0).sqrt(),
        eig.eigenvalues[1].max(0.0).sqrt(),
        eig.eigenvalues[2].max(0.0).sqrt(),
    );
    Ok(&eig.eigenvectors * Matrix3::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose())
}

fn sigma_points(state: &FilterState, params: &UkfParams) -> Result<SigmaPoints, FilterError> {
    let n = STATE_DIM as f64;
    let lambda = params.alpha * params.alpha * (n + params.kappa) - n;
    let scale = (n + lambda).sqrt();
    let sqrt_cov = symmetric_sqrt(&state.covariance)?;
    let mean = Vector3::new(
        state.pose.easting,
        state.pose.northing,
        state.pose.heading,
    );
    let mut points = Vec::with_capacity(2 * STATE_DIM + 1);
    points.push(mean);
    for i in 0..STATE_DIM {
        let col = sqrt_cov.column(i) * scale;
        points.push(mean + col);
        points.push(mean - col);
    }
    Ok(SigmaPoints {
        points,
        w_mean0: lambda / (n + lambda),
        w_cov0: lambda / (n + lambda) + (1.0 - params.alpha * params.alpha + params.beta),
        w_i: 0.5 / (n + lambda),
    })
}

/// Propagate the state through one odometry increment.
///
/// Motion model per sigma point:
/// `x' = x + dd*cos(h + dh/2), y' = y + dd*sin(h + dh/2), h' = h + dh`.
/// Process noise enters in (distance, heading) space and is mapped into the
/// state through the motion Jacobian, growing the covariance every moving
/// step.
pub fn predict(
    state: &FilterState,
    delta_distance: f64,
    delta_heading: f64,
    timestamp: f64,
    noise: &ProcessNoise,
    params: &UkfParams,
) -> Result<FilterState, FilterError> {
    if timestamp < state.timestamp {
        return Err(FilterError::NonMonotonicTimestamp {
            t: timestamp,
            state_t: state.timestamp,
        });
    }
    state.check_psd()?;
    let sp = sigma_points(state, params)?;

    let propagated: Vec<Vector3<f64>> = sp
        .points
        .iter()
        .map(|p| {
            let mid = p.z + 0.5 * delta_heading;
            Vector3::new(
                p.x + delta_distance * mid.cos(),
                p.y + delta_distance * mid.sin(),
                p.z + delta_heading,
            )
        })
        .collect();

    // Sigma headings stay unwrapped through propagation, so the weighted
    // mean is exact for the (linear) heading model and immune to the +/-pi
    // seam; the result is wrapped once when the pose is formed. A
    // unit-vector mean would lose its footing here: with alpha = 0.1 the
    // centre weight is -99 and the summed vector's norm crosses zero once
    // the heading variance grows past ~1.4 rad^2, which long dead-reckoning
    // stretches do reach.
    let mut e = 0.0;
    let mut n = 0.0;
    let mut heading = 0.0;
    for (i, p) in propagated.iter().enumerate() {
        let w = if i == 0 { sp.w_mean0 } else { sp.w_i };
        e += w * p.x;
        n += w * p.y;
        heading += w * p.z;
    }

    let mut cov = Matrix3::zeros();
    for (i, p) in propagated.iter().enumerate() {
        let w = if i == 0 { sp.w_cov0 } else { sp.w_i };
        let r = Vector3::new(p.x - e, p.y - n, p.z - heading);
        cov += w * r * r.transpose();
    }

    let sigma_d = noise.distance_sigma_per_m * delta_distance.abs();
    let sigma_h = noise.heading_sigma_per_m * delta_distance.abs();
    let mid = state.pose.heading + 0.5 * delta_heading;
    let g = Matrix3::new(
        mid.cos(),
        -0.5 * delta_distance * mid.sin(),
        0.0,
        mid.sin(),
        0.5 * delta_distance * mid.cos(),
        0.0,
        0.0,
        1.0,
        0.0,
    );
    let q_src = Matrix3::from_diagonal(&Vector3::new(sigma_d * sigma_d, sigma_h * sigma_h, 0.0));
    cov += g * q_src * g.transpose();
    cov = (cov + cov.transpose()) * 0.5;

    Ok(FilterState {
        pose: Pose2D::new(e, n, heading),
        covariance: cov,
        timestamp,
    })
}

/// Fuse a full-pose observation, gating on the Mahalanobis distance of the
/// wrapped innovation. Rejected observations leave the state untouched.
pub fn update_pose(
    state: &FilterState,
    obs: &Pose2D,
    obs_cov: &Matrix3<f64>,
    gate: f64,
) -> Result<(FilterState, bool), FilterError> {
    state.check_psd()?;
    let obs_state = FilterState::new(*obs, *obs_cov, state.timestamp);
    obs_state.check_psd()?;

    let p = (state.covariance + state.covariance.transpose()) * 0.5;
    let s = p + obs_cov;
    let s_inv = s.try_inverse().ok_or(FilterError::SingularInnovation)?;

    let nu = Vector3::new(
        obs.easting - state.pose.easting,
        obs.northing - state.pose.northing,
        wrap_angle(obs.heading - state.pose.heading),
    );
    let d2 = (nu.transpose() * s_inv * nu)[(0, 0)];
    if !d2.is_finite() {
        return Err(FilterError::SingularInnovation);
    }
    if d2 > gate {
        return Ok((*state, false));
    }

    let k = p * s_inv;
    let dx = k * nu;
    let pose = Pose2D::new(
        state.pose.easting + dx.x,
        state.pose.northing + dx.y,
        state.pose.heading + dx.z,
    );
    let a = Matrix3::identity() - k;
    let mut cov = a * p * a.transpose() + k * obs_cov * k.transpose();
    cov = (cov + cov.transpose()) * 0.5;

    Ok((FilterState::new(pose, cov, state.timestamp), true))
}

/// Derive an initial pose from consecutive GPS fixes: position from the
/// latest fix, heading from the latest pair whose implied speed clears the
/// threshold. `None` until such a pair exists.
pub fn gps_initialise(readings: &[GpsFix], speed_threshold: f64) -> Option<Pose2D> {
    gps_initialise_detailed(readings, speed_threshold).map(|(pose, _)| pose)
}

/// As [`gps_initialise`], also returning the qualifying pair's baseline
/// distance (used to scale the initial heading variance).
pub fn gps_initialise_detailed(readings: &[GpsFix], speed_threshold: f64) -> Option<(Pose2D, f64)> {
    if readings.len() < 2 {
        return None;
    }
    let last = readings.last().unwrap();
    for i in (1..readings.len()).rev() {
        let a = &readings[i - 1];
        let b = &readings[i];
        let dt = b.timestamp - a.timestamp;
        if dt <= 0.0 {
            continue;
        }
        let de = b.easting - a.easting;
        let dn = b.northing - a.northing;
        let dist = de.hypot(dn);
        if dist / dt > speed_threshold {
            let pose = Pose2D::new(last.easting, last.northing, dn.atan2(de));
            return Some((pose, dist));
        }
    }
    None
}

/// Which global observation sources a run fuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyMode {
    DeadReckoning,
    Gps,
    Pole,
    PoleCorner,
}

impl StrategyMode {
    pub const ALL: [StrategyMode; 4] = [
        StrategyMode::DeadReckoning,
        StrategyMode::Gps,
        StrategyMode::Pole,
        StrategyMode::PoleCorner,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            StrategyMode::DeadReckoning => "dead_reckoning",
            StrategyMode::Gps => "gps",
            StrategyMode::Pole => "pole",
            StrategyMode::PoleCorner => "pole_corner",
        }
    }

    /// Feature classes handed to the matcher; `None` for non-feature modes.
    pub fn feature_classes(&self) -> Option<&'static [FeatureClass]> {
        match self {
            StrategyMode::DeadReckoning | StrategyMode::Gps => None,
            StrategyMode::Pole => Some(&[FeatureClass::Pole]),
            StrategyMode::PoleCorner => Some(&[FeatureClass::Pole, FeatureClass::Corner]),
        }
    }
}

impl std::fmt::Display for StrategyMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-strategy filter tuning. All presets here are pinned by tests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub mode: StrategyMode,
    /// Keep fusing GPS after initialisation (true only for the GPS mode;
    /// feature modes drop GPS at the first valid map match).
    pub gps_used_after_init: bool,
    /// Chi-square gate for the 3-DoF pose innovation.
    pub gate_threshold: f64,
    pub process_noise: ProcessNoise,
    pub gps_sigma: f64,
    pub icp_position_sigma: f64,
    pub icp_heading_sigma: f64,
    pub gps_speed_threshold: f64,
    pub ukf: UkfParams,
}

impl StrategyConfig {
    /// Defaults: chi-square(3) at 99.7% = 13.93, GPS sigma 2 m, ICP sigma
    /// 0.1 m / 0.01 rad, odometry noise 0.02 m and 0.003 rad per meter.
    pub fn for_mode(mode: StrategyMode) -> Self {
        StrategyConfig {
            mode,
            gps_used_after_init: mode == StrategyMode::Gps,
            gate_threshold: 13.93,
            process_noise: ProcessNoise::default(),
            gps_sigma: 2.0,
            icp_position_sigma: 0.1,
            icp_heading_sigma: 0.01,
            gps_speed_threshold: 0.5,
            ukf: UkfParams::default(),
        }
    }

    pub fn with_mode(&self, mode: StrategyMode) -> Self {
        StrategyConfig {
            mode,
            gps_used_after_init: mode == StrategyMode::Gps,
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateSource {
    Gps,
    Icp,
}

impl UpdateSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            UpdateSource::Gps => "gps",
            UpdateSource::Icp => "icp",
        }
    }
}

/// One gated global observation, accepted or rejected.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateEvent {
    pub timestamp: f64,
    pub arc_length: f64,
    pub source: UpdateSource,
    pub accepted: bool,
}

/// Filter state after one step, stamped with the odometry-integrated
/// distance travelled since the start of the dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateLogEntry {
    pub timestamp: f64,
    pub arc_length: f64,
    pub pose: Pose2D,
    pub covariance: Matrix3<f64>,
    pub last_source: Option<UpdateSource>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyRun {
    pub states: Vec<StateLogEntry>,
    pub events: Vec<UpdateEvent>,
}

/// Per-axis 95% confidence bounds: 1.96 * sqrt(diagonal).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceBound {
    pub easting: f64,
    pub northing: f64,
    pub heading: f64,
}

pub fn confidence_bound(states: &[StateLogEntry]) -> Vec<ConfidenceBound> {
    states
        .iter()
        .map(|s| ConfidenceBound {
            easting: 1.96 * s.covariance[(0, 0)].max(0.0).sqrt(),
            northing: 1.96 * s.covariance[(1, 1)].max(0.0).sqrt(),
            heading: 1.96 * s.covariance[(2, 2)].max(0.0).sqrt(),
        })
        .collect()
}

enum Event<'a> {
    Odom(&'a crate::sim::OdomSample),
    Gps(&'a GpsFix),
    Frame(&'a crate::world::FeatureFrame),
}

fn check_ordered<T>(items: &[T], t: impl Fn(&T) -> f64, what: &'static str) -> Result<(), FilterError> {
    for w in items.windows(2) {
        if t(&w[1]) < t(&w[0]) {
            return Err(FilterError::DatasetNotTimeOrdered(what));
        }
    }
    Ok(())
}

/// Merge the dataset streams chronologically. At equal timestamps odometry
/// is applied first, then GPS, then the lidar frame, so observations always
/// see the predicted state for their own time.
fn merge_events(dataset: &Dataset) -> Vec<Event<'_>> {
    let mut events: Vec<(f64, u8, Event)> = Vec::with_capacity(
        dataset.odometry.len() + dataset.gps.len() + dataset.frames.len(),
    );
    for o in &dataset.odometry {
        events.push((o.timestamp, 0, Event::Odom(o)));
    }
    for g in &dataset.gps {
        events.push((g.timestamp, 1, Event::Gps(g)));
    }
    for f in &dataset.frames {
        events.push((f.timestamp, 2, Event::Frame(f)));
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    events.into_iter().map(|(_, _, e)| e).collect()
}

/// Replay a dataset under one strategy.
///
/// All modes initialise from GPS (position from the latest fix, heading
/// from fix differencing above the speed threshold). Feature modes keep
/// fusing GPS until the first valid ICP match, then switch to ICP-only
/// updates with the matcher prior taken from the filter state.
pub fn run_strategy(
    dataset: &Dataset,
    map: &FeatureMap,
    cfg: &StrategyConfig,
    icp_cfg: &IcpConfig,
) -> Result<StrategyRun, FilterError> {
    check_ordered(&dataset.odometry, |o| o.timestamp, "odometry")?;
    check_ordered(&dataset.gps, |g| g.timestamp, "gps")?;
    check_ordered(&dataset.frames, |f| f.timestamp, "frames")?;

    let feature_map = cfg.mode.feature_classes().map(|classes| map.filtered(classes));

    let mut states: Vec<StateLogEntry> = Vec::new();
    let mut events: Vec<UpdateEvent> = Vec::new();
    let mut state: Option<FilterState> = None;
    let mut gps_buffer: Vec<GpsFix> = Vec::new();
    let mut arc = 0.0;
    let mut feature_locked = false;
    let mut last_source: Option<UpdateSource> = None;

    let log = |states: &mut Vec<StateLogEntry>, st: &FilterState, arc: f64, src: Option<UpdateSource>| {
        states.push(StateLogEntry {
            timestamp: st.timestamp,
            arc_length: arc,
            pose: st.pose,
            covariance: st.covariance,
            last_source: src,
        });
    };

    for event in merge_events(dataset) {
        match event {
            Event::Odom(o) => {
                arc += o.delta_distance.abs();
                if let Some(st) = state.as_mut() {
                    *st = predict(
                        st,
                        o.delta_distance,
                        o.delta_heading,
                        o.timestamp,
                        &cfg.process_noise,
                        &cfg.ukf,
                    )?;
                    log(&mut states, st, arc, last_source);
                }
            }
            Event::Gps(g) => {
                if state.is_none() {
                    gps_buffer.push(*g);
                    if let Some((pose, baseline)) =
                        gps_initialise_detailed(&gps_buffer, cfg.gps_speed_threshold)
                    {
                        let pos_var = cfg.gps_sigma * cfg.gps_sigma;
                        let heading_sigma = std::f64::consts::SQRT_2 * cfg.gps_sigma / baseline;
                        let cov = Matrix3::from_diagonal(&Vector3::new(
                            pos_var,
                            pos_var,
                            heading_sigma * heading_sigma,
                        ));
                        let st = FilterState::new(pose, cov, g.timestamp);
                        log(&mut states, &st, arc, None);
                        state = Some(st);
                    }
                    continue;
                }
                let fuse = cfg.gps_used_after_init
                    || (cfg.mode.feature_classes().is_some() && !feature_locked);
                if !fuse {
                    continue;
                }
                let st = state.as_mut().unwrap();
                let obs = Pose2D::new(g.easting, g.northing, st.pose.heading);
                let r = Matrix3::from_diagonal(&Vector3::new(
                    cfg.gps_sigma * cfg.gps_sigma,
                    cfg.gps_sigma * cfg.gps_sigma,
                    GPS_HEADING_PLACEHOLDER_VAR,
                ));
                let (updated, accepted) = update_pose(st, &obs, &r, cfg.gate_threshold)?;
                events.push(UpdateEvent {
                    timestamp: g.timestamp,
                    arc_length: arc,
                    source: UpdateSource::Gps,
                    accepted,
                });
                if accepted {
                    *st = updated;
                    last_source = Some(UpdateSource::Gps);
                    log(&mut states, st, arc, last_source);
                }
            }
            Event::Frame(frame) => {
                let (Some(st), Some(fmap)) = (state.as_mut(), feature_map.as_ref()) else {
                    continue;
                };
                let classes = cfg.mode.feature_classes().unwrap();
                let filtered = frame.filtered(classes);
                let result = icp_match(&st.pose, &filtered, fmap, icp_cfg);
                if !result.converged {
                    continue;
                }
                let r = Matrix3::from_diagonal(&Vector3::new(
                    cfg.icp_position_sigma * cfg.icp_position_sigma,
                    cfg.icp_position_sigma * cfg.icp_position_sigma,
                    cfg.icp_heading_sigma * cfg.icp_heading_sigma,
                ));
                let (updated, accepted) = update_pose(st, &result.pose, &r, cfg.gate_threshold)?;
                events.push(UpdateEvent {
                    timestamp: frame.timestamp,
                    arc_length: arc,
                    source: UpdateSource::Icp,
                    accepted,
                });
                if accepted {
                    // map matching has taken over; GPS is init-only from here
                    feature_locked = true;
                    *st = updated;
                    last_source = Some(UpdateSource::Icp);
                    log(&mut states, st, arc, last_source);
                }
            }
        }
    }

    if state.is_none() {
        return Err(FilterError::InitialisationFailed);
    }
    Ok(StrategyRun { states, events })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{
        generate_world, simulate_run, FeatureZone, GpsSpec, LidarSpec, OdometrySpec, RouteSpec,
        SensorSpec, WorldSpec,
    };
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn diag(a: f64, b: f64, c: f64) -> Matrix3<f64> {
        Matrix3::from_diagonal(&Vector3::new(a, b, c))
    }

    fn fix(t: f64, e: f64, n: f64) -> GpsFix {
        GpsFix {
            timestamp: t,
            easting: e,
            northing: n,
            sigma: 1.0,
        }
    }

    #[test]
    fn predict_without_motion_is_identity() {
        let state = FilterState::new(Pose2D::new(1.0, 2.0, 0.5), diag(0.1, 0.2, 0.01), 0.0);
        let out = predict(&state, 0.0, 0.0, 1.0, &ProcessNoise::default(), &UkfParams::default())
            .unwrap();
        assert!(out.pose.position_distance(&state.pose) < 1e-12);
        assert!((out.pose.heading - state.pose.heading).abs() < 1e-12);
        // distance-scaled noise: zero distance adds nothing
        assert!((out.covariance - state.covariance).norm() < 1e-9);
    }

    #[test]
    fn repeated_prediction_grows_trace() {
        let mut state = FilterState::new(Pose2D::identity(), diag(0.01, 0.01, 1e-4), 0.0);
        let mut prev = state.covariance.trace();
        for k in 1..=50 {
            state = predict(
                &state,
                0.2,
                0.001,
                k as f64 * 0.1,
                &ProcessNoise::default(),
                &UkfParams::default(),
            )
            .unwrap();
            let tr = state.covariance.trace();
            assert!(tr > prev, "trace not increasing at step {k}: {prev} -> {tr}");
            state.check_psd().unwrap();
            prev = tr;
        }
    }

    #[test]
    fn straight_prediction_moves_along_heading() {
        let state = FilterState::new(Pose2D::identity(), Matrix3::zeros(), 0.0);
        let noise = ProcessNoise {
            distance_sigma_per_m: 0.0,
            heading_sigma_per_m: 0.0,
        };
        let mut st = state;
        for k in 1..=10 {
            st = predict(&st, 1.0, 0.0, k as f64, &noise, &UkfParams::default()).unwrap();
        }
        assert_abs_diff_eq!(st.pose.easting, 10.0, epsilon = 1e-9);
        assert_abs_diff_eq!(st.pose.northing, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn linear_segment_matches_exact_answer() {
        // Zero heading variance and zero turn: the motion model is linear,
        // so sigma-point propagation must match the exact answer.
        let p0 = diag(0.3, 0.7, 0.0);
        let state = FilterState::new(Pose2D::new(2.0, -1.0, 0.3), p0, 0.0);
        let noise = ProcessNoise::default();
        let out = predict(&state, 5.0, 0.0, 1.0, &noise, &UkfParams::default()).unwrap();

        let expected_e = 2.0 + 5.0 * 0.3f64.cos();
        let expected_n = -1.0 + 5.0 * 0.3f64.sin();
        assert_abs_diff_eq!(out.pose.easting, expected_e, epsilon = 1e-9);
        assert_abs_diff_eq!(out.pose.northing, expected_n, epsilon = 1e-9);
        assert_abs_diff_eq!(out.pose.heading, 0.3, epsilon = 1e-9);

        let sigma_d = noise.distance_sigma_per_m * 5.0;
        let sigma_h = noise.heading_sigma_per_m * 5.0;
        let (s, c) = 0.3f64.sin_cos();
        let g = Matrix3::new(c, -2.5 * s, 0.0, s, 2.5 * c, 0.0, 0.0, 1.0, 0.0);
        let expected_cov =
            p0 + g * diag(sigma_d * sigma_d, sigma_h * sigma_h, 0.0) * g.transpose();
        assert!((out.covariance - expected_cov).norm() < 1e-9);
    }

    #[test]
    fn predict_rejects_non_psd() {
        let state = FilterState::new(Pose2D::identity(), diag(-1.0, 1.0, 1.0), 0.0);
        let err = predict(&state, 1.0, 0.0, 1.0, &ProcessNoise::default(), &UkfParams::default())
            .unwrap_err();
        assert!(matches!(err, FilterError::NonPsdCovariance(_)));
    }

    #[test]
    fn update_at_mean_with_tiny_noise_snaps_to_observation() {
        let state = FilterState::new(Pose2D::new(4.0, 5.0, 0.2), diag(1.0, 1.0, 0.1), 0.0);
        let obs = Pose2D::new(4.0, 5.0, 0.2);
        let (out, accepted) = update_pose(&state, &obs, &diag(1e-12, 1e-12, 1e-12), 13.93).unwrap();
        assert!(accepted);
        assert!(out.pose.position_distance(&obs) < 1e-9);
        assert!(out.pose.heading_difference(&obs).abs() < 1e-9);
    }

    #[test]
    fn update_rejects_distant_observation() {
        let state = FilterState::new(Pose2D::identity(), diag(1.0, 1.0, 0.1), 0.0);
        let obs = Pose2D::new(200.0, 0.0, 0.0); // ~100 sigma away with R = I
        let (out, accepted) = update_pose(&state, &obs, &diag(1.0, 1.0, 0.1), 13.93).unwrap();
        assert!(!accepted);
        assert_eq!(out.pose, state.pose);
        assert_eq!(out.covariance, state.covariance);
    }

    #[test]
    fn heading_innovation_wraps_across_seam() {
        let state = FilterState::new(Pose2D::new(0.0, 0.0, 3.1), diag(1.0, 1.0, 1.0), 0.0);
        let obs = Pose2D::new(0.0, 0.0, -3.1);
        // innovation should be ~0.083 rad, well inside any sane gate
        let (out, accepted) = update_pose(&state, &obs, &diag(0.01, 0.01, 0.01), 13.93).unwrap();
        assert!(accepted);
        let innovation = wrap_angle(obs.heading - state.pose.heading);
        assert_abs_diff_eq!(innovation.abs(), 2.0 * PI - 6.2, epsilon = 1e-9);
        assert!(innovation.abs() < 0.1);
        // posterior heading moved toward the seam, staying wrapped
        assert!(out.pose.heading > -PI && out.pose.heading <= PI);
        assert!(out.pose.heading.abs() > 3.0);
    }

    #[test]
    fn update_rejects_singular_innovation() {
        let state = FilterState::new(Pose2D::identity(), Matrix3::zeros(), 0.0);
        let err = update_pose(&state, &Pose2D::identity(), &Matrix3::zeros(), 13.93).unwrap_err();
        assert_eq!(err, FilterError::SingularInnovation);
    }

    #[test]
    fn accepted_update_never_grows_determinant() {
        let state = FilterState::new(Pose2D::new(1.0, 1.0, 0.1), diag(2.0, 3.0, 0.2), 0.0);
        let obs = Pose2D::new(1.5, 0.8, 0.12);
        let (out, accepted) = update_pose(&state, &obs, &diag(1.0, 1.0, 0.05), 13.93).unwrap();
        assert!(accepted);
        let before = state.covariance.determinant();
        let after = out.covariance.determinant();
        assert!(after <= before * (1.0 + 1e-9));
        assert!(out.covariance.trace() <= state.covariance.trace() + 1e-12);
    }

    #[test]
    fn gps_initialise_examples() {
        let threshold = 0.5;
        let pose = gps_initialise(&[fix(0.0, 0.0, 0.0), fix(1.0, 1.0, 0.0)], threshold).unwrap();
        assert_eq!((pose.easting, pose.northing), (1.0, 0.0));
        assert_abs_diff_eq!(pose.heading, 0.0, epsilon = 1e-12);

        assert!(gps_initialise(&[fix(0.0, 0.0, 0.0), fix(1.0, 0.1, 0.0)], threshold).is_none());

        let pose = gps_initialise(&[fix(0.0, 0.0, 0.0), fix(1.0, 0.0, 2.0)], threshold).unwrap();
        assert_abs_diff_eq!(pose.heading, PI / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn confidence_bound_definition() {
        let entry = StateLogEntry {
            timestamp: 0.0,
            arc_length: 0.0,
            pose: Pose2D::identity(),
            covariance: diag(1.0, 4.0, 0.01),
            last_source: None,
        };
        let zero = StateLogEntry {
            covariance: Matrix3::zeros(),
            ..entry
        };
        let bounds = confidence_bound(&[entry, zero]);
        assert_abs_diff_eq!(bounds[0].easting, 1.96, epsilon = 1e-12);
        assert_abs_diff_eq!(bounds[0].northing, 3.92, epsilon = 1e-12);
        assert_abs_diff_eq!(bounds[0].heading, 0.196, epsilon = 1e-12);
        assert_eq!((bounds[1].easting, bounds[1].northing), (0.0, 0.0));
    }

    // --- strategy replay tests on small simulated datasets ---

    fn test_sensors() -> SensorSpec {
        SensorSpec {
            lidar: LidarSpec {
                max_range: 25.0,
                fov: std::f64::consts::TAU,
                detection_probability: 1.0,
                position_sigma: 0.0,
                clutter_rate: 0.0,
                period: 0.5,
            },
            gps: GpsSpec {
                sigma: 0.0,
                period: 1.0,
                speed_threshold: 0.5,
            },
            odometry: OdometrySpec {
                velocity_sigma: 0.0,
                yaw_rate_sigma: 0.0,
                yaw_rate_bias: 0.0,
                period: 0.1,
            },
        }
    }

    fn noise_free_config(mode: StrategyMode) -> StrategyConfig {
        let mut cfg = StrategyConfig::for_mode(mode);
        cfg.process_noise = ProcessNoise {
            distance_sigma_per_m: 0.0,
            heading_sigma_per_m: 0.0,
        };
        cfg.gps_sigma = 1e-6; // effectively exact, but keeps S invertible
        cfg
    }

    #[test]
    fn dead_reckoning_tracks_noise_free_truth() {
        let spec = WorldSpec {
            zones: vec![],
            route: RouteSpec {
                points: vec![(0.0, 0.0), (80.0, 0.0), (80.0, 40.0)],
                closed: false,
            },
            gps_dropout_zones: vec![],
            seed: 2,
        };
        let (map, route) = generate_world(&spec).unwrap();
        let ds = simulate_run(&map, &route, &test_sensors(), 2.0, 2, &[]).unwrap();
        let run = run_strategy(
            &ds,
            &map,
            &noise_free_config(StrategyMode::DeadReckoning),
            &IcpConfig::default(),
        )
        .unwrap();
        assert!(run.events.is_empty());
        let last = run.states.last().unwrap();
        let truth = ds.ground_truth.pose_at_time(last.timestamp);
        assert!(
            last.pose.position_distance(&truth) < 1e-6,
            "final error {}",
            last.pose.position_distance(&truth)
        );
    }

    #[test]
    fn initialisation_fails_without_motion() {
        // All fixes at the same spot: heading can never qualify.
        let ds = Dataset {
            ground_truth: crate::world::Trajectory::from_timed_poses(vec![
                (0.0, Pose2D::identity()),
                (1.0, Pose2D::identity()),
            ])
            .unwrap(),
            odometry: vec![],
            gps: vec![fix(0.0, 5.0, 5.0), fix(1.0, 5.0, 5.0), fix(2.0, 5.0, 5.0)],
            frames: vec![],
        };
        let map = FeatureMap::new(vec![]).unwrap();
        let err = run_strategy(
            &ds,
            &map,
            &StrategyConfig::for_mode(StrategyMode::Gps),
            &IcpConfig::default(),
        )
        .unwrap_err();
        assert_eq!(err, FilterError::InitialisationFailed);
    }

    #[test]
    fn pole_and_pole_corner_identical_without_corners() {
        let spec = WorldSpec {
            zones: vec![FeatureZone {
                interval: (0.0, 120.0),
                poles_per_100m: 25.0,
                corners_per_100m: 0.0,
            }],
            route: RouteSpec {
                points: vec![(0.0, 0.0), (120.0, 0.0)],
                closed: false,
            },
            gps_dropout_zones: vec![],
            seed: 31,
        };
        let (map, route) = generate_world(&spec).unwrap();
        let mut sensors = test_sensors();
        sensors.gps.sigma = 2.0;
        sensors.lidar.position_sigma = 0.05;
        sensors.odometry.velocity_sigma = 0.04;
        sensors.odometry.yaw_rate_sigma = 0.006;
        let ds = simulate_run(&map, &route, &sensors, 2.0, 31, &[]).unwrap();
        let icp = IcpConfig::default();
        let a = run_strategy(
            &ds,
            &map,
            &StrategyConfig::for_mode(StrategyMode::Pole),
            &icp,
        )
        .unwrap();
        let b = run_strategy(
            &ds,
            &map,
            &StrategyConfig::for_mode(StrategyMode::PoleCorner),
            &icp,
        )
        .unwrap();
        assert_eq!(a, b);
        assert!(a.events.iter().any(|e| e.source == UpdateSource::Icp && e.accepted));
    }

    #[test]
    fn gps_events_absent_inside_dropout_zone() {
        let spec = WorldSpec {
            zones: vec![],
            route: RouteSpec {
                points: vec![(0.0, 0.0), (300.0, 0.0)],
                closed: false,
            },
            gps_dropout_zones: vec![(100.0, 200.0)],
            seed: 8,
        };
        let (map, route) = generate_world(&spec).unwrap();
        let mut sensors = test_sensors();
        sensors.gps.sigma = 2.0;
        let ds = simulate_run(&map, &route, &sensors, 2.0, 8, &spec.gps_dropout_zones).unwrap();
        let run = run_strategy(
            &ds,
            &map,
            &StrategyConfig::for_mode(StrategyMode::Gps),
            &IcpConfig::default(),
        )
        .unwrap();
        let inside: Vec<_> = run
            .events
            .iter()
            .filter(|e| e.accepted && e.arc_length > 101.0 && e.arc_length < 199.0)
            .collect();
        assert!(inside.is_empty(), "unexpected events in dropout zone: {inside:?}");
        assert!(run.events.iter().any(|e| e.accepted));
    }

    #[test]
    fn covariance_stays_psd_under_long_replay() {
        let spec = WorldSpec {
            zones: vec![FeatureZone {
                interval: (0.0, 200.0),
                poles_per_100m: 20.0,
                corners_per_100m: 10.0,
            }],
            route: RouteSpec {
                points: vec![(0.0, 0.0), (200.0, 0.0)],
                closed: false,
            },
            gps_dropout_zones: vec![],
            seed: 13,
        };
        let (map, route) = generate_world(&spec).unwrap();
        let mut sensors = test_sensors();
        sensors.gps.sigma = 2.0;
        sensors.lidar.position_sigma = 0.05;
        sensors.odometry.velocity_sigma = 0.04;
        sensors.odometry.yaw_rate_sigma = 0.006;
        sensors.odometry.yaw_rate_bias = 0.002;
        let ds = simulate_run(&map, &route, &sensors, 2.0, 13, &[]).unwrap();
        for mode in StrategyMode::ALL {
            let run = run_strategy(
                &ds,
                &map,
                &StrategyConfig::for_mode(mode),
                &IcpConfig::default(),
            )
            .unwrap();
            for entry in &run.states {
                let st = FilterState::new(entry.pose, entry.covariance, entry.timestamp);
                assert!(
                    st.min_covariance_eigenvalue() >= -PSD_TOLERANCE,
                    "{mode}: eigenvalue {} at t={}",
                    st.min_covariance_eigenvalue(),
                    entry.timestamp
                );
            }
        }
    }
}
