//! Brute-force reference implementations used to cross-check the optimised
//! paths. These trade speed for independence: no closed forms, no shared
//! shortcuts with the code under test. The `verify` subcommand runs them
//! from the CLI.

use crate::metrics::{pau_window_starts, MetricsError, PauCurve};
use crate::pose::{Point2, Pose2D};

/// Brute-force alignment result. `degenerate` marks inputs where rotation
/// is unobservable (all source points coincide); translation is still
/// meaningful there, the rotation is fixed at zero by convention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BruteAlignment {
    pub pose: Pose2D,
    pub degenerate: bool,
}

fn sse(pairs: &[(Point2, Point2)], pose: &Pose2D) -> f64 {
    pairs
        .iter()
        .map(|(p, q)| {
            let moved = pose.transform_point(p);
            let dx = moved.x - q.x;
            let dy = moved.y - q.y;
            dx * dx + dy * dy
        })
        .sum()
}

/// Exhaustive grid search over (dx, dy, dtheta) minimising the pair SSE,
/// refined level by level until the grid step drops to `resolution`.
///
/// Each level scans a 21x21x21 lattice centred on the best cell so far and
/// shrinks the half-width to twice the previous step, so the optimum cannot
/// escape between levels. The SSE landscape of rigid alignment is unimodal
/// in theta once translation is optimised out, which keeps the coarse-to-
/// fine sweep global. Intended for small instances (<= 10 pairs).
pub fn brute_rigid_align(pairs: &[(Point2, Point2)], resolution: f64) -> BruteAlignment {
    assert!(!pairs.is_empty(), "brute_rigid_align needs at least one pair");
    assert!(pairs.len() <= 10, "oracle is for small instances");
    assert!(resolution > 0.0);

    let n = pairs.len() as f64;
    let mut pc = Point2::new(0.0, 0.0);
    let mut qc = Point2::new(0.0, 0.0);
    for (p, q) in pairs {
        pc.x += p.x / n;
        pc.y += p.y / n;
        qc.x += q.x / n;
        qc.y += q.y / n;
    }
    let spread = pairs
        .iter()
        .map(|(p, _)| p.distance(&pc))
        .fold(0.0, f64::max);
    if spread < 1e-12 {
        return BruteAlignment {
            pose: Pose2D::new(qc.x - pc.x, qc.y - pc.y, 0.0),
            degenerate: true,
        };
    }

    // Initial search box: translation centred between centroids, wide
    // enough to cover q̄ - R(θ)p̄ for any rotation; heading covers the
    // full circle.
    let mut cx = qc.x - pc.x;
    let mut cy = qc.y - pc.y;
    let mut ct = 0.0f64;
    let mut half_xy = 2.0 * (pc.x.hypot(pc.y)) + 10.0 * resolution + 1.0;
    let mut half_t = std::f64::consts::PI;

    const POINTS_PER_AXIS: i32 = 10; // lattice is -10..=10 per axis

    let mut best = (f64::INFINITY, Pose2D::identity());
    loop {
        let step_xy = half_xy / POINTS_PER_AXIS as f64;
        let step_t = half_t / POINTS_PER_AXIS as f64;
        for it in -POINTS_PER_AXIS..=POINTS_PER_AXIS {
            let theta = ct + it as f64 * step_t;
            for ix in -POINTS_PER_AXIS..=POINTS_PER_AXIS {
                let x = cx + ix as f64 * step_xy;
                for iy in -POINTS_PER_AXIS..=POINTS_PER_AXIS {
                    let y = cy + iy as f64 * step_xy;
                    let pose = Pose2D::new(x, y, theta);
                    let e = sse(pairs, &pose);
                    if e < best.0 {
                        best = (e, pose);
                    }
                }
            }
        }
        cx = best.1.easting;
        cy = best.1.northing;
        ct = best.1.heading;
        if step_xy <= resolution && step_t <= resolution {
            break;
        }
        half_xy = (2.0 * step_xy).max(resolution);
        half_t = (2.0 * step_t).max(resolution);
    }

    BruteAlignment {
        pose: best.1,
        degenerate: false,
    }
}

/// Literal window-by-window PAU enumeration with explicit membership
/// counting. Must agree with `metrics::pau_curve` bit for bit.
pub fn brute_pau(
    event_arcs: &[f64],
    trajectory_length: f64,
    lengths: &[f64],
    stride: f64,
) -> Result<PauCurve, MetricsError> {
    if stride <= 0.0 || lengths.is_empty() {
        return Err(MetricsError::InvalidPauRequest(
            "stride must be positive and lengths non-empty".into(),
        ));
    }
    for w in lengths.windows(2) {
        if w[1] <= w[0] {
            return Err(MetricsError::InvalidPauRequest(
                "lengths must be strictly increasing".into(),
            ));
        }
    }
    let max_len = *lengths.last().unwrap();
    if max_len > trajectory_length {
        return Err(MetricsError::InvalidPauRequest(format!(
            "lengths must lie in [0, {trajectory_length}]"
        )));
    }
    let starts = pau_window_starts(trajectory_length, max_len, stride);
    if starts.is_empty() {
        return Err(MetricsError::EmptyStartSet {
            traj: trajectory_length,
            max_len,
        });
    }

    let mut probabilities = Vec::with_capacity(lengths.len());
    for &l in lengths {
        let mut update_free = 0usize;
        for &s in &starts {
            let mut has_update = false;
            for &e in event_arcs {
                if e > s && e < s + l {
                    has_update = true;
                }
            }
            if !has_update {
                update_free += 1;
            }
        }
        probabilities.push(update_free as f64 / starts.len() as f64);
    }

    Ok(PauCurve {
        lengths: lengths.to_vec(),
        probabilities,
        window_stride: stride,
        trajectory_length,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcher::rigid_align;
    use crate::metrics::pau_curve;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn brute_align_identity_for_aligned_pairs() {
        let pairs: Vec<_> = [(0.0, 0.0), (3.0, 1.0), (1.0, 4.0)]
            .iter()
            .map(|&(x, y)| (Point2::new(x, y), Point2::new(x, y)))
            .collect();
        let r = brute_rigid_align(&pairs, 1e-3);
        assert!(!r.degenerate);
        assert!(r.pose.position().norm() < 1e-3);
        assert!(r.pose.heading.abs() < 1e-3);
    }

    #[test]
    fn brute_align_recovers_planted_transform() {
        let planted = Pose2D::new(2.0, 3.0, 0.3);
        let pairs: Vec<_> = [(0.0, 0.0), (4.0, 1.0), (1.0, 5.0)]
            .iter()
            .map(|&(x, y)| {
                let p = Point2::new(x, y);
                (p, planted.transform_point(&p))
            })
            .collect();
        let r = brute_rigid_align(&pairs, 1e-3);
        assert!((r.pose.easting - 2.0).abs() < 2e-3);
        assert!((r.pose.northing - 3.0).abs() < 2e-3);
        assert!((r.pose.heading - 0.3).abs() < 2e-3);
    }

    #[test]
    fn brute_align_single_pair_is_degenerate() {
        let r = brute_rigid_align(&[(Point2::new(1.0, 2.0), Point2::new(4.0, 6.0))], 1e-3);
        assert!(r.degenerate);
        assert_eq!((r.pose.easting, r.pose.northing), (3.0, 4.0));
        assert_eq!(r.pose.heading, 0.0);
    }

    #[test]
    fn brute_align_agrees_with_closed_form() {
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        for _ in 0..25 {
            let planted = Pose2D::new(
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(-2.5..2.5),
            );
            let n = rng.random_range(3..8);
            let pairs: Vec<_> = (0..n)
                .map(|_| {
                    let p = Point2::new(rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0));
                    (p, planted.transform_point(&p))
                })
                .collect();
            let exact = rigid_align(&pairs).unwrap();
            let brute = brute_rigid_align(&pairs, 1e-3);
            assert!((exact.easting - brute.pose.easting).abs() < 2e-3);
            assert!((exact.northing - brute.pose.northing).abs() < 2e-3);
            assert!((exact.heading - brute.pose.heading).abs() < 2e-3);
        }
    }

    #[test]
    fn brute_pau_fig3() {
        let curve = brute_pau(&[12.0, 22.0, 42.0], 50.0, &[10.0], 5.0).unwrap();
        assert_eq!(curve.probabilities, vec![3.0 / 9.0]);
    }

    #[test]
    fn brute_pau_no_events_is_all_ones() {
        let curve = brute_pau(&[], 30.0, &[1.0, 5.0, 10.0], 0.5).unwrap();
        assert!(curve.probabilities.iter().all(|&p| p == 1.0));
    }

    proptest! {
        #[test]
        fn brute_pau_matches_fast_path(
            seed in 0u64..200,
            n_events in 0usize..20,
        ) {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let traj: f64 = rng.random_range(20.0..50.0);
            let events: Vec<f64> = (0..n_events).map(|_| rng.random_range(0.0..traj)).collect();
            let lengths: Vec<f64> = (1..=10).map(|k| k as f64 * traj / 12.0).collect();
            let stride = rng.random_range(0.3..1.5);
            let fast = pau_curve(&events, traj, &lengths, stride).unwrap();
            let brute = brute_pau(&events, traj, &lengths, stride).unwrap();
            prop_assert_eq!(fast, brute);
        }
    }
}
