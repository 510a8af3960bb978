//! Planar pose algebra: SE(2) composition, angle wrapping, point transforms.
//!
//! Coordinates are an abstract metric frame (Easting, Northing) in meters;
//! headings are radians measured from the Easting axis, always wrapped to
//! the half-open interval `(-pi, pi]`.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

/// Wrap an angle to `(-pi, pi]`.
///
/// The interval is half-open at `-pi`: `wrap_angle(-PI) == PI`.
/// Panics on non-finite input.
pub fn wrap_angle(theta: f64) -> f64 {
    assert!(theta.is_finite(), "wrap_angle: non-finite angle {theta}");
    let a = theta.rem_euclid(TAU); // [0, 2pi)
    if a > PI {
        a - TAU
    } else {
        a
    }
}

/// A 2D point in whatever frame the context implies (sensor or map).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Planar pose: position in meters, heading in radians from East, wrapped
/// to `(-pi, pi]`.
///
/// A pose doubles as the rigid transform taking coordinates expressed in
/// its own frame into the global frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose2D {
    pub easting: f64,
    pub northing: f64,
    pub heading: f64,
}

impl Pose2D {
    /// Build a pose, wrapping the heading.
    pub fn new(easting: f64, northing: f64, heading: f64) -> Self {
        Pose2D {
            easting,
            northing,
            heading: wrap_angle(heading),
        }
    }

    pub const fn identity() -> Self {
        Pose2D {
            easting: 0.0,
            northing: 0.0,
            heading: 0.0,
        }
    }

    /// Group composition: apply `other` first, then `self`.
    ///
    /// `other` is interpreted in `self`'s frame and mapped to the global
    /// frame, so `a.compose(b)` is the transform a∘b.
    pub fn compose(&self, other: &Pose2D) -> Pose2D {
        let (s, c) = self.heading.sin_cos();
        Pose2D::new(
            self.easting + other.easting * c - other.northing * s,
            self.northing + other.easting * s + other.northing * c,
            self.heading + other.heading,
        )
    }

    /// Inverse transform: `p.compose(p.inverse())` is the identity.
    pub fn inverse(&self) -> Pose2D {
        let (s, c) = self.heading.sin_cos();
        Pose2D::new(
            -(c * self.easting + s * self.northing),
            s * self.easting - c * self.northing,
            -self.heading,
        )
    }

    /// Map a point from this pose's frame into the global frame.
    pub fn transform_point(&self, p: &Point2) -> Point2 {
        let (s, c) = self.heading.sin_cos();
        Point2::new(
            self.easting + p.x * c - p.y * s,
            self.northing + p.x * s + p.y * c,
        )
    }

    /// Map a global point into this pose's frame.
    pub fn inverse_transform_point(&self, p: &Point2) -> Point2 {
        let dx = p.x - self.easting;
        let dy = p.y - self.northing;
        let (s, c) = self.heading.sin_cos();
        Point2::new(c * dx + s * dy, -s * dx + c * dy)
    }

    pub fn position(&self) -> Point2 {
        Point2::new(self.easting, self.northing)
    }

    /// Euclidean distance between the two positions (heading ignored).
    pub fn position_distance(&self, other: &Pose2D) -> f64 {
        self.position().distance(&other.position())
    }

    /// Wrapped heading difference `self.heading - other.heading`.
    pub fn heading_difference(&self, other: &Pose2D) -> f64 {
        wrap_angle(self.heading - other.heading)
    }

    /// Kinematic midpoint step: advance `delta_distance` along the heading
    /// halfway through the turn `delta_heading`.
    pub fn advance(&self, delta_distance: f64, delta_heading: f64) -> Pose2D {
        let mid = self.heading + 0.5 * delta_heading;
        Pose2D::new(
            self.easting + delta_distance * mid.cos(),
            self.northing + delta_distance * mid.sin(),
            self.heading + delta_heading,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn wrap_angle_basics() {
        assert_eq!(wrap_angle(0.0), 0.0);
        assert_abs_diff_eq!(wrap_angle(3.0 * PI), PI, epsilon = 1e-12);
        assert_eq!(wrap_angle(-PI), PI);
        assert_abs_diff_eq!(wrap_angle(PI + 0.1), -PI + 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_angle(-7.0 * PI / 2.0), PI / 2.0, epsilon = 1e-12);
    }

    #[test]
    #[should_panic]
    fn wrap_angle_rejects_nan() {
        wrap_angle(f64::NAN);
    }

    #[test]
    fn compose_identity() {
        let p = Pose2D::new(3.5, -2.0, 0.7);
        let q = Pose2D::identity().compose(&p);
        assert_eq!(q, p);
        let r = p.compose(&Pose2D::identity());
        assert_eq!(r, p);
    }

    #[test]
    fn compose_quarter_turn() {
        let a = Pose2D::new(0.0, 0.0, PI / 2.0);
        let b = Pose2D::new(1.0, 0.0, 0.0);
        let c = a.compose(&b);
        assert_abs_diff_eq!(c.easting, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.northing, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.heading, PI / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn transform_point_cases() {
        let p = Point2::new(3.0, 4.0);
        let t = Pose2D::identity().transform_point(&p);
        assert_eq!((t.x, t.y), (3.0, 4.0));

        let t = Pose2D::new(10.0, 0.0, 0.0).transform_point(&p);
        assert_eq!((t.x, t.y), (13.0, 4.0));

        let t = Pose2D::new(0.0, 0.0, PI).transform_point(&Point2::new(1.0, 0.0));
        assert_abs_diff_eq!(t.x, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t.y, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn inverse_transform_round_trip() {
        let pose = Pose2D::new(5.0, -3.0, 1.2);
        let p = Point2::new(2.0, 7.0);
        let g = pose.transform_point(&p);
        let back = pose.inverse_transform_point(&g);
        assert_abs_diff_eq!(back.x, p.x, epsilon = 1e-12);
        assert_abs_diff_eq!(back.y, p.y, epsilon = 1e-12);
    }

    fn arb_pose() -> impl Strategy<Value = Pose2D> {
        (-100.0..100.0f64, -100.0..100.0f64, -10.0..10.0f64)
            .prop_map(|(e, n, h)| Pose2D::new(e, n, h))
    }

    proptest! {
        #[test]
        fn heading_always_wrapped(p in arb_pose(), q in arb_pose()) {
            for pose in [p.compose(&q), p.inverse(), p.advance(1.0, 0.3)] {
                prop_assert!(pose.heading > -PI && pose.heading <= PI);
            }
        }

        #[test]
        fn compose_inverse_is_identity(p in arb_pose()) {
            let id = p.compose(&p.inverse());
            prop_assert!(id.easting.abs() < 1e-9);
            prop_assert!(id.northing.abs() < 1e-9);
            prop_assert!(wrap_angle(id.heading).abs() < 1e-9);
        }

        #[test]
        fn compose_associative(a in arb_pose(), b in arb_pose(), c in arb_pose()) {
            let left = a.compose(&b).compose(&c);
            let right = a.compose(&b.compose(&c));
            prop_assert!((left.easting - right.easting).abs() < 1e-9);
            prop_assert!((left.northing - right.northing).abs() < 1e-9);
            prop_assert!(wrap_angle(left.heading - right.heading).abs() < 1e-9);
        }
    }
}
