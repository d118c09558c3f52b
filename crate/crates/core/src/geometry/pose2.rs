use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use std::fmt;
use std::ops::Mul;

use super::{normalize_angle, Pose3};

const SMALL_ANGLE: f64 = 1e-5;

/// Planar pose `(x, y, yaw)` with yaw kept in (-pi, pi].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Pose2 {
    x: f64,
    y: f64,
    yaw: f64,
}

impl From<[f64; 3]> for Pose2 {
    fn from(v: [f64; 3]) -> Self {
        Pose2::new(v[0], v[1], v[2])
    }
}

impl From<Pose2> for [f64; 3] {
    fn from(p: Pose2) -> Self {
        [p.x, p.y, p.yaw]
    }
}

impl fmt::Display for Pose2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Pose2({:.4}, {:.4}, {:.4})", self.x, self.y, self.yaw)
    }
}

impl Default for Pose2 {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose2 {
    pub fn new(x: f64, y: f64, yaw: f64) -> Self {
        Self {
            x,
            y,
            yaw: normalize_angle(yaw),
        }
    }

    pub fn identity() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn yaw(&self) -> f64 {
        self.yaw
    }

    pub fn translation(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }

    pub fn rotation(&self) -> Matrix2<f64> {
        let (s, c) = self.yaw.sin_cos();
        Matrix2::new(c, -s, s, c)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.yaw.is_finite()
    }

    /// `self * other`: express `other` (given in this frame) in the parent frame.
    pub fn compose(&self, other: &Pose2) -> Pose2 {
        let t = self.translation() + self.rotation() * other.translation();
        Pose2::new(t.x, t.y, self.yaw + other.yaw)
    }

    pub fn inverse(&self) -> Pose2 {
        let t = -(self.rotation().transpose() * self.translation());
        Pose2::new(t.x, t.y, -self.yaw)
    }

    /// Pose of `other` relative to `self`, i.e. `self⁻¹ · other`.
    pub fn between(&self, other: &Pose2) -> Pose2 {
        self.inverse().compose(other)
    }

    pub fn transform_point(&self, p: &Vector2<f64>) -> Vector2<f64> {
        self.rotation() * p + self.translation()
    }

    pub fn log(&self) -> Twist2 {
        let theta = self.yaw;
        let (a, b) = v_coefficients(theta);
        // V = [[a, -b], [b, a]], so V⁻¹ = [[a, b], [-b, a]] / (a² + b²)
        let det = a * a + b * b;
        let rho = Vector2::new(
            (a * self.x + b * self.y) / det,
            (-b * self.x + a * self.y) / det,
        );
        Twist2 { rho, theta }
    }

    /// Adjoint acting on twists ordered `(rho_x, rho_y, theta)`.
    pub fn adjoint(&self) -> Matrix3<f64> {
        let r = self.rotation();
        Matrix3::new(
            r[(0, 0)],
            r[(0, 1)],
            self.y,
            r[(1, 0)],
            r[(1, 1)],
            -self.x,
            0.0,
            0.0,
            1.0,
        )
    }

    /// Embed as a planar SE(3) transform: `z = 0`, roll = pitch = 0.
    pub fn lift(&self) -> Pose3 {
        let (s, c) = self.yaw.sin_cos();
        let rotation = Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
        Pose3::from_parts_unchecked(rotation, Vector3::new(self.x, self.y, 0.0))
    }
}

impl Mul for Pose2 {
    type Output = Pose2;

    fn mul(self, rhs: Pose2) -> Pose2 {
        self.compose(&rhs)
    }
}

impl<'a> Mul<&'a Pose2> for &'a Pose2 {
    type Output = Pose2;

    fn mul(self, rhs: &'a Pose2) -> Pose2 {
        self.compose(rhs)
    }
}

/// `(sin θ / θ, (1 - cos θ) / θ)` with a series near zero.
fn v_coefficients(theta: f64) -> (f64, f64) {
    if theta.abs() < SMALL_ANGLE {
        let t2 = theta * theta;
        (1.0 - t2 / 6.0, theta / 2.0 - theta * t2 / 24.0)
    } else {
        let half = (0.5 * theta).sin();
        (theta.sin() / theta, 2.0 * half * half / theta)
    }
}

/// Tangent vector of SE(2): translation part `rho`, rotation `theta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Twist2 {
    pub rho: Vector2<f64>,
    pub theta: f64,
}

impl Twist2 {
    pub fn new(rho_x: f64, rho_y: f64, theta: f64) -> Self {
        Self {
            rho: Vector2::new(rho_x, rho_y),
            theta,
        }
    }

    pub fn zero() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn to_vector(&self) -> Vector3<f64> {
        Vector3::new(self.rho.x, self.rho.y, self.theta)
    }

    pub fn norm(&self) -> f64 {
        self.to_vector().norm()
    }

    pub fn exp(&self) -> Pose2 {
        let (a, b) = v_coefficients(self.theta);
        let v = Matrix2::new(a, -b, b, a);
        let t = v * self.rho;
        Pose2::new(t.x, t.y, self.theta)
    }

    /// Right Jacobian: `exp(ξ + δ) ≈ exp(ξ) · exp(Jr(ξ) δ)`.
    pub fn right_jacobian(&self) -> Matrix3<f64> {
        let th = self.theta;
        let (r1, r2) = (self.rho.x, self.rho.y);
        let (a, b) = v_coefficients(th);
        // (θ - sin θ)/θ² and (1 - cos θ)/θ²
        let (c, d) = if th.abs() < SMALL_ANGLE {
            let t2 = th * th;
            (th / 6.0 - th * t2 / 120.0, 0.5 - t2 / 24.0)
        } else {
            let half = (0.5 * th).sin();
            ((th - th.sin()) / (th * th), 2.0 * half * half / (th * th))
        };
        Matrix3::new(
            a,
            b,
            r1 * c - r2 * d,
            -b,
            a,
            r1 * d + r2 * c,
            0.0,
            0.0,
            1.0,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn close(a: &Pose2, b: &Pose2, tol: f64) -> bool {
        (a.x - b.x).abs() < tol
            && (a.y - b.y).abs() < tol
            && normalize_angle(a.yaw - b.yaw).abs() < tol
    }

    #[test]
    fn compose_inverse_is_identity() {
        let p = Pose2::new(1.2, -0.4, 2.9);
        assert!(close(&(p * p.inverse()), &Pose2::identity(), 1e-12));
        assert!(close(&(p.inverse() * p), &Pose2::identity(), 1e-12));
    }

    #[test]
    fn yaw_wraps_after_compose() {
        let p = Pose2::new(0.0, 0.0, 3.0);
        let q = p * p;
        assert!(q.yaw() > -PI && q.yaw() <= PI);
        assert!((q.yaw() - (6.0 - 2.0 * PI)).abs() < 1e-12);
    }

    #[test]
    fn exp_log_round_trip() {
        for &(x, y, yaw) in &[
            (0.0, 0.0, 0.0),
            (1.0, 2.0, 0.3),
            (-0.5, 0.1, -3.1),
            (0.2, -0.7, 1e-9),
            (3.0, 1.0, PI),
        ] {
            let p = Pose2::new(x, y, yaw);
            assert!(close(&p.log().exp(), &p, 1e-12), "{p}");
        }
    }

    #[test]
    fn pure_translation_log_is_translation() {
        let t = Pose2::new(0.3, 0.4, 0.0).log();
        assert_eq!(t.to_vector(), Vector3::new(0.3, 0.4, 0.0));
    }

    #[test]
    fn right_jacobian_matches_finite_differences() {
        let xi = Twist2::new(0.4, -0.3, 0.8);
        let jr = xi.right_jacobian();
        let base = xi.exp();
        let h = 1e-6;
        for k in 0..3 {
            let mut dv = Vector3::zeros();
            dv[k] = h;
            let plus = Twist2::from_vector(&(xi.to_vector() + dv)).exp();
            let minus = Twist2::from_vector(&(xi.to_vector() - dv)).exp();
            let col = (base.between(&plus).log().to_vector()
                - base.between(&minus).log().to_vector())
                / (2.0 * h);
            for r in 0..3 {
                assert!((col[r] - jr[(r, k)]).abs() < 1e-7, "({r},{k})");
            }
        }
        // small-angle branch agrees with the closed form just outside it
        let a = Twist2::new(0.4, -0.3, 1.1e-5).right_jacobian();
        let b = Twist2::new(0.4, -0.3, 0.9e-5).right_jacobian();
        assert!((a - b).abs().max() < 1e-5);
    }

    #[test]
    fn adjoint_moves_twists_between_frames() {
        let t = Pose2::new(0.7, -1.1, 0.6);
        let xi = Twist2::new(0.2, 0.1, -0.3);
        let lhs = t * xi.exp() * t.inverse();
        let rhs = Twist2::from_vector(&(t.adjoint() * xi.to_vector())).exp();
        assert!(close(&lhs, &rhs, 1e-12));
    }

    #[test]
    fn lift_is_planar() {
        let p = Pose2::new(1.0, 2.0, 0.3).lift();
        assert_eq!(p.translation().z, 0.0);
        let e = p.euler();
        assert!(e.roll.abs() < 1e-15 && e.pitch.abs() < 1e-15);
        assert!((e.yaw - 0.3).abs() < 1e-15);
    }
}
