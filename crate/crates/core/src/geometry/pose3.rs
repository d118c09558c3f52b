use nalgebra::{Matrix3, Vector3, Vector6};
use std::fmt;
use std::ops::Mul;

use super::{
    normalize_angle, EulerAngles, GeometryError, Pose2, LOG_SINGULARITY_MARGIN,
    ROTATION_TOLERANCE,
};

const SERIES_ANGLE: f64 = 1e-4;

/// Rigid transform in SE(3) stored as a rotation matrix and a translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose3 {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Default for Pose3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl fmt::Display for Pose3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let e = self.euler();
        write!(
            f,
            "Pose3(t=[{:.4}, {:.4}, {:.4}], rpy=[{:.4}, {:.4}, {:.4}])",
            self.translation.x,
            self.translation.y,
            self.translation.z,
            e.roll,
            e.pitch,
            e.yaw
        )
    }
}

impl Pose3 {
    /// Validates `RᵀR = I` and `det R = +1` to within 1e-9.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        if rotation.iter().chain(translation.iter()).any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let orthogonality = (rotation.transpose() * rotation - Matrix3::identity())
            .abs()
            .max();
        let det = rotation.determinant();
        if orthogonality > ROTATION_TOLERANCE || (det - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(GeometryError::InvalidRotation { orthogonality, det });
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub(crate) fn from_parts_unchecked(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::from_parts_unchecked(Matrix3::identity(), Vector3::zeros())
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self::from_parts_unchecked(Matrix3::identity(), Vector3::new(x, y, z))
    }

    pub fn from_euler(euler: &EulerAngles, translation: Vector3<f64>) -> Self {
        Self::from_parts_unchecked(euler.to_rotation(), translation)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn euler(&self) -> EulerAngles {
        EulerAngles::from_rotation(&self.rotation)
    }

    pub fn compose(&self, other: &Pose3) -> Pose3 {
        Self::from_parts_unchecked(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn inverse(&self) -> Pose3 {
        let rt = self.rotation.transpose();
        Self::from_parts_unchecked(rt, -(rt * self.translation))
    }

    /// `self⁻¹ · other`.
    pub fn between(&self, other: &Pose3) -> Pose3 {
        self.inverse().compose(other)
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Rotation angle in [0, pi].
    pub fn rotation_angle(&self) -> f64 {
        let w = vee(&(self.rotation - self.rotation.transpose())) * 0.5;
        let cos = (self.rotation.trace() - 1.0) * 0.5;
        w.norm().atan2(cos)
    }

    /// Logarithm followed by the vee operator.
    pub fn log(&self) -> Result<Twist, GeometryError> {
        let w = vee(&(self.rotation - self.rotation.transpose())) * 0.5;
        let sin = w.norm();
        let cos = (self.rotation.trace() - 1.0) * 0.5;
        let theta = sin.atan2(cos);
        if theta > std::f64::consts::PI - LOG_SINGULARITY_MARGIN {
            return Err(GeometryError::NearSingularRotation {
                angle: theta,
                margin: LOG_SINGULARITY_MARGIN,
            });
        }
        let omega = if theta < SERIES_ANGLE {
            w * (1.0 + theta * theta / 6.0)
        } else {
            w * (theta / sin)
        };
        let hat_w = hat(&omega);
        let d = if theta < SERIES_ANGLE {
            1.0 / 12.0 + theta * theta / 720.0
        } else {
            let half = (0.5 * theta).sin();
            (1.0 - theta * theta.sin() / (4.0 * half * half)) / (theta * theta)
        };
        let v_inv = Matrix3::identity() - hat_w * 0.5 + hat_w * hat_w * d;
        Ok(Twist {
            rho: v_inv * self.translation,
            theta: omega,
        })
    }

    /// Planar projection keeping `(x, y, yaw)`; z, roll and pitch are dropped.
    pub fn project(&self) -> Pose2 {
        let yaw = self.rotation[(1, 0)].atan2(self.rotation[(0, 0)]);
        Pose2::new(self.translation.x, self.translation.y, normalize_angle(yaw))
    }
}

impl Mul for Pose3 {
    type Output = Pose3;

    fn mul(self, rhs: Pose3) -> Pose3 {
        self.compose(&rhs)
    }
}

impl<'a> Mul<&'a Pose3> for &'a Pose3 {
    type Output = Pose3;

    fn mul(self, rhs: &'a Pose3) -> Pose3 {
        self.compose(rhs)
    }
}

/// Origin of map B expressed in map A's origin frame from the chain
/// `A0 -> Ai -> Bi -> B0`.
pub fn map_origin_transform(a0_ai: &Pose3, ai_bi: &Pose3, bi_b0: &Pose3) -> Pose3 {
    a0_ai.compose(ai_bi).compose(bi_b0)
}

/// SE(3) tangent vector: translation part `rho`, then rotation `theta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Twist {
    pub rho: Vector3<f64>,
    pub theta: Vector3<f64>,
}

impl Twist {
    pub fn new(rho: Vector3<f64>, theta: Vector3<f64>) -> Self {
        Self { rho, theta }
    }

    pub fn zero() -> Self {
        Self::new(Vector3::zeros(), Vector3::zeros())
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self::new(v.fixed_rows::<3>(0).into(), v.fixed_rows::<3>(3).into())
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        let mut v = Vector6::zeros();
        v.fixed_rows_mut::<3>(0).copy_from(&self.rho);
        v.fixed_rows_mut::<3>(3).copy_from(&self.theta);
        v
    }

    pub fn norm(&self) -> f64 {
        self.to_vector().norm()
    }

    pub fn scale(&self, s: f64) -> Twist {
        Twist::new(self.rho * s, self.theta * s)
    }

    pub fn exp(&self) -> Pose3 {
        let theta = self.theta.norm();
        let w = hat(&self.theta);
        let w2 = w * w;
        let (a, b, c) = if theta < SERIES_ANGLE {
            let t2 = theta * theta;
            (1.0 - t2 / 6.0, 0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0)
        } else {
            let half = (0.5 * theta).sin();
            (
                theta.sin() / theta,
                2.0 * half * half / (theta * theta),
                (theta - theta.sin()) / (theta * theta * theta),
            )
        };
        let rotation = Matrix3::identity() + w * a + w2 * b;
        let v = Matrix3::identity() + w * b + w2 * c;
        Pose3::from_parts_unchecked(rotation, v * self.rho)
    }
}

impl std::ops::Add for Twist {
    type Output = Twist;

    fn add(self, rhs: Twist) -> Twist {
        Twist::new(self.rho + rhs.rho, self.theta + rhs.theta)
    }
}

pub(crate) fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn max_diff(a: &Pose3, b: &Pose3) -> f64 {
        (a.rotation - b.rotation)
            .abs()
            .max()
            .max((a.translation - b.translation).abs().max())
    }

    fn sample() -> Pose3 {
        Pose3::from_euler(
            &EulerAngles::new(0.3, -0.2, 2.0),
            Vector3::new(1.0, -2.0, 0.5),
        )
    }

    #[test]
    fn identity_and_inverse_laws() {
        let t = sample();
        assert!(max_diff(&(Pose3::identity() * t), &t) < 1e-15);
        assert!(max_diff(&(t * t.inverse()), &Pose3::identity()) < 1e-12);
    }

    #[test]
    fn pure_translations_add() {
        let p = Pose3::from_translation(1.0, 0.0, 0.0) * Pose3::from_translation(0.0, 2.0, 0.0);
        assert_eq!(*p.translation(), Vector3::new(1.0, 2.0, 0.0));
        let inv = Pose3::from_translation(1.0, 2.0, 3.0).inverse();
        assert_eq!(*inv.translation(), Vector3::new(-1.0, -2.0, -3.0));
    }

    #[test]
    fn yaw_inverse_negates() {
        let t = Pose2::new(0.0, 0.0, 0.7).lift();
        assert!((t.inverse().euler().yaw + 0.7).abs() < 1e-15);
    }

    #[test]
    fn log_identity_is_zero() {
        assert_eq!(Pose3::identity().log().unwrap().to_vector(), Vector6::zeros());
    }

    #[test]
    fn log_quarter_turn() {
        let t = Pose2::new(0.0, 0.0, FRAC_PI_2).lift().log().unwrap();
        assert!((t.theta - Vector3::new(0.0, 0.0, FRAC_PI_2)).norm() < 1e-15);
        assert!(t.rho.norm() < 1e-15);
    }

    #[test]
    fn log_rejects_half_turn() {
        let t = Pose2::new(0.0, 0.0, PI).lift();
        assert!(matches!(
            t.log(),
            Err(GeometryError::NearSingularRotation { .. })
        ));
        let ok = Pose2::new(0.0, 0.0, PI - 1e-3).lift();
        assert!(ok.log().is_ok());
    }

    #[test]
    fn exp_log_round_trip_small_and_large() {
        for theta in [0.0, 1e-9, 1e-5, 0.9e-4, 1.1e-4, 0.5, 2.5, 3.0] {
            let tw = Twist::new(
                Vector3::new(0.4, -1.0, 0.3),
                Vector3::new(1.0, 2.0, -0.5).normalize() * theta,
            );
            let p = tw.exp();
            let back = p.log().unwrap().exp();
            assert!(max_diff(&p, &back) < 1e-12, "theta={theta}");
        }
    }

    #[test]
    fn new_validates_rotation() {
        let bad = Matrix3::identity() * 1.01;
        assert!(Pose3::new(bad, Vector3::zeros()).is_err());
        let reflect = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(Pose3::new(reflect, Vector3::zeros()).is_err());
        assert!(Pose3::new(*sample().rotation(), Vector3::zeros()).is_ok());
    }

    #[test]
    fn projection_drops_roll() {
        let p = Pose3::from_euler(
            &EulerAngles::from_degrees(9.0, 0.0, 17.0),
            Vector3::new(1.0, 2.0, 0.1),
        );
        let q = p.project();
        assert_eq!((q.x(), q.y()), (1.0, 2.0));
        assert!((q.yaw() - 17f64.to_radians()).abs() < 1e-12);
        assert_eq!(Pose2::new(1.0, 2.0, 0.3).lift().project(), Pose2::new(1.0, 2.0, 0.3));
    }

    #[test]
    fn map_origin_chain() {
        let i = Pose3::identity();
        assert_eq!(map_origin_transform(&i, &i, &i), i);
        let t = Pose3::from_translation(4.5, 0.0, 0.0);
        assert_eq!(map_origin_transform(&i, &t, &i), t);
    }
}
