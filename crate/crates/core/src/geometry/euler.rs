use nalgebra::{Matrix3, Rotation3, Vector3};
use std::f64::consts::FRAC_PI_2;

use super::{normalize_angle, GIMBAL_MARGIN};

/// Roll/pitch/yaw in the ZYX convention: `R = Rz(yaw) · Ry(pitch) · Rx(roll)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EulerAngles {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl EulerAngles {
    pub fn new(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self { roll, pitch, yaw }
    }

    pub fn from_degrees(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self::new(roll.to_radians(), pitch.to_radians(), yaw.to_radians())
    }

    pub fn to_rotation(&self) -> Matrix3<f64> {
        let rz = Rotation3::from_axis_angle(&Vector3::z_axis(), self.yaw);
        let ry = Rotation3::from_axis_angle(&Vector3::y_axis(), self.pitch);
        let rx = Rotation3::from_axis_angle(&Vector3::x_axis(), self.roll);
        (rz * ry * rx).into_inner()
    }

    /// Decomposes a rotation matrix. Yaw is wrapped to (-pi, pi]. When the
    /// pitch is at +/-90 degrees roll is set to zero and the remaining
    /// rotation is attributed to yaw; check [`Self::is_gimbal_locked`].
    pub fn from_rotation(r: &Matrix3<f64>) -> Self {
        let pitch = (-r[(2, 0)]).clamp(-1.0, 1.0).asin();
        let cos_pitch = (r[(2, 1)].powi(2) + r[(2, 2)].powi(2)).sqrt();
        if cos_pitch < 1e-12 {
            let yaw = (-r[(0, 1)]).atan2(r[(1, 1)]);
            return Self::new(0.0, pitch, normalize_angle(yaw));
        }
        let roll = r[(2, 1)].atan2(r[(2, 2)]);
        let yaw = r[(1, 0)].atan2(r[(0, 0)]);
        Self::new(roll, pitch, normalize_angle(yaw))
    }

    /// True when pitch is too close to +/-90 degrees for a unique decomposition.
    pub fn is_gimbal_locked(&self) -> bool {
        self.pitch.abs() >= FRAC_PI_2 - GIMBAL_MARGIN
    }

    pub fn to_degrees(&self) -> [f64; 3] {
        [
            self.roll.to_degrees(),
            self.pitch.to_degrees(),
            self.yaw.to_degrees(),
        ]
    }
}
