//! Rigid-body geometry for planar robots observed through a 3D camera model.
//!
//! [`Pose2`] is the SE(2) pose a ground robot lives in; [`Pose3`] is the
//! SE(3) transform produced by refinement and used for frame chaining.
//! Tangent vectors are [`Twist2`] and [`Twist`] with translation first,
//! rotation last.

mod euler;
mod pose2;
mod pose3;

pub use euler::EulerAngles;
pub use pose2::{Pose2, Twist2};
pub use pose3::{map_origin_transform, Pose3, Twist};

use std::f64::consts::PI;

/// Angle within this distance of pi makes the SO(3) logarithm ill-conditioned.
pub const LOG_SINGULARITY_MARGIN: f64 = 1e-6;

/// Distance from +/-pi/2 pitch at which Euler extraction is flagged.
pub const GIMBAL_MARGIN: f64 = 1e-3;

/// Tolerance used when validating rotation matrices.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("rotation angle {angle} rad is within {margin} of pi; logarithm is ill-conditioned")]
    NearSingularRotation { angle: f64, margin: f64 },
    #[error("matrix is not a proper rotation (orthogonality error {orthogonality:e}, det {det})")]
    InvalidRotation { orthogonality: f64, det: f64 },
    #[error("non-finite value in pose")]
    NonFinite,
}

/// Wraps an angle into (-pi, pi].
pub fn normalize_angle(angle: f64) -> f64 {
    if angle > -PI && angle <= PI {
        return angle;
    }
    let wrapped = angle.rem_euclid(2.0 * PI);
    if wrapped > PI {
        wrapped - 2.0 * PI
    } else {
        wrapped
    }
}
