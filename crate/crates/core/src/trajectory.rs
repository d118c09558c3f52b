//! Plain-text trajectory files.
//!
//! Planar: `index x y yaw`. Spatial: `index x y z qw qx qy qz`. Fields are
//! whitespace separated, `#` starts a comment.

use std::fmt::Write as _;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use crate::geometry::{GeometryError, Pose2, Pose3};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrajectoryError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {source}")]
    Geometry {
        line: usize,
        #[source]
        source: GeometryError,
    },
}

/// A parsed trajectory; every pose carries its file index.
#[derive(Debug, Clone, PartialEq)]
pub enum Trajectory {
    Planar(Vec<(usize, Pose2)>),
    Spatial(Vec<(usize, Pose3)>),
}

impl Trajectory {
    pub fn len(&self) -> usize {
        match self {
            Trajectory::Planar(p) => p.len(),
            Trajectory::Spatial(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_se3(&self) -> Vec<Pose3> {
        match self {
            Trajectory::Planar(p) => p.iter().map(|(_, q)| q.lift()).collect(),
            Trajectory::Spatial(p) => p.iter().map(|(_, q)| *q).collect(),
        }
    }

    pub fn to_se2(&self) -> Vec<Pose2> {
        match self {
            Trajectory::Planar(p) => p.iter().map(|(_, q)| *q).collect(),
            Trajectory::Spatial(p) => p.iter().map(|(_, q)| q.project()).collect(),
        }
    }

    /// Detects the format from the field count of the first record.
    pub fn parse(text: &str) -> Result<Self, TrajectoryError> {
        let mut planar = Vec::new();
        let mut spatial = Vec::new();
        let mut width = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| TrajectoryError::Parse { line: n + 1, message };
            let fields: Vec<&str> = line.split_whitespace().collect();
            let expected = *width.get_or_insert(fields.len());
            if fields.len() != expected || !(expected == 4 || expected == 8) {
                return Err(err(format!("expected 4 or 8 fields consistently, found {}", fields.len())));
            }
            let index = fields[0]
                .parse::<usize>()
                .map_err(|e| err(format!("bad index '{}': {e}", fields[0])))?;
            let values = fields[1..]
                .iter()
                .map(|s| s.parse::<f64>().map_err(|e| err(format!("bad number '{s}': {e}"))))
                .collect::<Result<Vec<_>, _>>()?;
            if values.iter().any(|v| !v.is_finite()) {
                return Err(err("non-finite value".into()));
            }
            if expected == 4 {
                planar.push((index, Pose2::new(values[0], values[1], values[2])));
            } else {
                let q = Quaternion::new(values[3], values[4], values[5], values[6]);
                if q.norm() < 1e-12 {
                    return Err(err("zero quaternion".into()));
                }
                let rotation = UnitQuaternion::from_quaternion(q).to_rotation_matrix().into_inner();
                let pose = Pose3::new(rotation, Vector3::new(values[0], values[1], values[2]))
                    .map_err(|source| TrajectoryError::Geometry { line: n + 1, source })?;
                spatial.push((index, pose));
            }
        }
        Ok(match width {
            Some(8) => Trajectory::Spatial(spatial),
            _ => Trajectory::Planar(planar),
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        match self {
            Trajectory::Planar(poses) => {
                out.push_str("# index x y yaw\n");
                for (i, p) in poses {
                    let _ = writeln!(out, "{i} {:.16e} {:.16e} {:.16e}", p.x(), p.y(), p.yaw());
                }
            }
            Trajectory::Spatial(poses) => {
                out.push_str("# index x y z qw qx qy qz\n");
                for (i, p) in poses {
                    let t = p.translation();
                    let q = UnitQuaternion::from_matrix(p.rotation());
                    let _ = writeln!(
                        out,
                        "{i} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e}",
                        t.x, t.y, t.z, q.w, q.i, q.j, q.k
                    );
                }
            }
        }
        out
    }
}
