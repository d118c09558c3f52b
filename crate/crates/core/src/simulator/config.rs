use serde::{Deserialize, Serialize};

use crate::posegraph::InfoParams;
use crate::refinement::PlanarNoise;

use super::SimulationError;

/// Path followed by the observed robot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Trajectory {
    /// Circle centred `center_forward` metres ahead of the observer.
    Circle { center_forward: f64, radius: f64 },
    /// `y = amplitude · sin(2π (x − start) / wavelength)` for `x` in
    /// `[start, start + span]`.
    Sinusoid {
        amplitude: f64,
        wavelength: f64,
        span: f64,
        #[serde(default = "default_sinusoid_start")]
        start: f64,
    },
    /// Explicit planar positions, one per rendezvous.
    Waypoints { points: Vec<[f64; 2]> },
}

fn default_sinusoid_start() -> f64 {
    2.5
}

impl Trajectory {
    pub fn circle() -> Self {
        Trajectory::Circle {
            center_forward: 4.5,
            radius: 2.0,
        }
    }

    pub fn sinusoid() -> Self {
        Trajectory::Sinusoid {
            amplitude: 2.5,
            wavelength: 4.0,
            span: 4.0,
            start: default_sinusoid_start(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImlNoise {
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub sigma_yaw_deg: f64,
}

impl Default for ImlNoise {
    fn default() -> Self {
        Self {
            sigma_x: 0.15,
            sigma_y: 0.15,
            sigma_yaw_deg: 20.0,
        }
    }
}

impl ImlNoise {
    pub fn planar(&self) -> PlanarNoise {
        PlanarNoise {
            sigma_x: self.sigma_x,
            sigma_y: self.sigma_y,
            sigma_yaw: self.sigma_yaw_deg.to_radians(),
        }
    }
}

/// Damped noisy oracle standing in for the refinement network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IrConfig {
    pub gamma: f64,
    pub sigma_t: f64,
    pub sigma_r_deg: f64,
    pub iterations: usize,
}

impl Default for IrConfig {
    fn default() -> Self {
        Self {
            gamma: 0.6,
            sigma_t: 0.005,
            sigma_r_deg: 0.3,
            iterations: crate::refinement::DEFAULT_ITERATIONS,
        }
    }
}

/// Per-step Gaussian noise on each robot's SE(2) odometry increment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OdometryNoise {
    pub sigma_t: f64,
    pub sigma_yaw_deg: f64,
}

impl Default for OdometryNoise {
    fn default() -> Self {
        Self {
            sigma_t: 0.001,
            sigma_yaw_deg: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiltAxis {
    Roll,
    Pitch,
}

/// Gross refinement failures: a tilt of `magnitude_deg` about `axis` with a
/// random sign, plus a planar error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutlierConfig {
    pub rate: f64,
    pub magnitude_deg: f64,
    pub axis: TiltAxis,
    pub translation_sigma: f64,
    pub yaw_sigma_deg: f64,
}

impl Default for OutlierConfig {
    fn default() -> Self {
        Self {
            rate: 0.1,
            magnitude_deg: 15.0,
            axis: TiltAxis::Pitch,
            translation_sigma: 0.3,
            yaw_sigma_deg: 45.0,
        }
    }
}

impl OutlierConfig {
    pub fn none() -> Self {
        Self {
            rate: 0.0,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionPolicy {
    /// B observed at odd indices, A observed at even ones.
    Alternate,
    AlwaysA,
    AlwaysB,
}

/// Observer camera cone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldOfView {
    pub half_angle_deg: f64,
    pub min_range: f64,
    pub max_range: f64,
}

impl Default for FieldOfView {
    fn default() -> Self {
        Self {
            half_angle_deg: 45.0,
            min_range: 0.5,
            max_range: 7.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub trajectory: Trajectory,
    pub rendezvous_count: usize,
    /// Observer path as `[x, y, yaw_deg]`, one per rendezvous. The observer
    /// stays at the origin facing +x when absent.
    pub observer_waypoints: Option<Vec<[f64; 3]>>,
    /// Deviation of the observed robot's heading from facing the observer.
    pub heading_wobble_deg: f64,
    pub iml_noise: ImlNoise,
    pub ir: IrConfig,
    pub odom_noise: OdometryNoise,
    pub outlier: OutlierConfig,
    pub direction: DirectionPolicy,
    pub fov: FieldOfView,
    pub info: InfoParams,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            trajectory: Trajectory::circle(),
            rendezvous_count: 20,
            observer_waypoints: None,
            heading_wobble_deg: 20.0,
            iml_noise: ImlNoise::default(),
            ir: IrConfig::default(),
            odom_noise: OdometryNoise::default(),
            outlier: OutlierConfig::default(),
            direction: DirectionPolicy::Alternate,
            fov: FieldOfView::default(),
            info: InfoParams::default(),
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    /// Every noise source and the outlier rate set to zero.
    pub fn noise_free(mut self) -> Self {
        self.iml_noise = ImlNoise {
            sigma_x: 0.0,
            sigma_y: 0.0,
            sigma_yaw_deg: 0.0,
        };
        self.ir.sigma_t = 0.0;
        self.ir.sigma_r_deg = 0.0;
        self.odom_noise = OdometryNoise {
            sigma_t: 0.0,
            sigma_yaw_deg: 0.0,
        };
        self.outlier.rate = 0.0;
        self
    }

    pub fn from_json(text: &str) -> Result<Self, SimulationError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| SimulationError::Config {
            field: format!("line {} column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), SimulationError> {
        let bad = |field: &str, message: String| {
            Err(SimulationError::Config {
                field: field.to_string(),
                message,
            })
        };
        if self.rendezvous_count == 0 {
            return bad("rendezvous_count", "must be at least 1".into());
        }
        let sigmas = [
            ("iml_noise.sigma_x", self.iml_noise.sigma_x),
            ("iml_noise.sigma_y", self.iml_noise.sigma_y),
            ("iml_noise.sigma_yaw_deg", self.iml_noise.sigma_yaw_deg),
            ("ir.sigma_t", self.ir.sigma_t),
            ("ir.sigma_r_deg", self.ir.sigma_r_deg),
            ("odom_noise.sigma_t", self.odom_noise.sigma_t),
            ("odom_noise.sigma_yaw_deg", self.odom_noise.sigma_yaw_deg),
            ("outlier.translation_sigma", self.outlier.translation_sigma),
            ("outlier.yaw_sigma_deg", self.outlier.yaw_sigma_deg),
            ("outlier.magnitude_deg", self.outlier.magnitude_deg),
            ("heading_wobble_deg", self.heading_wobble_deg),
        ];
        for (field, v) in sigmas {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(field, format!("must be a non-negative number, got {v}"));
            }
        }
        if !(0.0..=1.0).contains(&self.outlier.rate) {
            return bad("outlier.rate", format!("must lie in [0, 1], got {}", self.outlier.rate));
        }
        if !(self.ir.gamma > 0.0 && self.ir.gamma <= 1.0) {
            return bad("ir.gamma", format!("must lie in (0, 1], got {}", self.ir.gamma));
        }
        if self.ir.iterations == 0 {
            return bad("ir.iterations", "must be at least 1".into());
        }
        let fov = &self.fov;
        if !(fov.half_angle_deg > 0.0 && fov.min_range >= 0.0 && fov.max_range > fov.min_range) {
            return bad("fov", format!("invalid cone {fov:?}"));
        }
        self.info.validate().or_else(|e| bad("info", e.to_string()))?;
        match &self.trajectory {
            Trajectory::Circle { radius, center_forward } => {
                if !(*radius > 0.0 && center_forward.is_finite()) {
                    return bad("trajectory.circle", "radius must be positive".into());
                }
            }
            Trajectory::Sinusoid {
                amplitude,
                wavelength,
                span,
                start,
            } => {
                if !(*wavelength > 0.0 && *span >= 0.0 && amplitude.is_finite() && start.is_finite()) {
                    return bad("trajectory.sinusoid", "wavelength must be positive and span non-negative".into());
                }
            }
            Trajectory::Waypoints { points } => {
                if points.len() != self.rendezvous_count {
                    return bad(
                        "trajectory.waypoints",
                        format!("{} points for {} rendezvous", points.len(), self.rendezvous_count),
                    );
                }
                if points.iter().flatten().any(|v| !v.is_finite()) {
                    return bad("trajectory.waypoints", "non-finite coordinate".into());
                }
            }
        }
        if let Some(obs) = &self.observer_waypoints {
            if obs.len() != self.rendezvous_count {
                return bad(
                    "observer_waypoints",
                    format!("{} poses for {} rendezvous", obs.len(), self.rendezvous_count),
                );
            }
        }
        Ok(())
    }
}
