//! Iterative pose refinement: starting from an initial SE(3) estimate, a
//! predictor repeatedly emits a corrective transform `ΔT` that is applied
//! on the left, `T ← ΔT · T`.
//!
//! The learned render-and-compare network is represented by the
//! [`DeltaPredictor`] trait. Oracle implementations that know the target
//! pose stand in for it in simulation.

use nalgebra::Vector3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::geometry::{GeometryError, Pose2, Pose3, Twist};
use crate::losses::{point_matching_loss, LossError};
use crate::rng::stream_rng;

pub const DEFAULT_ITERATIONS: usize = 4;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RefineError {
    #[error("predictor failed at iteration {iteration}: {source}")]
    PredictorFailure {
        iteration: usize,
        #[source]
        source: PredictorError,
    },
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error("iterations must be at least 1")]
    ZeroIterations,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PredictorError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("invalid predictor parameter: {0}")]
    InvalidParameter(String),
    #[error("{0}")]
    Other(String),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("robot model has no points")]
    Empty,
    #[error("point {0} is not finite")]
    NonFinite(usize),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Points sampled on the robot's surface, in the robot body frame.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotModel {
    points: Vec<Vector3<f64>>,
    radius: f64,
}

impl RobotModel {
    pub fn new(points: Vec<Vector3<f64>>) -> Result<Self, ModelError> {
        if points.is_empty() {
            return Err(ModelError::Empty);
        }
        if let Some(i) = points.iter().position(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(ModelError::NonFinite(i));
        }
        let radius = points.iter().map(|p| p.norm()).fold(0.0, f64::max);
        Ok(Self { points, radius })
    }

    /// Area-uniform samples on the surface of an axis-aligned box resting
    /// on the ground plane and centred on the body origin.
    pub fn sample_box_surface(
        length: f64,
        width: f64,
        height: f64,
        count: usize,
        seed: u64,
    ) -> Result<Self, ModelError> {
        let mut rng = stream_rng(seed, 0x6d6f_64656c, 0);
        let (hl, hw) = (length / 2.0, width / 2.0);
        // (area, sampler) for the six faces
        let faces: [(f64, Box<dyn Fn(f64, f64) -> Vector3<f64>>); 6] = [
            (length * width, Box::new(move |u, v| Vector3::new((u - 0.5) * length, (v - 0.5) * width, 0.0))),
            (length * width, Box::new(move |u, v| Vector3::new((u - 0.5) * length, (v - 0.5) * width, height))),
            (length * height, Box::new(move |u, v| Vector3::new((u - 0.5) * length, -hw, v * height))),
            (length * height, Box::new(move |u, v| Vector3::new((u - 0.5) * length, hw, v * height))),
            (width * height, Box::new(move |u, v| Vector3::new(-hl, (u - 0.5) * width, v * height))),
            (width * height, Box::new(move |u, v| Vector3::new(hl, (u - 0.5) * width, v * height))),
        ];
        let total: f64 = faces.iter().map(|(a, _)| a).sum();
        let points = (0..count)
            .map(|_| {
                let mut pick = rng.random::<f64>() * total;
                let face = faces
                    .iter()
                    .find(|(a, _)| {
                        pick -= a;
                        pick < 0.0
                    })
                    .unwrap_or(&faces[5]);
                (face.1)(rng.random(), rng.random())
            })
            .collect();
        Self::new(points)
    }

    /// A small differential-drive robot body, 500 samples.
    pub fn default_robot() -> Self {
        Self::sample_box_surface(0.455, 0.381, 0.237, 500, 0).expect("non-empty model")
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Largest distance of a model point from the body origin.
    pub fn bounding_radius(&self) -> f64 {
        self.radius
    }

    /// One `x y z` triple per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, ModelError> {
        let mut points = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let values = line
                .split_whitespace()
                .map(str::parse::<f64>)
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| ModelError::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            if values.len() != 3 {
                return Err(ModelError::Parse {
                    line: i + 1,
                    message: format!("expected 3 values, found {}", values.len()),
                });
            }
            points.push(Vector3::new(values[0], values[1], values[2]));
        }
        Self::new(points)
    }

    pub fn to_text(&self) -> String {
        self.points
            .iter()
            .map(|p| format!("{:e} {:e} {:e}\n", p.x, p.y, p.z))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinementConfig {
    pub iterations: usize,
    /// Stop once `‖log ΔT‖` drops below `early_stop_tolerance`.
    pub early_stop: bool,
    pub early_stop_tolerance: f64,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        Self {
            iterations: DEFAULT_ITERATIONS,
            early_stop: false,
            early_stop_tolerance: 1e-6,
        }
    }
}

/// What the predictor may look at. The target pose is only used by oracles
/// and by the point-matching loss recorded in the trace.
#[derive(Debug, Clone, Copy)]
pub struct RefinementContext<'a> {
    pub target: Pose3,
    pub model: &'a RobotModel,
}

pub trait DeltaPredictor {
    /// Relative correction to left-multiply onto `current`.
    fn predict(&mut self, current: &Pose3, ctx: &RefinementContext<'_>) -> Result<Pose3, PredictorError>;
}

impl<P: DeltaPredictor + ?Sized> DeltaPredictor for &mut P {
    fn predict(&mut self, current: &Pose3, ctx: &RefinementContext<'_>) -> Result<Pose3, PredictorError> {
        (**self).predict(current, ctx)
    }
}

/// Always predicts the identity; the loop then leaves the pose untouched.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityPredictor;

impl DeltaPredictor for IdentityPredictor {
    fn predict(&mut self, _: &Pose3, _: &RefinementContext<'_>) -> Result<Pose3, PredictorError> {
        Ok(Pose3::identity())
    }
}

/// Returns the exact correction `T_target · T_current⁻¹`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactOracle;

impl DeltaPredictor for ExactOracle {
    fn predict(&mut self, current: &Pose3, ctx: &RefinementContext<'_>) -> Result<Pose3, PredictorError> {
        Ok(ctx.target * current.inverse())
    }
}

/// Predicts `exp(γ · log(T_target · T_current⁻¹) + ξ)` with tangent noise
/// `ξ ~ N(0, diag(σ_t² I₃, σ_r² I₃))`.
#[derive(Debug, Clone)]
pub struct DampedNoisyOracle {
    gamma: f64,
    translation_noise: Option<Normal<f64>>,
    rotation_noise: Option<Normal<f64>>,
    rng: ChaCha8Rng,
}

impl DampedNoisyOracle {
    pub fn new(gamma: f64, sigma_t: f64, sigma_r: f64, seed: u64) -> Result<Self, PredictorError> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(PredictorError::InvalidParameter(format!("gamma {gamma} outside (0, 1]")));
        }
        let noise = |s: f64, what: &str| -> Result<Option<Normal<f64>>, PredictorError> {
            if !(s >= 0.0) || !s.is_finite() {
                return Err(PredictorError::InvalidParameter(format!("{what} sigma {s}")));
            }
            Ok((s > 0.0).then(|| Normal::new(0.0, s).expect("positive sigma")))
        };
        Ok(Self {
            gamma,
            translation_noise: noise(sigma_t, "translation")?,
            rotation_noise: noise(sigma_r, "rotation")?,
            rng: stream_rng(seed, 0x6f72_6163_6c65, 0),
        })
    }

    pub fn with_rng(mut self, rng: ChaCha8Rng) -> Self {
        self.rng = rng;
        self
    }

    fn sample(dist: &Option<Normal<f64>>, rng: &mut ChaCha8Rng) -> Vector3<f64> {
        match dist {
            Some(d) => Vector3::new(d.sample(rng), d.sample(rng), d.sample(rng)),
            None => Vector3::zeros(),
        }
    }
}

impl DeltaPredictor for DampedNoisyOracle {
    fn predict(&mut self, current: &Pose3, ctx: &RefinementContext<'_>) -> Result<Pose3, PredictorError> {
        let error = (ctx.target * current.inverse()).log()?;
        let noise = Twist::new(
            Self::sample(&self.translation_noise, &mut self.rng),
            Self::sample(&self.rotation_noise, &mut self.rng),
        );
        Ok((error.scale(self.gamma) + noise).exp())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinementStep {
    pub pose: Pose3,
    /// Point-matching loss of `pose` against the context target.
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub pose: Pose3,
    /// Initial pose first, then the pose after each applied correction.
    pub trace: Vec<RefinementStep>,
    pub deltas: Vec<Pose3>,
}

impl Refinement {
    pub fn iterations(&self) -> usize {
        self.deltas.len()
    }

    pub fn final_loss(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |s| s.loss)
    }
}

/// Runs the refinement loop `T₁ = T_init`, `T_{t+1} = ΔT_t · T_t`.
pub fn refine<P: DeltaPredictor + ?Sized>(
    initial: &Pose3,
    predictor: &mut P,
    cfg: &RefinementConfig,
    ctx: &RefinementContext<'_>,
) -> Result<Refinement, RefineError> {
    if cfg.iterations == 0 {
        return Err(RefineError::ZeroIterations);
    }
    let mut current = *initial;
    let mut trace = Vec::with_capacity(cfg.iterations + 1);
    let mut deltas = Vec::with_capacity(cfg.iterations);
    trace.push(RefinementStep {
        pose: current,
        loss: point_matching_loss(&current, &ctx.target, ctx.model)?,
    });
    for iteration in 0..cfg.iterations {
        let delta = predictor
            .predict(&current, ctx)
            .map_err(|source| RefineError::PredictorFailure { iteration, source })?;
        current = delta * current;
        deltas.push(delta);
        trace.push(RefinementStep {
            pose: current,
            loss: point_matching_loss(&current, &ctx.target, ctx.model)?,
        });
        if cfg.early_stop {
            let step = delta
                .log()
                .map_err(|e| RefineError::PredictorFailure { iteration, source: e.into() })?;
            if step.norm() < cfg.early_stop_tolerance {
                break;
            }
        }
    }
    Ok(Refinement {
        pose: current,
        trace,
        deltas,
    })
}

/// Standard deviations of a planar pose perturbation.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PlanarNoise {
    pub sigma_x: f64,
    pub sigma_y: f64,
    /// Radians.
    pub sigma_yaw: f64,
}

impl PlanarNoise {
    pub const ZERO: PlanarNoise = PlanarNoise {
        sigma_x: 0.0,
        sigma_y: 0.0,
        sigma_yaw: 0.0,
    };

    /// 0.15 m, 0.15 m and 20 degrees: the refinement training perturbation.
    pub fn refinement_training() -> Self {
        Self {
            sigma_x: 0.15,
            sigma_y: 0.15,
            sigma_yaw: 20f64.to_radians(),
        }
    }

    pub fn perturb<R: Rng + ?Sized>(&self, pose: &Pose2, rng: &mut R) -> Pose2 {
        let draw = |s: f64, rng: &mut R| -> f64 {
            if s > 0.0 {
                Normal::new(0.0, s).expect("positive sigma").sample(rng)
            } else {
                0.0
            }
        };
        let dx = draw(self.sigma_x, rng);
        let dy = draw(self.sigma_y, rng);
        let dyaw = draw(self.sigma_yaw, rng);
        Pose2::new(pose.x() + dx, pose.y() + dy, pose.yaw() + dyaw)
    }
}

/// Perturbs a planar ground-truth pose in `x`, `y` and yaw; roll and pitch
/// of the result are zero.
pub fn initial_pose_sampler(target: &Pose3, noise: &PlanarNoise, seed: u64) -> Pose3 {
    let mut rng = stream_rng(seed, 0x696e_6974, 0);
    noise.perturb(&target.project(), &mut rng).lift()
}
