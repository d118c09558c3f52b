//! Scalar training losses for the localization network and the refinement
//! network: presence BCE, weighted pose MSE, point matching, mask
//! cross-entropy and optical-flow endpoint error.

use crate::geometry::{Pose2, Pose3};
use crate::nn::Tensor;
use crate::refinement::RobotModel;

/// Probability clamp for the BCE terms.
pub const BCE_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LossError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("batch lengths differ: {0} predictions vs {1} labels")]
    LengthMismatch(usize, usize),
    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch((usize, usize, usize), (usize, usize, usize)),
    #[error("robot model has no points")]
    EmptyModel,
    #[error("invalid loss weight {0}; weights must be positive")]
    InvalidWeight(f64),
}

/// Yaw weight inside the pose loss and pose-loss weight inside the total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub yaw: f64,
    pub pose: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { yaw: 3.0, pose: 2.0 }
    }
}

impl LossWeights {
    pub fn new(yaw: f64, pose: f64) -> Result<Self, LossError> {
        for w in [yaw, pose] {
            if !(w > 0.0) {
                return Err(LossError::InvalidWeight(w));
            }
        }
        Ok(Self { yaw, pose })
    }
}

/// Supervision target: presence flag and, when present, the planar pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseLabel {
    pub present: bool,
    pub pose: Pose2,
}

impl PoseLabel {
    pub fn present(pose: Pose2) -> Self {
        Self { present: true, pose }
    }

    /// Background image: all pose fields zero.
    pub fn absent() -> Self {
        Self {
            present: false,
            pose: Pose2::identity(),
        }
    }
}

fn check_batch(pred: usize, truth: usize) -> Result<(), LossError> {
    if pred != truth {
        return Err(LossError::LengthMismatch(pred, truth));
    }
    if pred == 0 {
        return Err(LossError::EmptyBatch);
    }
    Ok(())
}

/// Binary cross-entropy on presence probabilities, averaged over the batch.
pub fn observation_loss(predicted: &[f64], present: &[bool]) -> Result<f64, LossError> {
    check_batch(predicted.len(), present.len())?;
    let sum: f64 = predicted
        .iter()
        .zip(present)
        .map(|(&p, &o)| {
            let p = p.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON);
            if o {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(sum / predicted.len() as f64)
}

/// Mean of `Δx² + Δy² + w_yaw·Δψ²`. Yaw differences are not wrapped.
pub fn localization_loss(
    predicted: &[Pose2],
    truth: &[Pose2],
    weights: &LossWeights,
) -> Result<f64, LossError> {
    check_batch(predicted.len(), truth.len())?;
    let sum: f64 = predicted
        .iter()
        .zip(truth)
        .map(|(p, t)| {
            (t.x() - p.x()).powi(2)
                + (t.y() - p.y()).powi(2)
                + weights.yaw * (t.yaw() - p.yaw()).powi(2)
        })
        .sum();
    Ok(sum / predicted.len() as f64)
}

/// `L_o + w_pose · L_p`.
pub fn total_loss(observation: f64, localization: f64, weights: &LossWeights) -> f64 {
    observation + weights.pose * localization
}

/// Mean L1 distance between model points under the current and the target pose.
pub fn point_matching_loss(
    current: &Pose3,
    target: &Pose3,
    model: &RobotModel,
) -> Result<f64, LossError> {
    let points = model.points();
    if points.is_empty() {
        return Err(LossError::EmptyModel);
    }
    let sum: f64 = points
        .iter()
        .map(|p| (current.transform_point(p) - target.transform_point(p)).abs().sum())
        .sum();
    Ok(sum / points.len() as f64)
}

/// Mean sigmoid cross-entropy between mask logits and a {0, 1} mask.
pub fn mask_loss(logits: &Tensor, truth: &Tensor) -> Result<f64, LossError> {
    if logits.shape() != truth.shape() {
        return Err(LossError::ShapeMismatch(logits.shape(), truth.shape()));
    }
    if logits.is_empty() {
        return Err(LossError::EmptyBatch);
    }
    // max(z, 0) - z·t + ln(1 + e^{-|z|})
    let sum: f64 = logits
        .as_slice()
        .iter()
        .zip(truth.as_slice())
        .map(|(&z, &t)| z.max(0.0) - z * t + (-z.abs()).exp().ln_1p())
        .sum();
    Ok(sum / logits.len() as f64)
}

/// Mean Euclidean norm of the flow difference over pixels. Flow fields have
/// two channels `(u, v)`.
pub fn epe_flow_loss(predicted: &Tensor, truth: &Tensor) -> Result<f64, LossError> {
    if predicted.shape() != truth.shape() || predicted.channels() != 2 {
        return Err(LossError::ShapeMismatch(predicted.shape(), truth.shape()));
    }
    let pixels = predicted.width() * predicted.height();
    if pixels == 0 {
        return Err(LossError::EmptyBatch);
    }
    let (pu, pv) = (predicted.channel(0), predicted.channel(1));
    let (tu, tv) = (truth.channel(0), truth.channel(1));
    let sum: f64 = (0..pixels)
        .map(|p| (pu[p] - tu[p]).hypot(pv[p] - tv[p]))
        .sum();
    Ok(sum / pixels as f64)
}

/// Weights of the refinement network's three-part loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefinementLossWeights {
    pub point: f64,
    pub mask: f64,
    pub flow: f64,
}

impl Default for RefinementLossWeights {
    fn default() -> Self {
        Self {
            point: 1.0,
            mask: 1.0,
            flow: 1.0,
        }
    }
}

impl RefinementLossWeights {
    pub fn combine(&self, point: f64, mask: f64, flow: f64) -> f64 {
        weighted_sum(&[(self.point, point), (self.mask, mask), (self.flow, flow)])
    }
}

/// `Σ wᵢ·lᵢ` over `(weight, loss)` pairs.
pub fn weighted_sum(terms: &[(f64, f64)]) -> f64 {
    terms.iter().map(|(w, l)| w * l).sum()
}
