//! Localization error metrics and the per-stage summary table.

use std::io::Write;

use crate::geometry::{map_origin_transform, normalize_angle, GeometryError, Pose2, Pose3};
use crate::posegraph::Observed;
use crate::simulator::{SimulationTrace, Stage};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("sequence lengths differ: {0} ground-truth vs {1} estimated poses")]
    LengthMismatch(usize, usize),
    #[error("no poses to evaluate")]
    Empty,
    #[error("no estimate for rendezvous {0}")]
    MissingRendezvous(usize),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("i/o: {0}")]
    Io(String),
}

fn check_lengths(gt: usize, est: usize) -> Result<(), MetricsError> {
    if gt != est {
        return Err(MetricsError::LengthMismatch(gt, est));
    }
    if gt == 0 {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

/// `sqrt(mean ‖log(T_gt⁻¹ T_est)∨‖²)`. Metres and radians are mixed without
/// weighting.
pub fn ate(gt: &[Pose3], est: &[Pose3]) -> Result<f64, MetricsError> {
    check_lengths(gt.len(), est.len())?;
    let mut sum = 0.0;
    for (g, e) in gt.iter().zip(est) {
        let v = g.between(e).log()?.to_vector();
        sum += v.norm_squared();
    }
    Ok((sum / gt.len() as f64).sqrt())
}

/// [`ate`] on planar poses lifted into SE(3).
pub fn ate_planar(gt: &[Pose2], est: &[Pose2]) -> Result<f64, MetricsError> {
    let lift = |p: &[Pose2]| p.iter().map(Pose2::lift).collect::<Vec<_>>();
    ate(&lift(gt), &lift(est))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

/// Absolute per-axis errors: x and y in centimetres, yaw in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize)]
pub struct DofErrorStats {
    pub x_cm: MeanStd,
    pub y_cm: MeanStd,
    pub yaw_deg: MeanStd,
}

pub fn dof_error_stats(gt: &[Pose2], est: &[Pose2]) -> Result<DofErrorStats, MetricsError> {
    check_lengths(gt.len(), est.len())?;
    let collect = |f: &dyn Fn(&Pose2, &Pose2) -> f64| -> Vec<f64> { gt.iter().zip(est).map(|(g, e)| f(g, e)).collect() };
    Ok(DofErrorStats {
        x_cm: MeanStd::of(&collect(&|g, e| 100.0 * (e.x() - g.x()).abs())),
        y_cm: MeanStd::of(&collect(&|g, e| 100.0 * (e.y() - g.y()).abs())),
        yaw_deg: MeanStd::of(&collect(&|g, e| normalize_angle(e.yaw() - g.yaw()).abs().to_degrees())),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapFusionError {
    pub rotation_deg: f64,
    pub translation_cm: f64,
}

/// Compares the chained start-frame transform `A0→Ai · Ai→Bi · Bi→B0`
/// against the true `A0→B0`.
pub fn map_fusion_error_from_parts(
    a0_ai: &Pose3,
    ai_bi: &Pose3,
    bi_b0: &Pose3,
    truth_a0_b0: &Pose3,
) -> MapFusionError {
    let est = map_origin_transform(a0_ai, ai_bi, bi_b0);
    MapFusionError {
        rotation_deg: truth_a0_b0.between(&est).rotation_angle().to_degrees(),
        translation_cm: 100.0 * (est.translation() - truth_a0_b0.translation()).norm(),
    }
}

/// The most complete stage present in the trace.
pub fn best_stage(trace: &SimulationTrace) -> Option<Stage> {
    [Stage::Full, Stage::ImlPgo, Stage::ImlIr, Stage::Iml]
        .into_iter()
        .find(|s| trace.stage(*s).is_some())
}

/// Map-fusion error at rendezvous `index` using both robots' odometry and
/// the most complete stage's relative estimate.
pub fn map_fusion_error(trace: &SimulationTrace, index: usize) -> Result<MapFusionError, MetricsError> {
    let missing = || MetricsError::MissingRendezvous(index);
    let stage = best_stage(trace).ok_or_else(missing)?;
    let slot = index.checked_sub(1).ok_or_else(missing)?;
    let estimate = trace
        .stage(stage)
        .and_then(|s| s.estimates.get(slot).copied().flatten())
        .ok_or_else(missing)?;
    let ai_bi = match trace.measurements[slot].observed {
        Observed::B => estimate,
        Observed::A => estimate.inverse(),
    };
    let s = &trace.scenario;
    Ok(map_fusion_error_from_parts(
        &trace.odom_a[index].lift(),
        &ai_bi.lift(),
        &trace.odom_b[index].inverse().lift(),
        &s.truth_a[0].between(&s.truth_b[0]).lift(),
    ))
}

/// One row of the stage comparison table.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SummaryRow {
    pub seed: u64,
    pub stage: String,
    pub samples: usize,
    pub x_mean_cm: f64,
    pub x_std_cm: f64,
    pub y_mean_cm: f64,
    pub y_std_cm: f64,
    pub yaw_mean_deg: f64,
    pub yaw_std_deg: f64,
    pub ate: f64,
}

pub fn summarize(trace: &SimulationTrace) -> Result<Vec<SummaryRow>, MetricsError> {
    trace
        .stages
        .iter()
        .map(|s| {
            let (gt, est) = trace.estimate_pairs(s.stage).expect("stage is present");
            let stats = dof_error_stats(&gt, &est)?;
            Ok(SummaryRow {
                seed: trace.seed,
                stage: s.stage.name().to_string(),
                samples: gt.len(),
                x_mean_cm: stats.x_cm.mean,
                x_std_cm: stats.x_cm.std,
                y_mean_cm: stats.y_cm.mean,
                y_std_cm: stats.y_cm.std,
                yaw_mean_deg: stats.yaw_deg.mean,
                yaw_std_deg: stats.yaw_deg.std,
                ate: ate_planar(&gt, &est)?,
            })
        })
        .collect()
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], writer: W) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row).map_err(|e| MetricsError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| MetricsError::Io(e.to_string()))
}
