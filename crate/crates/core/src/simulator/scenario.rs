use rand::Rng;

use crate::geometry::{normalize_angle, Pose2};
use crate::posegraph::{Observed, Robot};
use crate::rng::stream_rng;

use super::config::{DirectionPolicy, FieldOfView, ScenarioConfig, Trajectory};
use super::{streams, SimulationError};

/// Ground truth of one run. Index 0 of each pose list is the robot's start
/// pose, index `k ≥ 1` its pose at rendezvous `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub truth_a: Vec<Pose2>,
    pub truth_b: Vec<Pose2>,
    /// Per rendezvous, starting at rendezvous 1.
    pub observed: Vec<Observed>,
    pub visible: Vec<bool>,
}

impl Scenario {
    pub fn rendezvous_count(&self) -> usize {
        self.observed.len()
    }

    pub fn truth(&self, robot: Robot, k: usize) -> Pose2 {
        match robot {
            Robot::A => self.truth_a[k],
            Robot::B => self.truth_b[k],
        }
    }

    /// True pose of the observed robot in the observer's frame at rendezvous `k ≥ 1`.
    pub fn relative_truth(&self, k: usize) -> Pose2 {
        let observed = self.observed[k - 1];
        self.truth(observed.observer(), k).between(&self.truth(observed.robot(), k))
    }
}

/// Planar positions of the observed robot along its curve.
pub fn curve_positions(trajectory: &Trajectory, count: usize) -> Vec<[f64; 2]> {
    match trajectory {
        Trajectory::Circle { center_forward, radius } => (0..count)
            .map(|k| {
                let angle = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
                [center_forward + radius * angle.cos(), radius * angle.sin()]
            })
            .collect(),
        Trajectory::Sinusoid {
            amplitude,
            wavelength,
            span,
            start,
        } => (0..count)
            .map(|k| {
                let t = if count > 1 { k as f64 / (count - 1) as f64 } else { 0.0 };
                let x = start + span * t;
                let phase = 2.0 * std::f64::consts::PI * (x - start) / wavelength;
                [x, amplitude * phase.sin()]
            })
            .collect(),
        Trajectory::Waypoints { points } => points.clone(),
    }
}

pub fn in_field_of_view(relative: &Pose2, fov: &FieldOfView) -> bool {
    let range = relative.translation().norm();
    let bearing = relative.y().atan2(relative.x());
    range >= fov.min_range && range <= fov.max_range && bearing.abs() <= fov.half_angle_deg.to_radians()
}

fn direction(policy: DirectionPolicy, index: usize) -> Observed {
    match policy {
        DirectionPolicy::AlwaysA => Observed::A,
        DirectionPolicy::AlwaysB => Observed::B,
        DirectionPolicy::Alternate if index % 2 == 1 => Observed::B,
        DirectionPolicy::Alternate => Observed::A,
    }
}

/// Lays out both robots at every rendezvous. The observed robot moves along
/// the configured curve while turned towards the observer, up to a seeded
/// heading wobble. Rendezvous whose target falls outside the observer's
/// camera cone are marked invisible.
pub fn generate_scenario(cfg: &ScenarioConfig) -> Result<Scenario, SimulationError> {
    cfg.validate()?;
    let n = cfg.rendezvous_count;
    let observer: Vec<Pose2> = match &cfg.observer_waypoints {
        Some(w) => w.iter().map(|p| Pose2::new(p[0], p[1], p[2].to_radians())).collect(),
        None => vec![Pose2::identity(); n],
    };
    let wobble = cfg.heading_wobble_deg.to_radians();
    let positions = curve_positions(&cfg.trajectory, n);
    let observed_path: Vec<Pose2> = positions
        .iter()
        .zip(&observer)
        .enumerate()
        .map(|(k, (p, a))| {
            let facing = (a.y() - p[1]).atan2(a.x() - p[0]);
            let offset = if wobble > 0.0 {
                stream_rng(cfg.seed, streams::WOBBLE, k as u64 + 1).random_range(-wobble..=wobble)
            } else {
                0.0
            };
            Pose2::new(p[0], p[1], normalize_angle(facing + offset))
        })
        .collect();

    let mut truth_a = Vec::with_capacity(n + 1);
    let mut truth_b = Vec::with_capacity(n + 1);
    truth_a.push(observer[0]);
    truth_b.push(observed_path[0]);
    truth_a.extend(observer.iter().copied());
    truth_b.extend(observed_path.iter().copied());

    let mut scenario = Scenario {
        truth_a,
        truth_b,
        observed: (1..=n).map(|i| direction(cfg.direction, i)).collect(),
        visible: Vec::with_capacity(n),
    };
    for k in 1..=n {
        let visible = in_field_of_view(&scenario.relative_truth(k), &cfg.fov);
        scenario.visible.push(visible);
    }
    if !scenario.visible.iter().any(|v| *v) {
        return Err(SimulationError::InfeasibleScenario(format!(
            "none of the {n} rendezvous falls inside the observer's field of view"
        )));
    }
    Ok(scenario)
}
