use crate::geometry::{EulerAngles, Pose2, Pose3};

use super::PoseGraphError;

/// Which robot was in the other's field of view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Observed {
    A,
    B,
}

impl Observed {
    pub fn observer(self) -> Robot {
        match self {
            Observed::A => Robot::B,
            Observed::B => Robot::A,
        }
    }

    pub fn robot(self) -> Robot {
        match self {
            Observed::A => Robot::A,
            Observed::B => Robot::B,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Observed::A => Observed::B,
            Observed::B => Observed::A,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
pub enum Robot {
    A,
    B,
}

impl Robot {
    pub fn name(self) -> &'static str {
        match self {
            Robot::A => "A",
            Robot::B => "B",
        }
    }
}

/// One rendezvous: the refined pose of the observed robot in the observer's
/// body frame together with both robots' odometry at that instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RendezvousObservation {
    pub index: usize,
    pub t_ref: Pose3,
    /// Odometry of A relative to its own start pose.
    pub t_a: Pose3,
    /// Odometry of B relative to its own start pose.
    pub t_b: Pose3,
    pub observed: Observed,
}

impl RendezvousObservation {
    pub fn euler(&self) -> EulerAngles {
        self.t_ref.euler()
    }

    pub fn odometry(&self, robot: Robot) -> Pose2 {
        match robot {
            Robot::A => self.t_a.project(),
            Robot::B => self.t_b.project(),
        }
    }
}

/// Chronological record of rendezvous for a pair of robots.
#[derive(Debug, Clone, PartialEq)]
pub struct RendezvousLog {
    /// Start pose of A in the common frame; this is the usual gauge anchor.
    pub origin_a: Pose2,
    /// Start pose of B in the common frame when known. Otherwise it is
    /// recovered from the first observation during graph construction.
    pub origin_b: Option<Pose2>,
    observations: Vec<RendezvousObservation>,
}

impl Default for RendezvousLog {
    fn default() -> Self {
        Self::new()
    }
}

impl RendezvousLog {
    pub fn new() -> Self {
        Self {
            origin_a: Pose2::identity(),
            origin_b: None,
            observations: Vec::new(),
        }
    }

    pub fn push(&mut self, obs: RendezvousObservation) -> Result<(), PoseGraphError> {
        if let Some(last) = self.observations.last() {
            if obs.index <= last.index {
                return Err(PoseGraphError::IndexOrder {
                    previous: last.index,
                    index: obs.index,
                });
            }
        }
        self.observations.push(obs);
        Ok(())
    }

    pub fn observations(&self) -> &[RendezvousObservation] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Number of observations in which A was observed.
    pub fn alpha(&self) -> usize {
        self.observations.iter().filter(|o| o.observed == Observed::A).count()
    }

    /// Number of observations in which B was observed.
    pub fn beta(&self) -> usize {
        self.len() - self.alpha()
    }

    fn with_observations(&self, observations: Vec<RendezvousObservation>) -> Self {
        Self {
            origin_a: self.origin_a,
            origin_b: self.origin_b,
            observations,
        }
    }
}

/// Weighting and gating parameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InfoParams {
    pub kappa: f64,
    pub tau: f64,
    /// Roll/pitch gate in degrees.
    pub sigma_deg: f64,
}

impl Default for InfoParams {
    fn default() -> Self {
        Self {
            kappa: 100.0,
            tau: 0.5,
            sigma_deg: 10.0,
        }
    }
}

impl InfoParams {
    pub fn new(kappa: f64, tau: f64, sigma_deg: f64) -> Result<Self, PoseGraphError> {
        let p = Self { kappa, tau, sigma_deg };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), PoseGraphError> {
        for (name, v) in [("kappa", self.kappa), ("tau", self.tau), ("sigma", self.sigma_deg)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(PoseGraphError::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn sigma(&self) -> f64 {
        self.sigma_deg.to_radians()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rejection {
    pub index: usize,
    pub observed: Observed,
    pub roll_deg: f64,
    pub pitch_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RejectionReport {
    pub rejected: Vec<Rejection>,
    pub retained: usize,
}

impl RejectionReport {
    pub fn rejected_indices(&self) -> Vec<usize> {
        self.rejected.iter().map(|r| r.index).collect()
    }
}

/// True when the roll or pitch of `t_ref` strictly exceeds the gate.
pub fn is_erroneous(t_ref: &Pose3, params: &InfoParams) -> bool {
    let e = t_ref.euler();
    let sigma = params.sigma();
    e.roll.abs() > sigma || e.pitch.abs() > sigma
}

/// Drops observations whose refined pose is visibly tilted.
pub fn delete_erroneous_nodes(
    log: &RendezvousLog,
    params: &InfoParams,
) -> Result<(RendezvousLog, RejectionReport), PoseGraphError> {
    params.validate()?;
    let mut report = RejectionReport::default();
    let mut kept = Vec::with_capacity(log.len());
    for obs in log.observations() {
        if is_erroneous(&obs.t_ref, params) {
            let e = obs.euler();
            report.rejected.push(Rejection {
                index: obs.index,
                observed: obs.observed,
                roll_deg: e.roll.to_degrees(),
                pitch_deg: e.pitch.to_degrees(),
            });
        } else {
            kept.push(*obs);
        }
    }
    report.retained = kept.len();
    if kept.is_empty() {
        return Err(PoseGraphError::AllObservationsRejected {
            rejected: report.rejected.len(),
        });
    }
    Ok((log.with_observations(kept), report))
}
