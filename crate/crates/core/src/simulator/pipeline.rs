use std::io::Write;

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::geometry::{normalize_angle, EulerAngles, Pose2, Pose3, Twist2};
use crate::posegraph::{
    run_pose_graph, Observed, PoseGraph, PoseGraphError, RejectionReport, RendezvousLog,
    RendezvousObservation, Robot, SolverConfig,
};
use crate::refinement::{refine, DampedNoisyOracle, RefinementConfig, RefinementContext, RobotModel};
use crate::rng::stream_rng;

use super::config::{ScenarioConfig, TiltAxis};
use super::scenario::{generate_scenario, Scenario};
use super::{streams, SimulationError, Stage};

/// Surrogate sensor outputs for one rendezvous, shared by every stage.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub index: usize,
    pub observed: Observed,
    /// Presence flag; when false no estimate exists for this rendezvous.
    pub visible: bool,
    pub truth: Pose2,
    pub p_init: Option<Pose2>,
    pub t_ref: Option<Pose3>,
    pub outlier: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageTrace {
    pub stage: Stage,
    /// Estimated pose of the observed robot in the observer frame, per rendezvous.
    pub estimates: Vec<Option<Pose2>>,
    /// Whether the gate removed this rendezvous.
    pub gated: Vec<bool>,
    /// Optimized graph after the last rendezvous.
    pub graph: Option<PoseGraph>,
    pub cost_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub rejection: Option<RejectionReport>,
}

impl StageTrace {
    fn new(stage: Stage, n: usize) -> Self {
        Self {
            stage,
            estimates: vec![None; n],
            gated: vec![false; n],
            graph: None,
            cost_history: Vec::new(),
            iterations: 0,
            converged: true,
            rejection: None,
        }
    }

    pub fn final_cost(&self) -> Option<f64> {
        self.cost_history.last().copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub seed: u64,
    pub scenario: Scenario,
    /// Noisy odometry of each robot relative to its start, indexed like the truth.
    pub odom_a: Vec<Pose2>,
    pub odom_b: Vec<Pose2>,
    pub measurements: Vec<Measurement>,
    pub stages: Vec<StageTrace>,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ErrorRow {
    pub index: usize,
    pub stage: &'static str,
    pub x_err: Option<f64>,
    pub y_err: Option<f64>,
    pub yaw_err_deg: Option<f64>,
    pub gated: bool,
}

impl SimulationTrace {
    pub fn stage(&self, stage: Stage) -> Option<&StageTrace> {
        self.stages.iter().find(|s| s.stage == stage)
    }

    pub fn odometry(&self, robot: Robot) -> &[Pose2] {
        match robot {
            Robot::A => &self.odom_a,
            Robot::B => &self.odom_b,
        }
    }

    /// Ground-truth and estimated relative poses for every rendezvous that
    /// produced an estimate in `stage`.
    pub fn estimate_pairs(&self, stage: Stage) -> Option<(Vec<Pose2>, Vec<Pose2>)> {
        let trace = self.stage(stage)?;
        let (mut gt, mut est) = (Vec::new(), Vec::new());
        for (m, e) in self.measurements.iter().zip(&trace.estimates) {
            if let Some(e) = e {
                gt.push(m.truth);
                est.push(*e);
            }
        }
        Some((gt, est))
    }

    pub fn error_rows(&self) -> Vec<ErrorRow> {
        let mut rows = Vec::new();
        for trace in &self.stages {
            for (k, m) in self.measurements.iter().enumerate() {
                let err = trace.estimates[k].map(|e| {
                    (
                        e.x() - m.truth.x(),
                        e.y() - m.truth.y(),
                        normalize_angle(e.yaw() - m.truth.yaw()).to_degrees(),
                    )
                });
                rows.push(ErrorRow {
                    index: m.index,
                    stage: trace.stage.name(),
                    x_err: err.map(|e| e.0),
                    y_err: err.map(|e| e.1),
                    yaw_err_deg: err.map(|e| e.2),
                    gated: trace.gated[k],
                });
            }
        }
        rows
    }

    /// One CSV row per rendezvous per stage. Rendezvous without an estimate
    /// have empty error cells.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), SimulationError> {
        let mut w = csv::Writer::from_writer(writer);
        for row in self.error_rows() {
            w.serialize(row).map_err(|e| SimulationError::Io(e.to_string()))?;
        }
        w.flush().map_err(|e| SimulationError::Io(e.to_string()))
    }
}

fn normal(sigma: f64) -> Option<Normal<f64>> {
    (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("positive sigma"))
}

fn draw<R: Rng>(dist: &Option<Normal<f64>>, rng: &mut R) -> f64 {
    dist.as_ref().map_or(0.0, |d| d.sample(rng))
}

fn noisy_odometry(truth: &[Pose2], cfg: &ScenarioConfig, stream: u64) -> Vec<Pose2> {
    let dt = normal(cfg.odom_noise.sigma_t);
    let dyaw = normal(cfg.odom_noise.sigma_yaw_deg.to_radians());
    let mut odom = Vec::with_capacity(truth.len());
    odom.push(Pose2::identity());
    for k in 1..truth.len() {
        let mut rng = stream_rng(cfg.seed, stream, k as u64);
        let noise = Twist2::new(draw(&dt, &mut rng), draw(&dt, &mut rng), draw(&dyaw, &mut rng));
        let step = truth[k - 1].between(&truth[k]) * noise.exp();
        odom.push(odom[k - 1] * step);
    }
    odom
}

struct Outlier {
    tilt: EulerAngles,
    dx: f64,
    dy: f64,
    dyaw: f64,
}

impl Outlier {
    fn planar(&self, p: &Pose2) -> Pose2 {
        Pose2::new(p.x() + self.dx, p.y() + self.dy, p.yaw() + self.dyaw)
    }

    fn spatial(&self, t: &Pose3) -> Pose3 {
        let e = t.euler();
        let angles = EulerAngles::new(e.roll + self.tilt.roll, e.pitch + self.tilt.pitch, e.yaw + self.dyaw);
        Pose3::from_euler(&angles, t.translation() + Vector3::new(self.dx, self.dy, 0.0))
    }
}

fn sample_outlier(cfg: &ScenarioConfig, index: usize) -> Option<Outlier> {
    let o = &cfg.outlier;
    let mut rng = stream_rng(cfg.seed, streams::OUTLIER, index as u64);
    if !(rng.random::<f64>() < o.rate) {
        return None;
    }
    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
    let magnitude = sign * o.magnitude_deg.to_radians();
    let tilt = match o.axis {
        TiltAxis::Roll => EulerAngles::new(magnitude, 0.0, 0.0),
        TiltAxis::Pitch => EulerAngles::new(0.0, magnitude, 0.0),
    };
    let t = normal(o.translation_sigma);
    let y = normal(o.yaw_sigma_deg.to_radians());
    Some(Outlier {
        tilt,
        dx: draw(&t, &mut rng),
        dy: draw(&t, &mut rng),
        dyaw: draw(&y, &mut rng),
    })
}

fn measure(
    cfg: &ScenarioConfig,
    scenario: &Scenario,
    model: &RobotModel,
    with_ir: bool,
) -> Result<Vec<Measurement>, SimulationError> {
    let noise = cfg.iml_noise.planar();
    let refine_cfg = RefinementConfig {
        iterations: cfg.ir.iterations,
        ..Default::default()
    };
    let mut out = Vec::with_capacity(scenario.rendezvous_count());
    for k in 1..=scenario.rendezvous_count() {
        let truth = scenario.relative_truth(k);
        let mut m = Measurement {
            index: k,
            observed: scenario.observed[k - 1],
            visible: scenario.visible[k - 1],
            truth,
            p_init: None,
            t_ref: None,
            outlier: false,
        };
        if m.visible {
            let p_init = noise.perturb(&truth, &mut stream_rng(cfg.seed, streams::IML, k as u64));
            let t_ref = if with_ir {
                let mut oracle = DampedNoisyOracle::new(cfg.ir.gamma, cfg.ir.sigma_t, cfg.ir.sigma_r_deg.to_radians(), 0)
                    .map_err(|e| SimulationError::Config {
                        field: "ir".into(),
                        message: e.to_string(),
                    })?
                    .with_rng(stream_rng(cfg.seed, streams::IR, k as u64));
                let ctx = RefinementContext {
                    target: truth.lift(),
                    model,
                };
                let result = refine(&p_init.lift(), &mut oracle, &refine_cfg, &ctx)
                    .map_err(|source| SimulationError::Refinement { index: k, source })?;
                Some(result.pose)
            } else {
                None
            };
            let outlier = sample_outlier(cfg, k);
            m.outlier = outlier.is_some();
            m.p_init = Some(outlier.as_ref().map_or(p_init, |o| o.planar(&p_init)));
            m.t_ref = t_ref.map(|t| outlier.as_ref().map_or(t, |o| o.spatial(&t)));
        }
        out.push(m);
    }
    Ok(out)
}

/// Relative pose at rendezvous `k` from the optimized graph: each robot's
/// latest vertex at or before `k`, carried forward by odometry.
fn graph_estimate(graph: &PoseGraph, trace: &SimulationTrace, observed: Observed, k: usize) -> Pose2 {
    let at = |robot: Robot| {
        let (j, pose) = graph
            .robot_poses(robot)
            .into_iter()
            .filter(|(i, _)| *i <= k)
            .next_back()
            .expect("start vertex is always present");
        let odom = trace.odometry(robot);
        pose * odom[j].between(&odom[k])
    };
    at(observed.observer()).between(&at(observed.robot()))
}

fn run_stage(stage: Stage, cfg: &ScenarioConfig, trace: &SimulationTrace) -> Result<StageTrace, SimulationError> {
    let n = trace.measurements.len();
    let mut out = StageTrace::new(stage, n);
    let raw = |m: &Measurement| -> Option<Pose3> {
        if stage.uses_ir() {
            m.t_ref
        } else {
            m.p_init.map(|p| p.lift())
        }
    };
    if !stage.uses_pgo() {
        for (k, m) in trace.measurements.iter().enumerate() {
            out.estimates[k] = raw(m).map(|t| t.project());
        }
        return Ok(out);
    }

    let solver = SolverConfig::default();
    let mut log = RendezvousLog::new();
    for (k, m) in trace.measurements.iter().enumerate() {
        let Some(t_ref) = raw(m) else { continue };
        log.push(RendezvousObservation {
            index: m.index,
            t_ref,
            t_a: trace.odom_a[m.index].lift(),
            t_b: trace.odom_b[m.index].lift(),
            observed: m.observed,
        })
        .map_err(|source| SimulationError::PoseGraph { index: m.index, source })?;
        match run_pose_graph(&log, &cfg.info, &solver) {
            Ok((opt, report)) => {
                out.gated[k] = report.rejected.iter().any(|r| r.index == m.index);
                out.estimates[k] = Some(graph_estimate(&opt.graph, trace, m.observed, m.index));
                out.cost_history = opt.cost_history;
                out.iterations = opt.iterations;
                out.converged = opt.converged;
                out.graph = Some(opt.graph);
                out.rejection = Some(report);
            }
            Err(PoseGraphError::AllObservationsRejected { .. }) => {
                out.gated[k] = true;
                out.estimates[k] = Some(t_ref.project());
            }
            Err(source) => return Err(SimulationError::PoseGraph { index: m.index, source }),
        }
    }
    Ok(out)
}

/// Generates the scenario for `cfg` and runs each requested stage over the
/// same surrogate measurements.
pub fn run_pipeline(cfg: &ScenarioConfig, stages: &[Stage]) -> Result<SimulationTrace, SimulationError> {
    run_pipeline_with_model(cfg, stages, &RobotModel::default_robot())
}

pub fn run_pipeline_with_model(
    cfg: &ScenarioConfig,
    stages: &[Stage],
    model: &RobotModel,
) -> Result<SimulationTrace, SimulationError> {
    let scenario = generate_scenario(cfg)?;
    let with_ir = stages.iter().any(|s| s.uses_ir());
    let measurements = measure(cfg, &scenario, model, with_ir)?;
    let mut trace = SimulationTrace {
        seed: cfg.seed,
        odom_a: noisy_odometry(&scenario.truth_a, cfg, streams::ODOM_A),
        odom_b: noisy_odometry(&scenario.truth_b, cfg, streams::ODOM_B),
        scenario,
        measurements,
        stages: Vec::with_capacity(stages.len()),
    };
    for &stage in stages {
        let s = run_stage(stage, cfg, &trace)?;
        trace.stages.push(s);
    }
    Ok(trace)
}
