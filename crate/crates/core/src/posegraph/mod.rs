//! Pose-graph back end for rendezvous-based mutual localization.
//!
//! Tilted refinement results are gated out, the survivors and both robots'
//! odometry are assembled into an SE(2) graph, and the graph is solved by
//! damped Gauss–Newton with one vertex anchored.

mod graph;
mod log;
mod solver;

pub use graph::{
    construct_pose_graph, edge_residual, information_matrix, mutual_information_scale, vertex_id, Edge,
    EdgeKind, PoseGraph, Vertex,
};
pub use log::{
    delete_erroneous_nodes, is_erroneous, InfoParams, Observed, Rejection, RejectionReport,
    RendezvousLog, RendezvousObservation, Robot,
};
pub use solver::{edge_jacobians, optimize, Optimization, SolverConfig};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PoseGraphError {
    #[error("rendezvous log is empty")]
    EmptyLog,
    #[error("all {rejected} observations were rejected by the roll/pitch gate")]
    AllObservationsRejected { rejected: usize },
    #[error("rendezvous index {index} does not follow {previous}")]
    IndexOrder { previous: usize, index: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown vertex {0}")]
    UnknownVertex(usize),
    #[error("duplicate vertex {0}")]
    DuplicateVertex(usize),
    #[error("invalid edge: {0}")]
    InvalidEdge(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("graph is not connected to the anchor; unreachable vertices {unreachable:?}")]
    NotConnected { unreachable: Vec<usize> },
    #[error("normal equations are singular (damping {lambda:e})")]
    SingularNormalEquations { lambda: f64 },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Gate, build and solve in one call, anchoring A's start pose.
pub fn run_pose_graph(
    log: &RendezvousLog,
    params: &InfoParams,
    solver: &SolverConfig,
) -> Result<(Optimization, RejectionReport), PoseGraphError> {
    let (kept, report) = delete_erroneous_nodes(log, params)?;
    let graph = construct_pose_graph(&kept, params)?;
    let out = optimize(&graph, vertex_id(Robot::A, 0), solver)?;
    Ok((out, report))
}
