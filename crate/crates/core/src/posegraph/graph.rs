use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;

use nalgebra::{Matrix3, Vector3};

use crate::geometry::{EulerAngles, Pose2};

use super::log::{InfoParams, Observed, RendezvousLog, Robot};
use super::PoseGraphError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdgeKind {
    Odometry,
    Mutual,
}

impl EdgeKind {
    pub fn name(self) -> &'static str {
        match self {
            EdgeKind::Odometry => "odom",
            EdgeKind::Mutual => "mutual",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "odom" => Some(EdgeKind::Odometry),
            "mutual" => Some(EdgeKind::Mutual),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vertex {
    pub id: usize,
    pub robot: Robot,
    /// Rendezvous index; 0 for a robot's start pose.
    pub index: usize,
    pub pose: Pose2,
}

/// Relative-pose constraint `x_from⁻¹ · x_to ≈ measurement`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub kind: EdgeKind,
    pub from: usize,
    pub to: usize,
    pub measurement: Pose2,
    /// Diagonal of the information matrix.
    pub information: Vector3<f64>,
}

impl Edge {
    pub fn information_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&self.information)
    }
}

/// `κ_m = (κ/2)·exp(−|roll| − |pitch|)`, angles in radians.
pub fn mutual_information_scale(roll: f64, pitch: f64, kappa: f64) -> f64 {
    0.5 * kappa * (-roll.abs() - pitch.abs()).exp()
}

fn information_diagonal(kind: EdgeKind, euler: &EulerAngles, params: &InfoParams) -> Vector3<f64> {
    match kind {
        EdgeKind::Odometry => Vector3::repeat(params.kappa),
        EdgeKind::Mutual => {
            let k = mutual_information_scale(euler.roll, euler.pitch, params.kappa);
            Vector3::new(k, k, params.tau * k)
        }
    }
}

/// Odometry edges get `κ·I`; mutual edges `diag(κ_m, κ_m, τ·κ_m)`.
/// The Euler angles are ignored for odometry.
pub fn information_matrix(kind: EdgeKind, euler: &EulerAngles, params: &InfoParams) -> Matrix3<f64> {
    Matrix3::from_diagonal(&information_diagonal(kind, euler, params))
}

/// `log(Z⁻¹ · x_from⁻¹ · x_to)` as `(ρx, ρy, θ)`.
pub fn edge_residual(edge: &Edge, x_from: &Pose2, x_to: &Pose2) -> Vector3<f64> {
    (edge.measurement.inverse() * x_from.between(x_to)).log().to_vector()
}

/// Vertex id of the start pose (`k = 0`) or of the k-th retained rendezvous.
pub fn vertex_id(robot: Robot, k: usize) -> usize {
    2 * k + usize::from(robot == Robot::B)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PoseGraph {
    vertices: Vec<Vertex>,
    slots: BTreeMap<usize, usize>,
    edges: Vec<Edge>,
}

impl PoseGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_vertex(&mut self, vertex: Vertex) -> Result<(), PoseGraphError> {
        if !vertex.pose.is_finite() {
            return Err(PoseGraphError::NonFinite(format!("vertex {}", vertex.id)));
        }
        if self.slots.contains_key(&vertex.id) {
            return Err(PoseGraphError::DuplicateVertex(vertex.id));
        }
        self.slots.insert(vertex.id, self.vertices.len());
        self.vertices.push(vertex);
        Ok(())
    }

    pub fn add_edge(&mut self, edge: Edge) -> Result<(), PoseGraphError> {
        for id in [edge.from, edge.to] {
            if !self.slots.contains_key(&id) {
                return Err(PoseGraphError::UnknownVertex(id));
            }
        }
        if edge.from == edge.to {
            return Err(PoseGraphError::InvalidEdge(format!("self loop on vertex {}", edge.from)));
        }
        if !edge.measurement.is_finite() {
            return Err(PoseGraphError::NonFinite(format!("edge {} -> {}", edge.from, edge.to)));
        }
        if !edge.information.iter().all(|w| *w > 0.0 && w.is_finite()) {
            return Err(PoseGraphError::InvalidEdge(format!(
                "information {:?} on edge {} -> {} is not positive definite",
                edge.information.as_slice(),
                edge.from,
                edge.to
            )));
        }
        self.edges.push(edge);
        Ok(())
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn vertex(&self, id: usize) -> Option<&Vertex> {
        self.slots.get(&id).map(|&s| &self.vertices[s])
    }

    pub fn pose(&self, id: usize) -> Option<Pose2> {
        self.vertex(id).map(|v| v.pose)
    }

    pub(crate) fn slot(&self, id: usize) -> Option<usize> {
        self.slots.get(&id).copied()
    }

    pub(crate) fn set_pose_at_slot(&mut self, slot: usize, pose: Pose2) {
        self.vertices[slot].pose = pose;
    }

    pub fn set_pose(&mut self, id: usize, pose: Pose2) -> Result<(), PoseGraphError> {
        let slot = self.slot(id).ok_or(PoseGraphError::UnknownVertex(id))?;
        self.vertices[slot].pose = pose;
        Ok(())
    }

    /// Poses of one robot ordered by rendezvous index.
    pub fn robot_poses(&self, robot: Robot) -> Vec<(usize, Pose2)> {
        let mut out: Vec<_> = self
            .vertices
            .iter()
            .filter(|v| v.robot == robot)
            .map(|v| (v.index, v.pose))
            .collect();
        out.sort_by_key(|(i, _)| *i);
        out
    }

    pub fn edge_count(&self, kind: EdgeKind) -> usize {
        self.edges.iter().filter(|e| e.kind == kind).count()
    }

    /// `½ Σ rᵀ Ω r` at the current vertex estimates.
    pub fn cost(&self) -> f64 {
        0.5 * self
            .edges
            .iter()
            .map(|e| {
                let r = edge_residual(e, &self.vertices[self.slots[&e.from]].pose, &self.vertices[self.slots[&e.to]].pose);
                r.component_mul(&e.information).dot(&r)
            })
            .sum::<f64>()
    }

    /// Ids not reachable from `root` when edges are taken as undirected.
    pub fn unreachable_from(&self, root: usize) -> Result<Vec<usize>, PoseGraphError> {
        let root_slot = self.slot(root).ok_or(PoseGraphError::UnknownVertex(root))?;
        let n = self.vertices.len();
        let mut adjacency = vec![Vec::new(); n];
        for e in &self.edges {
            let (a, b) = (self.slots[&e.from], self.slots[&e.to]);
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        let mut seen = vec![false; n];
        seen[root_slot] = true;
        let mut queue = VecDeque::from([root_slot]);
        while let Some(s) = queue.pop_front() {
            for &t in &adjacency[s] {
                if !seen[t] {
                    seen[t] = true;
                    queue.push_back(t);
                }
            }
        }
        let mut missing: Vec<_> = (0..n).filter(|&s| !seen[s]).map(|s| self.vertices[s].id).collect();
        missing.sort_unstable();
        Ok(missing)
    }

    /// One line per vertex and per edge, values at 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# VERTEX id robot idx x y yaw\n# EDGE kind from to zx zy zyaw w11 w22 w33\n");
        for v in &self.vertices {
            let _ = writeln!(
                out,
                "VERTEX {} {} {} {:.16e} {:.16e} {:.16e}",
                v.id,
                v.robot.name(),
                v.index,
                v.pose.x(),
                v.pose.y(),
                v.pose.yaw()
            );
        }
        for e in &self.edges {
            let _ = writeln!(
                out,
                "EDGE {} {} {} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e} {:.16e}",
                e.kind.name(),
                e.from,
                e.to,
                e.measurement.x(),
                e.measurement.y(),
                e.measurement.yaw(),
                e.information.x,
                e.information.y,
                e.information.z
            );
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, PoseGraphError> {
        let mut graph = PoseGraph::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| PoseGraphError::Parse { line: n + 1, message };
            let fields: Vec<&str> = line.split_whitespace().collect();
            let float = |s: &str| s.parse::<f64>().map_err(|e| err(format!("bad number '{s}': {e}")));
            let int = |s: &str| s.parse::<usize>().map_err(|e| err(format!("bad integer '{s}': {e}")));
            match fields[0] {
                "VERTEX" => {
                    if fields.len() != 7 {
                        return Err(err(format!("VERTEX expects 6 fields, found {}", fields.len() - 1)));
                    }
                    let robot = match fields[2] {
                        "A" => Robot::A,
                        "B" => Robot::B,
                        other => return Err(err(format!("unknown robot '{other}'"))),
                    };
                    let pose = Pose2::new(float(fields[4])?, float(fields[5])?, float(fields[6])?);
                    graph
                        .add_vertex(Vertex {
                            id: int(fields[1])?,
                            robot,
                            index: int(fields[3])?,
                            pose,
                        })
                        .map_err(|e| err(e.to_string()))?;
                }
                "EDGE" => {
                    if fields.len() != 10 {
                        return Err(err(format!("EDGE expects 9 fields, found {}", fields.len() - 1)));
                    }
                    let kind = EdgeKind::parse(fields[1]).ok_or_else(|| err(format!("unknown edge kind '{}'", fields[1])))?;
                    let edge = Edge {
                        kind,
                        from: int(fields[2])?,
                        to: int(fields[3])?,
                        measurement: Pose2::new(float(fields[4])?, float(fields[5])?, float(fields[6])?),
                        information: Vector3::new(float(fields[7])?, float(fields[8])?, float(fields[9])?),
                    };
                    graph.add_edge(edge).map_err(|e| err(e.to_string()))?;
                }
                other => return Err(err(format!("unknown record '{other}'"))),
            }
        }
        Ok(graph)
    }
}

/// Builds the graph over a gated log. Vertex estimates are initialised by
/// chaining odometry from the two start poses; B's start pose is taken from
/// the log or, if absent, inferred from the first observation.
pub fn construct_pose_graph(log: &RendezvousLog, params: &InfoParams) -> Result<PoseGraph, PoseGraphError> {
    params.validate()?;
    let first = log.observations().first().ok_or(PoseGraphError::EmptyLog)?;
    let origin_a = log.origin_a;
    let origin_b = match log.origin_b {
        Some(b) => b,
        None => {
            let a_k = origin_a * first.odometry(Robot::A);
            let z = first.t_ref.project();
            let b_k = match first.observed {
                Observed::B => a_k * z,
                Observed::A => a_k * z.inverse(),
            };
            b_k * first.odometry(Robot::B).inverse()
        }
    };

    let mut graph = PoseGraph::new();
    for (robot, origin) in [(Robot::A, origin_a), (Robot::B, origin_b)] {
        graph.add_vertex(Vertex {
            id: vertex_id(robot, 0),
            robot,
            index: 0,
            pose: origin,
        })?;
    }
    let mut previous = [Pose2::identity(); 2];
    for (slot, obs) in log.observations().iter().enumerate() {
        let k = slot + 1;
        for (r, (robot, origin)) in [(Robot::A, origin_a), (Robot::B, origin_b)].into_iter().enumerate() {
            let odom = obs.odometry(robot);
            graph.add_vertex(Vertex {
                id: vertex_id(robot, k),
                robot,
                index: obs.index,
                pose: origin * odom,
            })?;
            graph.add_edge(Edge {
                kind: EdgeKind::Odometry,
                from: vertex_id(robot, k - 1),
                to: vertex_id(robot, k),
                measurement: previous[r].between(&odom),
                information: information_diagonal(EdgeKind::Odometry, &EulerAngles::default(), params),
            })?;
            previous[r] = odom;
        }
        graph.add_edge(Edge {
            kind: EdgeKind::Mutual,
            from: vertex_id(obs.observed.observer(), k),
            to: vertex_id(obs.observed.robot(), k),
            measurement: obs.t_ref.project(),
            information: information_diagonal(EdgeKind::Mutual, &obs.euler(), params),
        })?;
    }
    Ok(graph)
}
