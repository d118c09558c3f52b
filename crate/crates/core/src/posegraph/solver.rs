//! Levenberg–Marquardt over SE(2) vertices with right-perturbation updates
//! `x ← x · exp(δ)`.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::geometry::Twist2;

use super::graph::{edge_residual, Edge, PoseGraph};
use super::log::Robot;
use super::PoseGraphError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub max_iterations: usize,
    pub initial_lambda: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    /// Damping above which the solver gives up on finding a decrease.
    pub max_lambda: f64,
    pub relative_tolerance: f64,
    pub step_tolerance: f64,
    /// A cost at or below this is treated as an exact fit.
    pub cost_floor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            initial_lambda: 1e-4,
            lambda_up: 10.0,
            lambda_down: 0.5,
            max_lambda: 1e16,
            relative_tolerance: 1e-10,
            step_tolerance: 1e-10,
            cost_floor: 1e-20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimization {
    pub graph: PoseGraph,
    /// Initial cost followed by the cost after every accepted step.
    pub cost_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub lambda: f64,
}

impl Optimization {
    pub fn final_cost(&self) -> f64 {
        *self.cost_history.last().expect("history holds the initial cost")
    }

    pub fn poses(&self, robot: Robot) -> Vec<(usize, crate::geometry::Pose2)> {
        self.graph.robot_poses(robot)
    }
}

/// Residual and Jacobians with respect to right perturbations of the two
/// endpoints.
pub fn edge_jacobians(
    edge: &Edge,
    x_from: &crate::geometry::Pose2,
    x_to: &crate::geometry::Pose2,
) -> (Vector3<f64>, Matrix3<f64>, Matrix3<f64>) {
    let r = edge_residual(edge, x_from, x_to);
    let jr_inv = Twist2::from_vector(&r)
        .right_jacobian()
        .try_inverse()
        .unwrap_or_else(Matrix3::identity);
    let j_to = jr_inv;
    let j_from = -jr_inv * x_to.between(x_from).adjoint();
    (r, j_from, j_to)
}

/// Minimises `½ Σ rᵀ Ω r` with the vertex `anchor` held fixed.
pub fn optimize(graph: &PoseGraph, anchor: usize, cfg: &SolverConfig) -> Result<Optimization, PoseGraphError> {
    let anchor_slot = graph.slot(anchor).ok_or(PoseGraphError::UnknownVertex(anchor))?;
    let unreachable = graph.unreachable_from(anchor)?;
    if !unreachable.is_empty() {
        return Err(PoseGraphError::NotConnected { unreachable });
    }

    let n = graph.vertices().len();
    // column block of each free vertex
    let mut block = vec![None; n];
    let mut free: usize = 0;
    for (slot, b) in block.iter_mut().enumerate() {
        if slot != anchor_slot {
            *b = Some(free);
            free += 1;
        }
    }
    let dim = 3 * free;
    let bandwidth = graph
        .edges()
        .iter()
        .filter_map(|e| {
            let a = block[graph.slot(e.from)?]?;
            let b = block[graph.slot(e.to)?]?;
            Some(3 * a.abs_diff(b) + 2)
        })
        .max()
        .unwrap_or(2);

    let mut current = graph.clone();
    let mut cost = current.cost();
    let mut history = vec![cost];
    let mut lambda = cfg.initial_lambda;
    let mut iterations = 0;
    let mut converged = cost <= cfg.cost_floor || dim == 0;

    while !converged && iterations < cfg.max_iterations {
        iterations += 1;
        let (h, g) = normal_equations(&current, &block, dim);

        let step = loop {
            match banded_cholesky_solve(&h, lambda, bandwidth, &(-&g)) {
                Some(step) => break step,
                None if lambda < cfg.max_lambda => lambda *= cfg.lambda_up,
                None => return Err(PoseGraphError::SingularNormalEquations { lambda }),
            }
        };
        if !step.iter().all(|v| v.is_finite()) {
            return Err(PoseGraphError::SingularNormalEquations { lambda });
        }

        let mut candidate = current.clone();
        for (slot, b) in block.iter().enumerate() {
            if let Some(b) = b {
                let delta = Twist2::new(step[3 * b], step[3 * b + 1], step[3 * b + 2]);
                let pose = candidate.vertices()[slot].pose * delta.exp();
                candidate.set_pose_at_slot(slot, pose);
            }
        }
        let new_cost = candidate.cost();
        let step_norm = step.norm();

        if new_cost < cost {
            let decrease = (cost - new_cost) / cost;
            current = candidate;
            cost = new_cost;
            history.push(cost);
            lambda = (lambda * cfg.lambda_down).max(1e-12);
            if decrease < cfg.relative_tolerance || step_norm < cfg.step_tolerance || cost <= cfg.cost_floor {
                converged = true;
            }
        } else if step_norm < cfg.step_tolerance {
            converged = true;
        } else {
            lambda *= cfg.lambda_up;
            if lambda > cfg.max_lambda {
                break;
            }
        }
    }

    Ok(Optimization {
        graph: current,
        cost_history: history,
        iterations,
        converged,
        lambda,
    })
}

/// Solves `(A + λI) x = b` for symmetric `A` whose non-zeros lie within
/// `bandwidth` of the diagonal. Returns `None` when the damped matrix is not
/// positive definite.
fn banded_cholesky_solve(a: &DMatrix<f64>, lambda: f64, bandwidth: usize, b: &DVector<f64>) -> Option<DVector<f64>> {
    let n = a.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let lo = i.saturating_sub(bandwidth);
        for j in lo..=i {
            let mut sum = a[(i, j)];
            if i == j {
                sum += lambda;
            }
            for k in lo.max(j.saturating_sub(bandwidth))..j {
                sum -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if !(sum > 0.0) {
                    return None;
                }
                l[(i, i)] = sum.sqrt();
            } else {
                l[(i, j)] = sum / l[(j, j)];
            }
        }
    }
    let mut y = b.clone();
    for i in 0..n {
        let lo = i.saturating_sub(bandwidth);
        let mut sum = y[i];
        for k in lo..i {
            sum -= l[(i, k)] * y[k];
        }
        y[i] = sum / l[(i, i)];
    }
    for i in (0..n).rev() {
        let hi = (i + bandwidth).min(n - 1);
        let mut sum = y[i];
        for k in i + 1..=hi {
            sum -= l[(k, i)] * y[k];
        }
        y[i] = sum / l[(i, i)];
    }
    Some(y)
}

fn normal_equations(graph: &PoseGraph, block: &[Option<usize>], dim: usize) -> (DMatrix<f64>, DVector<f64>) {
    let mut h = DMatrix::zeros(dim, dim);
    let mut g = DVector::zeros(dim);
    let vertices = graph.vertices();
    for edge in graph.edges() {
        let (sf, st) = (graph.slot(edge.from).unwrap(), graph.slot(edge.to).unwrap());
        let (r, j_from, j_to) = edge_jacobians(edge, &vertices[sf].pose, &vertices[st].pose);
        let omega = edge.information_matrix();
        let parts = [(block[sf], j_from), (block[st], j_to)];
        for &(bi, ji) in &parts {
            let Some(bi) = bi else { continue };
            let jt_omega = ji.transpose() * omega;
            let gi = jt_omega * r;
            for a in 0..3 {
                g[3 * bi + a] += gi[a];
            }
            for &(bj, jj) in &parts {
                let Some(bj) = bj else { continue };
                let hij = jt_omega * jj;
                for a in 0..3 {
                    for c in 0..3 {
                        h[(3 * bi + a, 3 * bj + c)] += hij[(a, c)];
                    }
                }
            }
        }
    }
    (h, g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose2;
    use crate::posegraph::graph::{EdgeKind, Vertex};

    fn edge(from: usize, to: usize, z: Pose2, w: f64) -> Edge {
        Edge {
            kind: EdgeKind::Odometry,
            from,
            to,
            measurement: z,
            information: Vector3::repeat(w),
        }
    }

    #[test]
    fn banded_solve_matches_dense() {
        let n = 9;
        let band = 3;
        let mut a = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if i.abs_diff(j) <= band {
                    a[(i, j)] = 1.0 / (1.0 + (i + j) as f64) + if i == j { 2.0 } else { 0.0 };
                }
            }
        }
        let b = DVector::from_fn(n, |i, _| (i as f64).sin());
        let x = banded_cholesky_solve(&a, 0.1, band, &b).unwrap();
        let mut damped = a.clone();
        for i in 0..n {
            damped[(i, i)] += 0.1;
        }
        let dense = damped.cholesky().unwrap().solve(&b);
        assert!((x - dense).norm() < 1e-12);
        assert!(banded_cholesky_solve(&(-a), 0.0, band, &b).is_none());
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let e = edge(0, 1, Pose2::new(0.8, -0.3, 0.9), 1.0);
        let from = Pose2::new(0.3, 1.0, -2.0);
        let to = Pose2::new(1.2, 0.4, 1.5);
        let (_, j_from, j_to) = edge_jacobians(&e, &from, &to);
        let h = 1e-6;
        for k in 0..3 {
            let mut d = Vector3::zeros();
            d[k] = h;
            let dp = Twist2::from_vector(&d).exp();
            let dm = Twist2::from_vector(&-d).exp();
            let num_to = (edge_residual(&e, &from, &(to * dp)) - edge_residual(&e, &from, &(to * dm))) / (2.0 * h);
            let num_from = (edge_residual(&e, &(from * dp), &to) - edge_residual(&e, &(from * dm), &to)) / (2.0 * h);
            assert!((num_to - j_to.column(k)).norm() < 1e-7, "to {k}");
            assert!((num_from - j_from.column(k)).norm() < 1e-7, "from {k}");
        }
    }

    fn chain(perturb: bool) -> PoseGraph {
        let truth = [Pose2::identity(), Pose2::new(1.0, 0.0, 0.5), Pose2::new(1.5, 1.0, 1.4)];
        let mut g = PoseGraph::new();
        for (i, t) in truth.iter().enumerate() {
            let pose = if perturb && i > 0 { *t * Twist2::new(0.2, -0.1, 0.3).exp() } else { *t };
            g.add_vertex(Vertex { id: i, robot: Robot::A, index: i, pose }).unwrap();
        }
        g.add_edge(edge(0, 1, truth[0].between(&truth[1]), 100.0)).unwrap();
        g.add_edge(edge(1, 2, truth[1].between(&truth[2]), 100.0)).unwrap();
        g.add_edge(edge(0, 2, truth[0].between(&truth[2]), 50.0)).unwrap();
        g
    }

    #[test]
    fn exact_graph_needs_no_iterations() {
        let out = optimize(&chain(false), 0, &SolverConfig::default()).unwrap();
        assert_eq!(out.iterations, 0);
        assert!(out.converged);
        assert_eq!(out.final_cost(), 0.0);
    }

    #[test]
    fn recovers_consistent_graph() {
        let out = optimize(&chain(true), 0, &SolverConfig::default()).unwrap();
        assert!(out.converged);
        assert!(out.final_cost() <= 1e-18, "{}", out.final_cost());
        let exact = chain(false);
        for (a, b) in out.graph.vertices().iter().zip(exact.vertices()) {
            assert!((a.pose.translation() - b.pose.translation()).norm() < 1e-6);
            assert!((a.pose.yaw() - b.pose.yaw()).abs() < 1e-6);
        }
        assert!(out.cost_history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn disconnected_graph_is_rejected() {
        let mut g = chain(false);
        g.add_vertex(Vertex { id: 7, robot: Robot::B, index: 0, pose: Pose2::identity() }).unwrap();
        assert_eq!(
            optimize(&g, 0, &SolverConfig::default()),
            Err(PoseGraphError::NotConnected { unreachable: vec![7] })
        );
        assert_eq!(optimize(&g, 42, &SolverConfig::default()), Err(PoseGraphError::UnknownVertex(42)));
    }

    #[test]
    fn anchor_stays_fixed() {
        let mut g = chain(true);
        g.set_pose(1, Pose2::new(1.0, 0.0, 0.5)).unwrap();
        g.set_pose(0, Pose2::new(0.3, 0.2, 0.1)).unwrap();
        let out = optimize(&g, 1, &SolverConfig::default()).unwrap();
        assert_eq!(out.graph.pose(1), Some(Pose2::new(1.0, 0.0, 0.5)));
        assert!(out.final_cost() < 1e-18);
    }
}
