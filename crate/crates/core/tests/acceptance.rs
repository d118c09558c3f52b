//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.

mod support;

use std::f64::consts::LN_2;
use std::time::{Duration, Instant};

use mutloc::geometry::{map_origin_transform, EulerAngles, Pose2, Pose3, Twist};
use mutloc::losses::{epe_flow_loss, observation_loss, point_matching_loss};
use mutloc::metrics::{ate_planar, map_fusion_error};
use mutloc::nn::{
    run_gradcheck, softmax_per_direction, AcnConfig, AcnLayer, GradCheckConfig, Tensor,
};
use mutloc::posegraph::{
    construct_pose_graph, delete_erroneous_nodes, information_matrix, mutual_information_scale, optimize,
    Edge, EdgeKind, InfoParams, Observed, PoseGraph, RendezvousLog, RendezvousObservation, Robot, SolverConfig,
    Vertex,
};
use mutloc::refinement::{refine, DampedNoisyOracle, RefinementConfig, RefinementContext, RobotModel};
use mutloc::rng::stream_rng;
use mutloc::simulator::{run_pipeline, OutlierConfig, ScenarioConfig, Stage, TiltAxis};
use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use support::{median, naive_acn, nelder_mead, random_pose3, raw_cost, RawEdge};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let cfg = GradCheckConfig::default();
    let largest = cfg.sizes.iter().map(|&(c, w, h)| c * w * h).max().unwrap_or(0);
    let report = run_gradcheck(&cfg).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    check(
        report.passed() && largest >= 4 * 16 * 16 && elapsed < Duration::from_secs(60),
        format!(
            "{} groups, max relative error {:.2e} (tol {:.0e}), {:.1?}",
            report.groups.len(),
            report.max_error(),
            cfg.tolerance,
            elapsed
        ),
    )
}

fn acn_oracle() -> Outcome {
    let mut worst = 0.0f64;
    let odd = [1usize, 3, 5, 7, 9];
    for case in 0..50u64 {
        let mut rng = stream_rng(case, 0xac0, 0);
        let channels = rng.random_range(1..=4);
        let width = rng.random_range(1..=12);
        let height = rng.random_range(1..=12);
        let n = rng.random_range(1..=3);
        let sizes: Vec<usize> = (0..n).map(|_| odd[rng.random_range(0..odd.len())]).collect();
        let cfg = AcnConfig::new(channels, &sizes).map_err(|e| e.to_string())?;
        let layer = AcnLayer::random(cfg, 1.0, &mut rng).map_err(|e| e.to_string())?;
        let x = Tensor::from_fn(channels, width, height, |_, _, _| rng.random_range(-2.0..2.0));
        let fast = layer.forward(&x).map_err(|e| e.to_string())?;
        worst = worst.max(fast.max_abs_diff(&naive_acn(&layer, &x)));
    }

    let mut rng = stream_rng(7, 0xac1, 0);
    let mut zero = AcnLayer::zeros(AcnConfig::with_default_sizes(3)).map_err(|e| e.to_string())?;
    for w in zero.pointwise_mut().weights_mut() {
        *w = rng.random_range(-3.0..3.0);
    }
    let x = Tensor::from_fn(3, 9, 6, |_, _, _| rng.random_range(-5.0..5.0));
    let identity = zero.forward(&x).map_err(|e| e.to_string())? == x;
    check(
        worst <= 1e-10 && identity,
        format!("50 cases, max |fast - naive| = {worst:.2e}; zero-kernel identity exact: {identity}"),
    )
}

fn softmax_simplex() -> Outcome {
    let mut rng = stream_rng(3, 0x50f, 0);
    let mut worst_sum = 0.0f64;
    let mut min_weight = f64::INFINITY;
    for _ in 0..10_000 {
        let n = rng.random_range(1..=6);
        let logits: Vec<f64> = (0..2 * n).map(|_| rng.random_range(-30.0..30.0)).collect();
        let w = softmax_per_direction(&logits);
        for dir in 0..2 {
            let sum: f64 = (0..n).map(|v| w[2 * v + dir]).sum();
            worst_sum = worst_sum.max((sum - 1.0).abs());
        }
        min_weight = min_weight.min(w.iter().cloned().fold(f64::INFINITY, f64::min));
    }
    check(
        worst_sum <= 1e-12 && min_weight > 0.0,
        format!("10^4 vectors, max |Σw - 1| = {worst_sum:.2e}, min weight {min_weight:.2e}"),
    )
}

fn graph_cardinalities() -> Outcome {
    let params = InfoParams::default();
    let mut rng = stream_rng(4, 0xca4d, 0);
    let mut details = Vec::new();
    for _ in 0..20 {
        let alpha = rng.random_range(0..=12);
        let beta = rng.random_range(0..=12);
        let alpha = if alpha + beta == 0 { 1 } else { alpha };
        let mut dirs: Vec<Observed> = std::iter::repeat_n(Observed::A, alpha)
            .chain(std::iter::repeat_n(Observed::B, beta))
            .collect();
        for i in (1..dirs.len()).rev() {
            dirs.swap(i, rng.random_range(0..=i));
        }
        let mut log = RendezvousLog::new();
        let mut index = 0;
        for dir in dirs {
            // interleave tilted observations that the gate must remove
            if rng.random_bool(0.3) {
                index += 1;
                let t_ref = Pose3::from_euler(&EulerAngles::from_degrees(0.0, 25.0, 180.0), Vector3::new(3.0, 0.0, 0.0));
                log.push(observation(index, t_ref, dir)).map_err(|e| e.to_string())?;
            }
            index += 1;
            let t_ref = Pose3::from_euler(&EulerAngles::from_degrees(1.0, -2.0, 170.0), Vector3::new(3.0, 0.2, 0.0));
            log.push(observation(index, t_ref, dir)).map_err(|e| e.to_string())?;
        }
        let (kept, _) = delete_erroneous_nodes(&log, &params).map_err(|e| e.to_string())?;
        let (ad, bd) = (kept.alpha(), kept.beta());
        let graph = construct_pose_graph(&kept, &params).map_err(|e| e.to_string())?;
        let (v, e) = (graph.vertices().len(), graph.edges().len());
        if (ad, bd) != (alpha, beta) || v != 2 * (1 + ad + bd) || e != 3 * (ad + bd) {
            return Err(format!("α_d={ad} β_d={bd}: |V|={v} |E|={e}"));
        }
        details.push(format!("({ad},{bd})"));
    }
    Ok(format!("20 pairs {}", details.join(" ")))
}

fn observation(index: usize, t_ref: Pose3, observed: Observed) -> RendezvousObservation {
    let step = index as f64;
    RendezvousObservation {
        index,
        t_ref,
        t_a: Pose2::new(0.1 * step, 0.0, 0.02 * step).lift(),
        t_b: Pose2::new(0.0, 0.1 * step, -0.01 * step).lift(),
        observed,
    }
}

fn information_values() -> Outcome {
    let params = InfoParams::default();
    let zero = EulerAngles::default();
    let odom = information_matrix(EdgeKind::Odometry, &EulerAngles::from_degrees(5.0, 5.0, 30.0), &params);
    let mutual = information_matrix(EdgeKind::Mutual, &zero, &params);
    let km = mutual_information_scale(0.1, 0.05, params.kappa);
    let expected = 50.0 * (-0.15f64).exp();
    check(
        odom == Matrix3::from_diagonal(&Vector3::new(100.0, 100.0, 100.0))
            && mutual == Matrix3::from_diagonal(&Vector3::new(50.0, 50.0, 25.0))
            && (km - expected).abs() <= 1e-12,
        format!(
            "odom diag {:?}, mutual diag {:?}, κ_m(0.1, 0.05) - 50e^-0.15 = {:.1e}",
            odom.diagonal().as_slice(),
            mutual.diagonal().as_slice(),
            km - expected
        ),
    )
}

fn outlier_gating() -> Outcome {
    let (mut injected, mut caught, mut inliers, mut false_rejections) = (0, 0, 0, 0);
    for seed in 0..100 {
        let cfg = ScenarioConfig {
            rendezvous_count: 50,
            outlier: OutlierConfig {
                rate: 0.2,
                magnitude_deg: 15.0,
                axis: TiltAxis::Pitch,
                ..OutlierConfig::default()
            },
            seed,
            ..ScenarioConfig::default()
        };
        let trace = run_pipeline(&cfg, &[Stage::Full]).map_err(|e| format!("seed {seed}: {e}"))?;
        let stage = trace.stage(Stage::Full).expect("stage requested");
        let rejected = stage.rejection.as_ref().map(|r| r.rejected_indices()).unwrap_or_default();
        for (k, m) in trace.measurements.iter().enumerate() {
            if !m.visible {
                continue;
            }
            let gated = stage.gated[k] && rejected.contains(&m.index);
            if m.outlier {
                injected += 1;
                caught += usize::from(gated);
            } else {
                inliers += 1;
                false_rejections += usize::from(stage.gated[k] || rejected.contains(&m.index));
            }
        }
    }
    check(
        injected > 0 && caught == injected && false_rejections == 0,
        format!(
            "100 runs x 50: recall {caught}/{injected}, false rejections {false_rejections}/{inliers}"
        ),
    )
}

fn noise_free_recovery() -> Outcome {
    let cfg = ScenarioConfig::default().noise_free();
    let start = Instant::now();
    let trace = run_pipeline(&cfg, &[Stage::Full]).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let (gt, est) = trace.estimate_pairs(Stage::Full).expect("stage requested");
    let ate = ate_planar(&gt, &est).map_err(|e| e.to_string())?;
    let cost = trace.stage(Stage::Full).and_then(|s| s.final_cost()).unwrap_or(f64::NAN);
    check(
        ate <= 1e-9 && cost <= 1e-18 && elapsed < Duration::from_secs(1) && est.len() == cfg.rendezvous_count,
        format!("{} rendezvous, ATE {ate:.2e}, final cost {cost:.2e}, {elapsed:.1?}", est.len()),
    )
}

fn small_solver_oracle() -> Outcome {
    let params = InfoParams::default();
    let mut worst = 0.0f64;
    for case in 0..20u64 {
        let mut rng = stream_rng(case, 0x4e4d, 0);
        let mut pose = || {
            Pose2::new(
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
            )
        };
        // A0, B0, A1, B1
        let truth = [pose(), pose(), pose(), pose()];
        let mut rng = stream_rng(case, 0x4e4d, 1);
        let mut noise = |s: f64| {
            if s == 0.0 {
                return Pose2::identity();
            }
            Pose2::new(rng.random_range(-s..s), rng.random_range(-s..s), rng.random_range(-s..s))
        };
        let tilt = EulerAngles::new(0.05, -0.03, 0.0);
        let odom = information_matrix(EdgeKind::Odometry, &tilt, &params).diagonal();
        let mutual = information_matrix(EdgeKind::Mutual, &tilt, &params).diagonal();
        let specs = [
            (EdgeKind::Odometry, 0, 2, odom, 0.0),
            (EdgeKind::Odometry, 1, 3, odom, 0.0),
            (EdgeKind::Mutual, 0, 1, mutual, 0.0),
            (EdgeKind::Mutual, 2, 3, mutual, 0.2),
        ];
        let mut graph = PoseGraph::new();
        let start: Vec<Pose2> = truth.iter().enumerate().map(|(i, t)| if i == 0 { *t } else { *t * noise(0.3) }).collect();
        for (id, p) in start.iter().enumerate() {
            let robot = if id % 2 == 0 { Robot::A } else { Robot::B };
            graph
                .add_vertex(Vertex { id, robot, index: id / 2, pose: *p })
                .map_err(|e| e.to_string())?;
        }
        let mut raw = Vec::new();
        for (kind, from, to, info, s) in specs {
            let z = truth[from].between(&truth[to]) * noise(s);
            graph
                .add_edge(Edge { kind, from, to, measurement: z, information: info })
                .map_err(|e| e.to_string())?;
            raw.push(RawEdge { from, to, z: z.into(), info: [info.x, info.y, info.z] });
        }
        let lm = optimize(&graph, 0, &SolverConfig::default()).map_err(|e| e.to_string())?;

        let anchor: [f64; 3] = start[0].into();
        let objective = |v: &[f64]| {
            let poses = [anchor, [v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]];
            raw_cost(&poses, &raw)
        };
        let x0: Vec<f64> = start[1..].iter().flat_map(|p| <[f64; 3]>::from(*p)).collect();
        let nm = nelder_mead(&objective, &x0, 0.2, 1e-16);
        for id in 1..4 {
            let p = lm.graph.pose(id).expect("vertex present");
            let q = &nm[3 * (id - 1)..3 * id];
            let dyaw = mutloc::geometry::normalize_angle(p.yaw() - q[2]);
            worst = worst.max((p.x() - q[0]).abs()).max((p.y() - q[1]).abs()).max(dyaw.abs());
        }
    }
    check(worst <= 1e-3, format!("20 cases, max DoF difference LM vs Nelder-Mead {worst:.2e}"))
}

fn trend_reproduction() -> Outcome {
    let start = Instant::now();
    let mut ates: [Vec<f64>; 4] = Default::default();
    for seed in 0..100 {
        let cfg = ScenarioConfig { seed, ..ScenarioConfig::default() };
        let trace = run_pipeline(&cfg, &Stage::ALL).map_err(|e| format!("seed {seed}: {e}"))?;
        for (i, stage) in Stage::ALL.iter().enumerate() {
            let (gt, est) = trace.estimate_pairs(*stage).expect("stage requested");
            ates[i].push(ate_planar(&gt, &est).map_err(|e| e.to_string())?);
        }
    }
    let elapsed = start.elapsed();
    let [iml, ir, pgo, full] = ates.map(|mut v| median(&mut v));
    check(
        full < ir && full < iml && full <= 0.5 * iml && elapsed < Duration::from_secs(120),
        format!(
            "median ATE iml {iml:.3}, iml+ir {ir:.3}, iml+pgo {pgo:.3}, full {full:.3} (ratio {:.2}), {elapsed:.1?}",
            full / iml
        ),
    )
}

fn tangent_error(target: &Pose3, pose: &Pose3) -> f64 {
    (*target * pose.inverse()).log().map(|t| t.norm()).unwrap_or(f64::NAN)
}

fn refinement_decay() -> Outcome {
    let model = RobotModel::default_robot();
    let cfg = RefinementConfig::default();
    let mut rng = stream_rng(10, 0xdec, 0);
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for case in 0..100u64 {
        let target = Pose2::new(rng.random_range(2.0..5.0), rng.random_range(-1.0..1.0), rng.random_range(-3.0..3.0)).lift();
        let error = random_pose3(&mut rng, 20f64.to_radians(), 0.3 / 3f64.sqrt());
        let init = error * target;
        let ctx = RefinementContext { target, model: &model };
        let mut oracle = DampedNoisyOracle::new(0.5, 0.0, 0.0, case).map_err(|e| e.to_string())?;
        let out = refine(&init, &mut oracle, &cfg, &ctx).map_err(|e| e.to_string())?;
        for w in out.trace.windows(2) {
            let ratio = tangent_error(&target, &w[1].pose) / tangent_error(&target, &w[0].pose);
            lo = lo.min(ratio);
            hi = hi.max(ratio);
        }
    }

    let target = Pose2::new(3.0, 0.5, 2.5).lift();
    let init = Twist::new(Vector3::zeros(), Vector3::new(0.0, 0.0, 20f64.to_radians())).exp() * target;
    let ctx = RefinementContext { target, model: &model };
    let mut oracle = DampedNoisyOracle::new(0.5, 0.0, 0.0, 0).map_err(|e| e.to_string())?;
    let out = refine(&init, &mut oracle, &cfg, &ctx).map_err(|e| e.to_string())?;
    let yaw = (target * out.pose.inverse()).rotation_angle().to_degrees();
    check(
        lo >= 0.45 && hi <= 0.55 && (yaw - 1.25).abs() <= 0.125 && out.iterations() == 4,
        format!("per-step ratio in [{lo:.4}, {hi:.4}], yaw after {} iterations {yaw:.4} deg", out.iterations()),
    )
}

fn map_fusion_chain() -> Outcome {
    let cfg = ScenarioConfig::default().noise_free();
    let trace = run_pipeline(&cfg, &[Stage::Full]).map_err(|e| e.to_string())?;
    let mut worst_fusion = 0.0f64;
    for index in 1..=cfg.rendezvous_count {
        let e = map_fusion_error(&trace, index).map_err(|e| e.to_string())?;
        worst_fusion = worst_fusion.max(e.rotation_deg).max(e.translation_cm);
    }

    let mut rng = stream_rng(11, 0xf05, 0);
    let mut worst_identity = 0.0f64;
    for _ in 0..1000 {
        let [a0, ai, bi, b0] = std::array::from_fn(|_| random_pose3(&mut rng, 3.0, 10.0));
        let chained = map_origin_transform(&a0.between(&ai), &ai.between(&bi), &bi.between(&b0));
        let direct = a0.between(&b0);
        let d = (chained.rotation() - direct.rotation())
            .abs()
            .max()
            .max((chained.translation() - direct.translation()).abs().max());
        worst_identity = worst_identity.max(d);
    }
    check(
        worst_fusion <= 1e-9 && worst_identity <= 1e-9,
        format!(
            "exact-estimate fusion error {worst_fusion:.2e} (deg/cm); 1000 frame triples max deviation {worst_identity:.2e}"
        ),
    )
}

fn loss_anchors() -> Outcome {
    let bce = observation_loss(&[0.5], &[true]).map_err(|e| e.to_string())?;
    let offset = Tensor::from_fn(2, 6, 5, |c, _, _| if c == 0 { 3.0 } else { 4.0 });
    let epe = epe_flow_loss(&offset, &Tensor::zeros(2, 6, 5)).map_err(|e| e.to_string())?;
    let model = RobotModel::default_robot();
    let target = Pose2::new(2.0, -1.0, 0.7).lift();
    let shifted = Pose3::from_translation(0.1, 0.0, 0.0) * target;
    let pm = point_matching_loss(&shifted, &target, &model).map_err(|e| e.to_string())?;
    check(
        (bce - LN_2).abs() <= 1e-12 && (epe - 5.0).abs() <= 1e-12 && (pm - 0.1).abs() <= 1e-12,
        format!(
            "BCE - ln2 = {:.1e}, EPE - 5 = {:.1e}, L_pm - 0.1 = {:.1e}",
            bce - LN_2,
            epe - 5.0,
            pm - 0.1
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("gradient correctness", gradient_correctness),
        ("ACN oracle equivalence", acn_oracle),
        ("softmax simplex", softmax_simplex),
        ("graph cardinalities", graph_cardinalities),
        ("information matrix values", information_values),
        ("outlier gating", outlier_gating),
        ("noise-free recovery", noise_free_recovery),
        ("small-instance solver oracle", small_solver_oracle),
        ("stage trend", trend_reproduction),
        ("refinement decay", refinement_decay),
        ("map fusion chain", map_fusion_chain),
        ("loss anchors", loss_anchors),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
