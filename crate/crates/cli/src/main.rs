//! `mutloc` batch front end.
//!
//! Exit codes: 0 success, 1 computational failure, 2 usage or input error.

mod output;

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};
use mutloc::metrics::{ate, dof_error_stats, summarize, write_summary_csv, SummaryRow};
use mutloc::nn::{run_gradcheck, GradCheckConfig};
use mutloc::posegraph::{optimize, PoseGraph, PoseGraphError, SolverConfig};
use mutloc::simulator::{run_pipeline, ScenarioConfig, SimulationTrace, Stage};
use mutloc::trajectory::Trajectory;

use output::{write_atomic, Manifest};

/// Version of the text and CSV layouts written by this tool.
const FORMAT_VERSION: u32 = 1;

const VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), " (output format 1)");

#[derive(Parser, Debug)]
#[command(name = "mutloc", version = VERSION, about = "Two-robot mutual localization: simulation, solver and evaluation tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the staged pipeline over one or more seeds of a scenario.
    Simulate {
        /// Scenario configuration (JSON).
        config: PathBuf,
        /// Comma-separated stages: iml, iml+ir, iml+pgo, full.
        #[arg(long, default_value = "iml,iml+ir,iml+pgo,full")]
        stages: String,
        /// Seeds as a list (`1,2,5`) and/or ranges (`0..10`, `0..=9`).
        /// Defaults to the seed in the config.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long, env = "MUTLOC_OUT_DIR", default_value = "mutloc-out")]
        out: PathBuf,
    },
    /// Finite-difference check of the anisotropic kernel gradients.
    Gradcheck {
        /// Tensor shapes as `CxWxH`, comma separated.
        #[arg(long)]
        sizes: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Corrupt the analytic gradient of groups ending in this name.
        #[arg(long, hide = true)]
        inject_fault: Option<String>,
    },
    /// Solve a pose graph file.
    Optimize {
        graph: PathBuf,
        /// Vertex held fixed; defaults to the smallest id.
        #[arg(long)]
        anchor: Option<usize>,
        #[arg(long, env = "MUTLOC_OUT_DIR", default_value = "mutloc-out")]
        out: PathBuf,
    },
    /// Compare an estimated trajectory against ground truth.
    Evaluate {
        gt: PathBuf,
        est: PathBuf,
        /// Also write the metrics CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Failure split by exit code.
#[derive(Debug)]
enum Failure {
    Usage(anyhow::Error),
    Compute(anyhow::Error),
}

impl Failure {
    fn usage(e: impl Into<anyhow::Error>) -> Self {
        Failure::Usage(e.into())
    }

    fn compute(e: impl Into<anyhow::Error>) -> Self {
        Failure::Compute(e.into())
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate {
            config,
            stages,
            seeds,
            out,
        } => simulate(&config, &stages, seeds.as_deref(), &out),
        Command::Gradcheck {
            sizes,
            seed,
            inject_fault,
        } => gradcheck(sizes.as_deref(), seed, inject_fault),
        Command::Optimize { graph, anchor, out } => optimize_cmd(&graph, anchor, &out),
        Command::Evaluate { gt, est, out } => evaluate(&gt, &est, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Compute(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn read_input(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::usage(anyhow!("cannot read {}: {e}", path.display())))
}

fn parse_seeds(list: &str) -> anyhow::Result<Vec<u64>> {
    let mut seeds = Vec::new();
    for part in list.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let parse = |s: &str| s.trim().parse::<u64>().with_context(|| format!("bad seed '{s}'"));
        if let Some((a, b)) = part.split_once("..=") {
            seeds.extend(parse(a)?..=parse(b)?);
        } else if let Some((a, b)) = part.split_once("..") {
            seeds.extend(parse(a)?..parse(b)?);
        } else {
            seeds.push(parse(part)?);
        }
    }
    if seeds.is_empty() {
        return Err(anyhow!("no seeds in '{list}'"));
    }
    let mut seen = BTreeSet::new();
    if let Some(dup) = seeds.iter().find(|s| !seen.insert(**s)) {
        return Err(anyhow!("seed {dup} listed twice"));
    }
    Ok(seeds)
}

fn file_stage(stage: Stage) -> String {
    stage.name().replace('+', "_")
}

fn simulate(config: &Path, stages: &str, seeds: Option<&str>, out: &Path) -> CmdResult {
    let text = read_input(config)?;
    let cfg = ScenarioConfig::from_json(&text)
        .map_err(|e| Failure::usage(anyhow!("{}: {e}", config.display())))?;
    let stages = Stage::parse_list(stages).map_err(Failure::usage)?;
    let seeds = match seeds {
        Some(s) => parse_seeds(s).map_err(Failure::usage)?,
        None => vec![cfg.seed],
    };

    let traces = run_seeds(&cfg, &stages, &seeds).map_err(Failure::compute)?;
    let mut summary: Vec<SummaryRow> = Vec::new();
    for trace in &traces {
        summary.extend(summarize(trace).with_context(|| format!("seed {}", trace.seed)).map_err(Failure::compute)?);
    }

    // everything is computed; only now touch the output directory
    for trace in &traces {
        write_trace(out, trace).map_err(Failure::compute)?;
    }
    let mut csv = Vec::new();
    write_summary_csv(&summary, &mut csv).map_err(Failure::compute)?;
    write_atomic(&out.join("summary.csv"), &csv).map_err(Failure::compute)?;
    let manifest = Manifest {
        config: config.display().to_string(),
        seeds: seeds.clone(),
        stages: stages.iter().map(|s| s.name().to_string()).collect(),
        out: out.display().to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        format_version: FORMAT_VERSION,
    };
    write_atomic(&out.join("manifest.json"), manifest.to_json().as_bytes()).map_err(Failure::compute)?;

    println!("seed,stage,samples,x_mean_cm,y_mean_cm,yaw_mean_deg,ate");
    for r in &summary {
        println!(
            "{},{},{},{:.3},{:.3},{:.3},{:.4}",
            r.seed, r.stage, r.samples, r.x_mean_cm, r.y_mean_cm, r.yaw_mean_deg, r.ate
        );
    }
    Ok(())
}

/// Runs seeds on scoped worker threads; results keep the seed order.
fn run_seeds(cfg: &ScenarioConfig, stages: &[Stage], seeds: &[u64]) -> anyhow::Result<Vec<SimulationTrace>> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(seeds.len());
    let chunk = seeds.len().div_ceil(workers);
    let results: Vec<anyhow::Result<Vec<SimulationTrace>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    part.iter()
                        .map(|&seed| {
                            let cfg = ScenarioConfig { seed, ..cfg.clone() };
                            run_pipeline(&cfg, stages).with_context(|| format!("seed {seed}"))
                        })
                        .collect()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut traces = Vec::with_capacity(seeds.len());
    for r in results {
        traces.extend(r?);
    }
    Ok(traces)
}

fn write_trace(out: &Path, trace: &SimulationTrace) -> anyhow::Result<()> {
    let dir = out.join(format!("seed_{}", trace.seed));
    let mut csv = Vec::new();
    trace.write_csv(&mut csv)?;
    write_atomic(&dir.join("trace.csv"), &csv)?;

    let s = &trace.scenario;
    let indexed = |poses: &[mutloc::geometry::Pose2]| Trajectory::Planar(poses.iter().copied().enumerate().collect());
    write_atomic(&dir.join("truth_a.txt"), indexed(&s.truth_a).to_text().as_bytes())?;
    write_atomic(&dir.join("truth_b.txt"), indexed(&s.truth_b).to_text().as_bytes())?;
    write_atomic(&dir.join("odom_a.txt"), indexed(&trace.odom_a).to_text().as_bytes())?;
    write_atomic(&dir.join("odom_b.txt"), indexed(&trace.odom_b).to_text().as_bytes())?;

    for stage in &trace.stages {
        let name = file_stage(stage.stage);
        let est: Vec<_> = trace
            .measurements
            .iter()
            .zip(&stage.estimates)
            .filter_map(|(m, e)| e.map(|e| (m.index, e)))
            .collect();
        write_atomic(&dir.join(format!("estimate_{name}.txt")), Trajectory::Planar(est).to_text().as_bytes())?;
        if let Some(graph) = &stage.graph {
            write_atomic(&dir.join(format!("graph_{name}.txt")), graph.to_text().as_bytes())?;
        }
    }
    Ok(())
}

fn parse_sizes(list: &str) -> anyhow::Result<Vec<(usize, usize, usize)>> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            let dims: Vec<usize> = s
                .split('x')
                .map(|d| d.parse::<usize>())
                .collect::<Result<_, _>>()
                .with_context(|| format!("bad size '{s}'"))?;
            match dims[..] {
                [c, w, h] if c > 0 && w > 0 && h > 0 => Ok((c, w, h)),
                _ => Err(anyhow!("size '{s}' must be CxWxH with positive dimensions")),
            }
        })
        .collect()
}

fn gradcheck(sizes: Option<&str>, seed: u64, fault: Option<String>) -> CmdResult {
    let mut cfg = GradCheckConfig {
        seed,
        fault,
        ..GradCheckConfig::default()
    };
    if let Some(s) = sizes {
        cfg.sizes = parse_sizes(s).map_err(Failure::usage)?;
        if cfg.sizes.is_empty() {
            return Err(Failure::usage(anyhow!("no sizes given")));
        }
    }
    let report = run_gradcheck(&cfg).map_err(Failure::compute)?;
    print!("{report}");
    if report.passed() {
        println!("gradcheck passed: max relative error {:.3e}", report.max_error());
        Ok(())
    } else {
        let names: Vec<&str> = report.failures().map(|g| g.name.as_str()).collect();
        Err(Failure::compute(anyhow!("gradient mismatch in {}", names.join(", "))))
    }
}

fn optimize_cmd(path: &Path, anchor: Option<usize>, out: &Path) -> CmdResult {
    let text = read_input(path)?;
    let graph = PoseGraph::parse(&text).map_err(|e| Failure::usage(anyhow!("{}: {e}", path.display())))?;
    let anchor = match anchor {
        Some(a) => a,
        None => graph
            .vertices()
            .iter()
            .map(|v| v.id)
            .min()
            .ok_or_else(|| Failure::usage(anyhow!("{}: graph has no vertices", path.display())))?,
    };
    let result = optimize(&graph, anchor, &SolverConfig::default()).map_err(|e| match e {
        PoseGraphError::UnknownVertex(_) | PoseGraphError::NotConnected { .. } => Failure::usage(e),
        other => Failure::compute(other),
    })?;

    let mut history = String::from("iteration,cost\n");
    for (i, c) in result.cost_history.iter().enumerate() {
        let _ = writeln!(history, "{i},{c:.16e}");
    }
    let stem = path.file_stem().map_or("graph".into(), |s| s.to_string_lossy().into_owned());
    write_atomic(&out.join(format!("{stem}_optimized.txt")), result.graph.to_text().as_bytes())
        .map_err(Failure::compute)?;
    write_atomic(&out.join(format!("{stem}_cost.csv")), history.as_bytes()).map_err(Failure::compute)?;

    println!(
        "iterations {} initial cost {:.6e} final cost {:.6e} converged {}",
        result.iterations,
        result.cost_history[0],
        result.final_cost(),
        result.converged
    );
    if result.converged {
        Ok(())
    } else {
        Err(Failure::compute(anyhow!(
            "no convergence after {} iterations (damping {:.1e}, cost {:.6e})",
            result.iterations,
            result.lambda,
            result.final_cost()
        )))
    }
}

fn evaluate(gt_path: &Path, est_path: &Path, out: Option<&Path>) -> CmdResult {
    let load = |p: &Path| -> Result<Trajectory, Failure> {
        Trajectory::parse(&read_input(p)?).map_err(|e| Failure::usage(anyhow!("{}: {e}", p.display())))
    };
    let gt = load(gt_path)?;
    let est = load(est_path)?;
    if gt.len() != est.len() || gt.is_empty() {
        return Err(Failure::usage(anyhow!(
            "{} has {} poses but {} has {}",
            gt_path.display(),
            gt.len(),
            est_path.display(),
            est.len()
        )));
    }
    let ate = ate(&gt.to_se3(), &est.to_se3()).map_err(Failure::compute)?;
    let stats = dof_error_stats(&gt.to_se2(), &est.to_se2()).map_err(Failure::compute)?;
    let mut csv = String::from("metric,value\n");
    for (name, v) in [
        ("samples", gt.len() as f64),
        ("ate", ate),
        ("x_mean_cm", stats.x_cm.mean),
        ("x_std_cm", stats.x_cm.std),
        ("y_mean_cm", stats.y_cm.mean),
        ("y_std_cm", stats.y_cm.std),
        ("yaw_mean_deg", stats.yaw_deg.mean),
        ("yaw_std_deg", stats.yaw_deg.std),
    ] {
        let _ = writeln!(csv, "{name},{v}");
    }
    print!("{csv}");
    if let Some(out) = out {
        write_atomic(out, csv.as_bytes()).map_err(Failure::compute)?;
    }
    Ok(())
}
