//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use mutloc::geometry::{Pose3, Twist};
use mutloc::nn::{AcnLayer, Direction, Tensor};
use nalgebra::Vector3;
use rand::Rng;

/// Straight nested-loop ACN forward pass written from the layer definition:
/// per-pixel logits from the point-wise weights, a softmax over each
/// direction's kernels, then the residual sum of the mixed kernel outputs.
pub fn naive_acn(layer: &AcnLayer, input: &Tensor) -> Tensor {
    let (channels, width, height) = input.shape();
    let sizes = &layer.config().kernel_sizes;
    let n = sizes.len();
    let p = layer.pointwise().weights();
    let mut out = input.clone();
    for x in 0..width {
        for y in 0..height {
            let mut w = vec![[0.0f64; 2]; n];
            for dir in 0..2 {
                let logits: Vec<f64> = (0..n)
                    .map(|v| {
                        let j = 2 * v + dir;
                        (0..channels).map(|i| p[j * channels + i] * input[(i, x, y)]).sum()
                    })
                    .collect();
                let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
                for v in 0..n {
                    w[v][dir] = (logits[v] - max).exp() / z;
                }
            }
            for c in 0..channels {
                let mut acc = 0.0;
                for (v, &size) in sizes.iter().enumerate() {
                    let r = (size / 2) as isize;
                    for (d, dir) in [Direction::X, Direction::Y].into_iter().enumerate() {
                        let k = layer.kernel(dir, v).weights();
                        let mut conv = 0.0;
                        for t in 0..size {
                            let off = t as isize - r;
                            let (sx, sy) = match dir {
                                Direction::X => (x as isize + off, y as isize),
                                Direction::Y => (x as isize, y as isize + off),
                            };
                            if sx < 0 || sy < 0 || sx >= width as isize || sy >= height as isize {
                                continue;
                            }
                            conv += k[c * size + t] * input[(c, sx as usize, sy as usize)];
                        }
                        acc += w[v][d] * conv;
                    }
                }
                out[(c, x, y)] += acc;
            }
        }
    }
    out
}

fn wrap(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let r = (a + std::f64::consts::PI).rem_euclid(two_pi) - std::f64::consts::PI;
    if r <= -std::f64::consts::PI {
        r + two_pi
    } else {
        r
    }
}

/// `a⁻¹ · b` on raw `[x, y, yaw]` triples.
pub fn relative(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    let (s, c) = a[2].sin_cos();
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    [c * dx + s * dy, -s * dx + c * dy, wrap(b[2] - a[2])]
}

/// SE(2) logarithm of a raw triple as `(ρx, ρy, θ)`.
pub fn se2_log(p: [f64; 3]) -> [f64; 3] {
    let th = wrap(p[2]);
    if th.abs() < 1e-9 {
        return [p[0], p[1], th];
    }
    let a = th.sin() / th;
    let b = (1.0 - th.cos()) / th;
    let det = a * a + b * b;
    [(a * p[0] + b * p[1]) / det, (-b * p[0] + a * p[1]) / det, th]
}

/// A relative-pose constraint on raw triples.
pub struct RawEdge {
    pub from: usize,
    pub to: usize,
    pub z: [f64; 3],
    pub info: [f64; 3],
}

/// `½ Σ rᵀ Ω r` with `r = log(Z⁻¹ · x_from⁻¹ · x_to)`.
pub fn raw_cost(poses: &[[f64; 3]], edges: &[RawEdge]) -> f64 {
    edges
        .iter()
        .map(|e| {
            let d = relative(poses[e.from], poses[e.to]);
            let r = se2_log(relative(e.z, d));
            0.5 * (0..3).map(|i| e.info[i] * r[i] * r[i]).sum::<f64>()
        })
        .sum()
}

/// Nelder–Mead with dimension-adapted coefficients, restarted from the best
/// vertex until a restart stops improving.
pub fn nelder_mead(f: &dyn Fn(&[f64]) -> f64, start: &[f64], scale: f64, tol: f64) -> Vec<f64> {
    let n = start.len();
    let nf = n as f64;
    let (alpha, gamma, rho, sigma) = (1.0, 1.0 + 2.0 / nf, 0.75 - 0.5 / nf, 1.0 - 1.0 / nf);
    let mut best = start.to_vec();
    let mut best_val = f(&best);
    let mut step = scale;
    for _restart in 0..50 {
        let mut simplex: Vec<Vec<f64>> = vec![best.clone()];
        for i in 0..n {
            let mut p = best.clone();
            p[i] += step;
            simplex.push(p);
        }
        let mut vals: Vec<f64> = simplex.iter().map(|p| f(p)).collect();
        for _ in 0..20_000 {
            let mut order: Vec<usize> = (0..=n).collect();
            order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
            simplex = order.iter().map(|&i| simplex[i].clone()).collect();
            vals = order.iter().map(|&i| vals[i]).collect();
            if (vals[n] - vals[0]).abs() <= tol * (1.0 + vals[0].abs()) {
                let spread = simplex
                    .iter()
                    .flat_map(|p| p.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
                    .fold(0.0, f64::max);
                if spread < 1e-9 {
                    break;
                }
            }
            let centroid: Vec<f64> =
                (0..n).map(|j| simplex[..n].iter().map(|p| p[j]).sum::<f64>() / nf).collect();
            let along = |t: f64| -> Vec<f64> {
                (0..n).map(|j| centroid[j] + t * (simplex[n][j] - centroid[j])).collect()
            };
            let xr = along(-alpha);
            let fr = f(&xr);
            if fr < vals[0] {
                let xe = along(-alpha * gamma);
                let fe = f(&xe);
                if fe < fr {
                    simplex[n] = xe;
                    vals[n] = fe;
                } else {
                    simplex[n] = xr;
                    vals[n] = fr;
                }
            } else if fr < vals[n - 1] {
                simplex[n] = xr;
                vals[n] = fr;
            } else {
                let (xc, fc) = if fr < vals[n] {
                    let xc = along(-alpha * rho);
                    let fc = f(&xc);
                    (xc, fc)
                } else {
                    let xc = along(rho);
                    let fc = f(&xc);
                    (xc, fc)
                };
                if fc < vals[n].min(fr) {
                    simplex[n] = xc;
                    vals[n] = fc;
                } else {
                    for i in 1..=n {
                        for j in 0..n {
                            simplex[i][j] = simplex[0][j] + sigma * (simplex[i][j] - simplex[0][j]);
                        }
                        vals[i] = f(&simplex[i]);
                    }
                }
            }
        }
        let (i, &v) = vals
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty simplex");
        let improved = best_val - v;
        if v < best_val {
            best = simplex[i].clone();
            best_val = v;
        }
        if improved <= tol * (1.0 + best_val.abs()) && step < 1e-3 {
            break;
        }
        step = (step * 0.5).max(1e-6);
    }
    best
}

pub fn random_pose3<R: Rng + ?Sized>(rng: &mut R, max_angle: f64, max_translation: f64) -> Pose3 {
    let axis = loop {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            break v / n;
        }
    };
    let angle = rng.random_range(0.0..max_angle);
    let t = Vector3::new(
        rng.random_range(-max_translation..max_translation),
        rng.random_range(-max_translation..max_translation),
        rng.random_range(-max_translation..max_translation),
    );
    Pose3::new(
        Twist::new(Vector3::zeros(), axis * angle).exp().rotation().to_owned(),
        t,
    )
    .expect("rotation from exp is orthonormal")
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}
