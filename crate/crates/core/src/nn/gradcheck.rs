//! Central finite-difference verification of the ACN and inception-block
//! backward passes.
//!
//! Each check reduces the layer output to the scalar `L = Σ G ⊙ f(x)` for a
//! random upstream tensor `G`, so the analytic gradient is the backward
//! pass fed with `G`. Numeric derivatives difference the perturbed outputs
//! element-wise before reducing, which keeps round-off well below the
//! tolerance.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::acn::{AcnConfig, AcnLayer, DEFAULT_KERNEL_SIZES};
use super::conv::Direction;
use super::inception::AnisoInceptionBlock;
use super::{KernelError, Tensor};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;
/// Denominator floor of the relative error, so gradients that are exactly
/// zero are compared in absolute terms.
pub const RELATIVE_FLOOR: f64 = 1e-5;

pub const DEFAULT_SIZES: [(usize, usize, usize); 3] = [(1, 7, 5), (2, 8, 8), (4, 16, 16)];

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    pub sizes: Vec<(usize, usize, usize)>,
    pub kernel_sizes: Vec<usize>,
    pub seed: u64,
    pub step: f64,
    pub tolerance: f64,
    /// Test hook: perturb the analytic gradient of every group whose name
    /// ends with this string.
    pub fault: Option<String>,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            sizes: DEFAULT_SIZES.to_vec(),
            kernel_sizes: DEFAULT_KERNEL_SIZES.to_vec(),
            seed: 0,
            step: DEFAULT_STEP,
            tolerance: DEFAULT_TOLERANCE,
            fault: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupReport {
    pub name: String,
    pub parameters: usize,
    pub max_relative_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub groups: Vec<GroupReport>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.groups.iter().all(|g| g.max_relative_error < self.tolerance)
    }

    pub fn failures(&self) -> impl Iterator<Item = &GroupReport> {
        self.groups
            .iter()
            .filter(|g| !(g.max_relative_error < self.tolerance))
    }

    pub fn max_error(&self) -> f64 {
        self.groups
            .iter()
            .map(|g| g.max_relative_error)
            .fold(0.0, f64::max)
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for g in &self.groups {
            let status = if g.max_relative_error < self.tolerance { "ok" } else { "FAIL" };
            writeln!(
                f,
                "{:<40} {:>6} params  max rel err {:.3e}  {status}",
                g.name, g.parameters, g.max_relative_error
            )?;
        }
        Ok(())
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

struct Checker<'a> {
    cfg: &'a GradCheckConfig,
    upstream: &'a Tensor,
    prefix: String,
    groups: Vec<GroupReport>,
}

impl Checker<'_> {
    /// `forward(i, delta)` evaluates the layer with parameter `i` shifted by `delta`.
    fn group(
        &mut self,
        name: &str,
        analytic: &[f64],
        mut forward: impl FnMut(usize, f64) -> Result<Tensor, KernelError>,
    ) -> Result<(), KernelError> {
        if analytic.is_empty() {
            return Ok(());
        }
        let corrupt = self.cfg.fault.as_deref().is_some_and(|f| name.ends_with(f));
        let h = self.cfg.step;
        let mut worst = 0.0f64;
        for (i, &a) in analytic.iter().enumerate() {
            let plus = forward(i, h)?;
            let minus = forward(i, -h)?;
            let numeric: f64 = self
                .upstream
                .as_slice()
                .iter()
                .zip(plus.as_slice().iter().zip(minus.as_slice()))
                .map(|(g, (p, m))| g * (p - m))
                .sum::<f64>()
                / (2.0 * h);
            let a = if corrupt { a * 1.01 + 1e-3 } else { a };
            worst = worst.max(relative_error(a, numeric));
        }
        self.groups.push(GroupReport {
            name: format!("{}/{}", self.prefix, name),
            parameters: analytic.len(),
            max_relative_error: worst,
        });
        Ok(())
    }
}

fn random_tensor(shape: (usize, usize, usize), rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape.0, shape.1, shape.2, |_, _, _| rng.random_range(-1.0..1.0))
}

fn shifted(x: &Tensor, i: usize, delta: f64) -> Tensor {
    let mut y = x.clone();
    y.as_mut_slice()[i] += delta;
    y
}

fn kernel_group_name(prefix: &str, dir: Direction, size: usize) -> String {
    format!("{prefix}kernel.{}.k{size}", dir.name())
}

/// Runs the full suite over every configured tensor size.
pub fn run_gradcheck(cfg: &GradCheckConfig) -> Result<GradCheckReport, KernelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut groups = Vec::new();
    for &shape in &cfg.sizes {
        let (c, w, h) = shape;
        let x = random_tensor(shape, &mut rng);
        let upstream = random_tensor(shape, &mut rng);
        let mut checker = Checker {
            cfg,
            upstream: &upstream,
            prefix: format!("{c}x{w}x{h}"),
            groups: Vec::new(),
        };

        // standalone ACN layer
        let layer = AcnLayer::random(AcnConfig::new(c, &cfg.kernel_sizes)?, 0.5, &mut rng)?;
        let grads = layer.backward(&x, &upstream)?;
        checker.group("acn.input", grads.input.as_slice(), |i, d| {
            layer.forward(&shifted(&x, i, d))
        })?;
        checker.group("acn.pointwise", &grads.pointwise, |i, d| {
            let mut l = layer.clone();
            l.pointwise_mut().weights_mut()[i] += d;
            l.forward(&x)
        })?;
        for (j, kernel) in layer.kernels().iter().enumerate() {
            let name = kernel_group_name("acn.", kernel.direction(), kernel.size());
            checker.group(&name, &grads.kernels[j], |i, d| {
                let mut l = layer.clone();
                l.kernels_mut()[j].weights_mut()[i] += d;
                l.forward(&x)
            })?;
        }

        // inception block with an even channel split
        let block = AnisoInceptionBlock::random(c, &cfg.kernel_sizes, 0.5, &mut rng)?;
        let grads = block.backward(&x, &upstream)?;
        checker.group("inception.input", grads.input.as_slice(), |i, d| {
            block.forward(&shifted(&x, i, d))
        })?;
        checker.group("inception.band_x", &grads.band_x, |i, d| {
            let mut b = block.clone();
            b.band_x_mut().weights_mut()[i] += d;
            b.forward(&x)
        })?;
        checker.group("inception.band_y", &grads.band_y, |i, d| {
            let mut b = block.clone();
            b.band_y_mut().weights_mut()[i] += d;
            b.forward(&x)
        })?;
        checker.group("inception.acn.pointwise", &grads.acn.pointwise, |i, d| {
            let mut b = block.clone();
            b.acn_mut().pointwise_mut().weights_mut()[i] += d;
            b.forward(&x)
        })?;
        for (j, kernel) in block.acn().kernels().iter().enumerate() {
            let name = kernel_group_name("inception.acn.", kernel.direction(), kernel.size());
            checker.group(&name, &grads.acn.kernels[j], |i, d| {
                let mut b = block.clone();
                b.acn_mut().kernels_mut()[j].weights_mut()[i] += d;
                b.forward(&x)
            })?;
        }
        groups.extend(checker.groups);
    }
    Ok(GradCheckReport {
        tolerance: cfg.tolerance,
        groups,
    })
}
