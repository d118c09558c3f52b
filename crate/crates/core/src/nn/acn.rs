//! Anisotropic convolution: every pixel mixes a bank of `1×k` and `k×1`
//! depthwise kernels with weights predicted by a point-wise convolution,
//! then adds the input back.
//!
//! For `n` kernel sizes the point-wise convolution emits `2n` logits per
//! pixel in the interleaved order `(x₁, y₁, …, xₙ, yₙ)`. A softmax over the
//! `n` logits of each direction turns them into mixing weights, so the
//! weights of one direction are positive and sum to one.

use rand::Rng;

use super::conv::{softmax_per_direction_into, weight_index, Direction, PointwiseConv, UnidirectionalKernel};
use super::{KernelError, Tensor};

pub const DEFAULT_KERNEL_SIZES: [usize; 3] = [3, 5, 7];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AcnConfig {
    pub kernel_sizes: Vec<usize>,
    pub channels: usize,
}

impl AcnConfig {
    pub fn new(channels: usize, kernel_sizes: &[usize]) -> Result<Self, KernelError> {
        if kernel_sizes.is_empty() {
            return Err(KernelError::InvalidConfig("at least one kernel size required".into()));
        }
        if let Some(&k) = kernel_sizes.iter().find(|&&k| k % 2 == 0) {
            return Err(KernelError::EvenKernel(k));
        }
        Ok(Self {
            kernel_sizes: kernel_sizes.to_vec(),
            channels,
        })
    }

    pub fn with_default_sizes(channels: usize) -> Self {
        Self {
            kernel_sizes: DEFAULT_KERNEL_SIZES.to_vec(),
            channels,
        }
    }

    pub fn kernel_count(&self) -> usize {
        self.kernel_sizes.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcnLayer {
    config: AcnConfig,
    pointwise: PointwiseConv,
    /// Indexed by [`weight_index`].
    kernels: Vec<UnidirectionalKernel>,
}

/// Gradients of a scalar loss with respect to the layer input and parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AcnGradients {
    pub input: Tensor,
    pub pointwise: Vec<f64>,
    /// Same indexing as the layer's kernels.
    pub kernels: Vec<Vec<f64>>,
}

/// Intermediate values kept from the forward pass for the backward pass.
struct ForwardCache {
    weights: Tensor,
    branches: Vec<Tensor>,
}

impl AcnLayer {
    /// Zero point-wise weights and zero kernels: the layer is the identity map.
    pub fn zeros(config: AcnConfig) -> Result<Self, KernelError> {
        let n = config.kernel_count();
        let mut kernels = Vec::with_capacity(2 * n);
        for &k in &config.kernel_sizes {
            for dir in Direction::BOTH {
                kernels.push(UnidirectionalKernel::zeros(dir, k, config.channels)?);
            }
        }
        Ok(Self {
            pointwise: PointwiseConv::zeros(config.channels, 2 * n),
            kernels,
            config,
        })
    }

    pub fn random<R: Rng + ?Sized>(config: AcnConfig, std: f64, rng: &mut R) -> Result<Self, KernelError> {
        let n = config.kernel_count();
        let pointwise = PointwiseConv::random(config.channels, 2 * n, std, rng);
        let mut kernels = Vec::with_capacity(2 * n);
        for &k in &config.kernel_sizes {
            for dir in Direction::BOTH {
                kernels.push(UnidirectionalKernel::random(dir, k, config.channels, std, rng)?);
            }
        }
        Ok(Self {
            config,
            pointwise,
            kernels,
        })
    }

    pub fn from_parts(
        config: AcnConfig,
        pointwise: PointwiseConv,
        kernels: Vec<UnidirectionalKernel>,
    ) -> Result<Self, KernelError> {
        let n = config.kernel_count();
        if pointwise.in_channels() != config.channels || pointwise.out_channels() != 2 * n {
            return Err(KernelError::ShapeMismatch(format!(
                "point-wise conv must map {} -> {} channels",
                config.channels,
                2 * n
            )));
        }
        if kernels.len() != 2 * n {
            return Err(KernelError::ShapeMismatch(format!("expected {} kernels", 2 * n)));
        }
        for (v, &k) in config.kernel_sizes.iter().enumerate() {
            for dir in Direction::BOTH {
                let kern = &kernels[weight_index(dir, v)];
                if kern.size() != k || kern.direction() != dir || kern.channels() != config.channels {
                    return Err(KernelError::ShapeMismatch(format!(
                        "kernel {} in direction {} does not match config",
                        v,
                        dir.name()
                    )));
                }
            }
        }
        Ok(Self {
            config,
            pointwise,
            kernels,
        })
    }

    pub fn config(&self) -> &AcnConfig {
        &self.config
    }

    pub fn pointwise(&self) -> &PointwiseConv {
        &self.pointwise
    }

    pub fn pointwise_mut(&mut self) -> &mut PointwiseConv {
        &mut self.pointwise
    }

    pub fn kernels(&self) -> &[UnidirectionalKernel] {
        &self.kernels
    }

    pub fn kernels_mut(&mut self) -> &mut [UnidirectionalKernel] {
        &mut self.kernels
    }

    pub fn kernel(&self, dir: Direction, v: usize) -> &UnidirectionalKernel {
        &self.kernels[weight_index(dir, v)]
    }

    fn check_input(&self, x: &Tensor) -> Result<(), KernelError> {
        if x.channels() != self.config.channels {
            return Err(KernelError::ShapeMismatch(format!(
                "ACN expects {} channels, got {}",
                self.config.channels,
                x.channels()
            )));
        }
        Ok(())
    }

    /// Raw point-wise logits, `2n × W × H`.
    pub fn logits(&self, x: &Tensor) -> Result<Tensor, KernelError> {
        self.check_input(x)?;
        self.pointwise.forward(x)
    }

    /// Per-pixel mixing weights, `2n × W × H`.
    pub fn mixing_weights(&self, x: &Tensor) -> Result<Tensor, KernelError> {
        let logits = self.logits(x)?;
        let (m, w, h) = logits.shape();
        let mut weights = Tensor::zeros(m, w, h);
        let mut lbuf = vec![0.0; m];
        let mut wbuf = vec![0.0; m];
        for p in 0..w * h {
            for j in 0..m {
                lbuf[j] = logits.channel(j)[p];
            }
            softmax_per_direction_into(&lbuf, &mut wbuf);
            for j in 0..m {
                weights.channel_mut(j)[p] = wbuf[j];
            }
        }
        Ok(weights)
    }

    fn forward_cached(&self, x: &Tensor) -> Result<(Tensor, ForwardCache), KernelError> {
        let weights = self.mixing_weights(x)?;
        let branches = self
            .kernels
            .iter()
            .map(|k| k.forward(x))
            .collect::<Result<Vec<_>, _>>()?;
        let mut out = x.clone();
        let plane = x.width() * x.height();
        for (j, branch) in branches.iter().enumerate() {
            let wj = weights.channel(j);
            for c in 0..x.channels() {
                let src = branch.channel(c);
                let dst = out.channel_mut(c);
                for p in 0..plane {
                    dst[p] += wj[p] * src[p];
                }
            }
        }
        Ok((out, ForwardCache { weights, branches }))
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor, KernelError> {
        self.forward_cached(x).map(|(out, _)| out)
    }

    /// Backward pass for `L = f(forward(x))` given `dL/d forward(x)`.
    pub fn backward(&self, x: &Tensor, grad_out: &Tensor) -> Result<AcnGradients, KernelError> {
        x.same_shape(grad_out)?;
        let (_, cache) = self.forward_cached(x)?;
        let plane = x.width() * x.height();
        let m = self.kernels.len();

        // residual path
        let mut grad_input = grad_out.clone();
        let mut grad_weights = Tensor::zeros(m, x.width(), x.height());
        let mut grad_kernels = Vec::with_capacity(m);
        for (j, kernel) in self.kernels.iter().enumerate() {
            let wj = cache.weights.channel(j);
            let mut grad_branch = Tensor::zeros(x.channels(), x.width(), x.height());
            {
                let gw = grad_weights.channel_mut(j);
                for c in 0..x.channels() {
                    let g = grad_out.channel(c);
                    let s = cache.branches[j].channel(c);
                    let gb = grad_branch.channel_mut(c);
                    for p in 0..plane {
                        gw[p] += g[p] * s[p];
                        gb[p] = g[p] * wj[p];
                    }
                }
            }
            let (gx, gk) = kernel.backward(x, &grad_branch)?;
            grad_input.add_assign(&gx);
            grad_kernels.push(gk);
        }

        // softmax Jacobian, separately for each direction
        let mut grad_logits = Tensor::zeros(m, x.width(), x.height());
        for p in 0..plane {
            for d in 0..2 {
                let dot: f64 = (d..m)
                    .step_by(2)
                    .map(|j| cache.weights.channel(j)[p] * grad_weights.channel(j)[p])
                    .sum();
                for j in (d..m).step_by(2) {
                    let w = cache.weights.channel(j)[p];
                    grad_logits.channel_mut(j)[p] = w * (grad_weights.channel(j)[p] - dot);
                }
            }
        }
        let (gx, grad_pointwise) = self.pointwise.backward(x, &grad_logits)?;
        grad_input.add_assign(&gx);

        Ok(AcnGradients {
            input: grad_input,
            pointwise: grad_pointwise,
            kernels: grad_kernels,
        })
    }
}
