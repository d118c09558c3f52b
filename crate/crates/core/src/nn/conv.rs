//! Depthwise unidirectional and point-wise convolutions with their backward passes.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{KernelError, Tensor};

/// Axis a unidirectional kernel slides along: `X` is a `1×k` kernel over
/// the width axis, `Y` a `k×1` kernel over the height axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    X,
    Y,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::X, Direction::Y];

    pub fn index(self) -> usize {
        match self {
            Direction::X => 0,
            Direction::Y => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Direction::X => "x",
            Direction::Y => "y",
        }
    }
}

/// Per-channel `1×k` or `k×1` kernel, zero same-padding, cross-correlation.
#[derive(Debug, Clone, PartialEq)]
pub struct UnidirectionalKernel {
    direction: Direction,
    size: usize,
    channels: usize,
    /// `weights[c * size + t]`
    weights: Vec<f64>,
}

impl UnidirectionalKernel {
    pub fn zeros(direction: Direction, size: usize, channels: usize) -> Result<Self, KernelError> {
        if size % 2 == 0 {
            return Err(KernelError::EvenKernel(size));
        }
        Ok(Self {
            direction,
            size,
            channels,
            weights: vec![0.0; size * channels],
        })
    }

    /// Centered unit impulse on every channel.
    pub fn delta(direction: Direction, size: usize, channels: usize) -> Result<Self, KernelError> {
        let mut k = Self::zeros(direction, size, channels)?;
        for c in 0..channels {
            k.weights[c * size + size / 2] = 1.0;
        }
        Ok(k)
    }

    pub fn from_weights(
        direction: Direction,
        size: usize,
        channels: usize,
        weights: Vec<f64>,
    ) -> Result<Self, KernelError> {
        if size % 2 == 0 {
            return Err(KernelError::EvenKernel(size));
        }
        if weights.len() != size * channels {
            return Err(KernelError::ShapeMismatch(format!(
                "{} kernel weights for {channels} channels of size {size}",
                weights.len()
            )));
        }
        Ok(Self {
            direction,
            size,
            channels,
            weights,
        })
    }

    pub fn random<R: Rng + ?Sized>(
        direction: Direction,
        size: usize,
        channels: usize,
        std: f64,
        rng: &mut R,
    ) -> Result<Self, KernelError> {
        let mut k = Self::zeros(direction, size, channels)?;
        let normal = Normal::new(0.0, std).expect("finite std");
        k.weights.iter_mut().for_each(|w| *w = normal.sample(rng));
        Ok(k)
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    fn check_input(&self, x: &Tensor) -> Result<(), KernelError> {
        if x.channels() != self.channels {
            return Err(KernelError::ShapeMismatch(format!(
                "kernel has {} channels, input has {}",
                self.channels,
                x.channels()
            )));
        }
        Ok(())
    }

    /// `(axis length, stride)` of the sliding axis within one channel plane.
    fn axis(&self, x: &Tensor) -> (usize, usize) {
        match self.direction {
            Direction::X => (x.width(), x.height()),
            Direction::Y => (x.height(), 1),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor, KernelError> {
        self.check_input(x)?;
        let (c_n, w, h) = x.shape();
        let mut out = Tensor::zeros(c_n, w, h);
        let (len, stride) = self.axis(x);
        let r = self.size / 2;
        for c in 0..c_n {
            let kw = &self.weights[c * self.size..(c + 1) * self.size];
            let src = x.channel(c);
            let dst = out.channel_mut(c);
            for p in 0..w * h {
                let pos = (p / stride) % len;
                let mut acc = 0.0;
                for (t, wt) in kw.iter().enumerate() {
                    let q = pos + t;
                    if q < r || q - r >= len {
                        continue;
                    }
                    acc += wt * src[p + (q - r) * stride - pos * stride];
                }
                dst[p] = acc;
            }
        }
        Ok(out)
    }

    /// Returns `(dL/dx, dL/dweights)` given `dL/dout`.
    pub fn backward(&self, x: &Tensor, grad_out: &Tensor) -> Result<(Tensor, Vec<f64>), KernelError> {
        self.check_input(x)?;
        x.same_shape(grad_out)?;
        let (c_n, w, h) = x.shape();
        let mut grad_x = Tensor::zeros(c_n, w, h);
        let mut grad_w = vec![0.0; self.weights.len()];
        let (len, stride) = self.axis(x);
        let r = self.size / 2;
        for c in 0..c_n {
            let kw = &self.weights[c * self.size..(c + 1) * self.size];
            let gw = &mut grad_w[c * self.size..(c + 1) * self.size];
            let src = x.channel(c);
            let g = grad_out.channel(c);
            let gx = grad_x.channel_mut(c);
            for p in 0..w * h {
                let pos = (p / stride) % len;
                let gp = g[p];
                for t in 0..self.size {
                    let q = pos + t;
                    if q < r || q - r >= len {
                        continue;
                    }
                    let src_idx = p + (q - r) * stride - pos * stride;
                    gw[t] += gp * src[src_idx];
                    gx[src_idx] += gp * kw[t];
                }
            }
        }
        Ok((grad_x, grad_w))
    }
}

/// `1×1` convolution mapping `in_channels` to `out_channels`, no bias.
#[derive(Debug, Clone, PartialEq)]
pub struct PointwiseConv {
    in_channels: usize,
    out_channels: usize,
    /// `weights[o * in_channels + i]`
    weights: Vec<f64>,
}

impl PointwiseConv {
    pub fn zeros(in_channels: usize, out_channels: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            weights: vec![0.0; in_channels * out_channels],
        }
    }

    pub fn from_weights(
        in_channels: usize,
        out_channels: usize,
        weights: Vec<f64>,
    ) -> Result<Self, KernelError> {
        if weights.len() != in_channels * out_channels {
            return Err(KernelError::ShapeMismatch(format!(
                "{} point-wise weights for {in_channels}->{out_channels}",
                weights.len()
            )));
        }
        Ok(Self {
            in_channels,
            out_channels,
            weights,
        })
    }

    pub fn random<R: Rng + ?Sized>(
        in_channels: usize,
        out_channels: usize,
        std: f64,
        rng: &mut R,
    ) -> Self {
        let normal = Normal::new(0.0, std).expect("finite std");
        Self {
            in_channels,
            out_channels,
            weights: (0..in_channels * out_channels)
                .map(|_| normal.sample(rng))
                .collect(),
        }
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor, KernelError> {
        if x.channels() != self.in_channels {
            return Err(KernelError::ShapeMismatch(format!(
                "point-wise conv expects {} channels, got {}",
                self.in_channels,
                x.channels()
            )));
        }
        let mut out = Tensor::zeros(self.out_channels, x.width(), x.height());
        for o in 0..self.out_channels {
            let row = &self.weights[o * self.in_channels..(o + 1) * self.in_channels];
            let dst = out.channel_mut(o);
            for (i, wi) in row.iter().enumerate() {
                for (d, s) in dst.iter_mut().zip(x.channel(i)) {
                    *d += wi * s;
                }
            }
        }
        Ok(out)
    }

    pub fn backward(&self, x: &Tensor, grad_out: &Tensor) -> Result<(Tensor, Vec<f64>), KernelError> {
        if grad_out.channels() != self.out_channels
            || (grad_out.width(), grad_out.height()) != (x.width(), x.height())
        {
            return Err(KernelError::ShapeMismatch(
                "point-wise gradient shape does not match forward".into(),
            ));
        }
        let mut grad_x = Tensor::zeros(x.channels(), x.width(), x.height());
        let mut grad_w = vec![0.0; self.weights.len()];
        for o in 0..self.out_channels {
            let g = grad_out.channel(o);
            for i in 0..self.in_channels {
                let wi = self.weights[o * self.in_channels + i];
                grad_w[o * self.in_channels + i] =
                    g.iter().zip(x.channel(i)).map(|(a, b)| a * b).sum();
                for (d, gp) in grad_x.channel_mut(i).iter_mut().zip(g) {
                    *d += wi * gp;
                }
            }
        }
        Ok((grad_x, grad_w))
    }
}

/// Index of the weight for kernel `v` in direction `dir` inside the
/// interleaved `(x₁, y₁, …, xₙ, yₙ)` logit layout.
#[inline]
pub fn weight_index(dir: Direction, v: usize) -> usize {
    2 * v + dir.index()
}

/// Softmax taken separately over the `n` x-direction entries and the `n`
/// y-direction entries of an interleaved `2n` logit vector.
pub fn softmax_per_direction(logits: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; logits.len()];
    softmax_per_direction_into(logits, &mut out);
    out
}

pub(crate) fn softmax_per_direction_into(logits: &[f64], out: &mut [f64]) {
    debug_assert!(logits.len() % 2 == 0);
    for d in 0..2 {
        let max = logits
            .iter()
            .skip(d)
            .step_by(2)
            .fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let mut sum = 0.0;
        for i in (d..logits.len()).step_by(2) {
            let e = (logits[i] - max).exp();
            out[i] = e;
            sum += e;
        }
        for i in (d..logits.len()).step_by(2) {
            out[i] /= sum;
        }
    }
}
