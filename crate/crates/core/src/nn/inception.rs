//! Inception-style block with four channel groups: identity, a `1×11`
//! depthwise band, an `11×1` depthwise band and an anisotropic convolution.

use rand::Rng;

use super::acn::{AcnConfig, AcnGradients, AcnLayer};
use super::conv::{Direction, UnidirectionalKernel};
use super::{KernelError, Tensor};

pub const BAND_KERNEL_SIZE: usize = 11;

/// Channel counts per branch, in concatenation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelSplit {
    pub identity: usize,
    pub band_x: usize,
    pub band_y: usize,
    pub acn: usize,
}

impl ChannelSplit {
    /// `C/4` per branch, remainder to the identity branch.
    pub fn even(channels: usize) -> Self {
        let q = channels / 4;
        Self {
            identity: channels - 3 * q,
            band_x: q,
            band_y: q,
            acn: q,
        }
    }

    pub fn total(&self) -> usize {
        self.identity + self.band_x + self.band_y + self.acn
    }

    /// Channel offsets of the four branches.
    fn offsets(&self) -> [usize; 4] {
        [
            0,
            self.identity,
            self.identity + self.band_x,
            self.identity + self.band_x + self.band_y,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnisoInceptionBlock {
    split: ChannelSplit,
    band_x: UnidirectionalKernel,
    band_y: UnidirectionalKernel,
    acn: AcnLayer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InceptionGradients {
    pub input: Tensor,
    pub band_x: Vec<f64>,
    pub band_y: Vec<f64>,
    pub acn: AcnGradients,
}

impl AnisoInceptionBlock {
    /// Delta band kernels and a zero ACN: the block is the identity map.
    pub fn identity(channels: usize, kernel_sizes: &[usize]) -> Result<Self, KernelError> {
        let split = ChannelSplit::even(channels);
        Ok(Self {
            band_x: UnidirectionalKernel::delta(Direction::X, BAND_KERNEL_SIZE, split.band_x)?,
            band_y: UnidirectionalKernel::delta(Direction::Y, BAND_KERNEL_SIZE, split.band_y)?,
            acn: AcnLayer::zeros(AcnConfig::new(split.acn, kernel_sizes)?)?,
            split,
        })
    }

    pub fn random<R: Rng + ?Sized>(
        channels: usize,
        kernel_sizes: &[usize],
        std: f64,
        rng: &mut R,
    ) -> Result<Self, KernelError> {
        Self::random_with_split(ChannelSplit::even(channels), kernel_sizes, std, rng)
    }

    pub fn random_with_split<R: Rng + ?Sized>(
        split: ChannelSplit,
        kernel_sizes: &[usize],
        std: f64,
        rng: &mut R,
    ) -> Result<Self, KernelError> {
        Ok(Self {
            band_x: UnidirectionalKernel::random(Direction::X, BAND_KERNEL_SIZE, split.band_x, std, rng)?,
            band_y: UnidirectionalKernel::random(Direction::Y, BAND_KERNEL_SIZE, split.band_y, std, rng)?,
            acn: AcnLayer::random(AcnConfig::new(split.acn, kernel_sizes)?, std, rng)?,
            split,
        })
    }

    pub fn from_parts(
        split: ChannelSplit,
        band_x: UnidirectionalKernel,
        band_y: UnidirectionalKernel,
        acn: AcnLayer,
    ) -> Result<Self, KernelError> {
        if band_x.channels() != split.band_x
            || band_y.channels() != split.band_y
            || acn.config().channels != split.acn
            || band_x.direction() != Direction::X
            || band_y.direction() != Direction::Y
        {
            return Err(KernelError::ShapeMismatch(
                "branch parameters do not match the channel split".into(),
            ));
        }
        Ok(Self {
            split,
            band_x,
            band_y,
            acn,
        })
    }

    pub fn split(&self) -> ChannelSplit {
        self.split
    }

    pub fn channels(&self) -> usize {
        self.split.total()
    }

    pub fn band_x(&self) -> &UnidirectionalKernel {
        &self.band_x
    }

    pub fn band_x_mut(&mut self) -> &mut UnidirectionalKernel {
        &mut self.band_x
    }

    pub fn band_y(&self) -> &UnidirectionalKernel {
        &self.band_y
    }

    pub fn band_y_mut(&mut self) -> &mut UnidirectionalKernel {
        &mut self.band_y
    }

    pub fn acn(&self) -> &AcnLayer {
        &self.acn
    }

    pub fn acn_mut(&mut self) -> &mut AcnLayer {
        &mut self.acn
    }

    fn branch_inputs(&self, x: &Tensor) -> Result<[Tensor; 4], KernelError> {
        if x.channels() != self.split.total() {
            return Err(KernelError::ShapeMismatch(format!(
                "block expects {} channels, got {}",
                self.split.total(),
                x.channels()
            )));
        }
        let o = self.split.offsets();
        Ok([
            x.slice_channels(o[0], self.split.identity),
            x.slice_channels(o[1], self.split.band_x),
            x.slice_channels(o[2], self.split.band_y),
            x.slice_channels(o[3], self.split.acn),
        ])
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor, KernelError> {
        let [id, bx, by, ac] = self.branch_inputs(x)?;
        let parts = [
            id,
            self.band_x.forward(&bx)?,
            self.band_y.forward(&by)?,
            if self.split.acn > 0 { self.acn.forward(&ac)? } else { ac },
        ];
        Tensor::concat_channels(&parts)
    }

    pub fn backward(&self, x: &Tensor, grad_out: &Tensor) -> Result<InceptionGradients, KernelError> {
        x.same_shape(grad_out)?;
        let [_, bx, by, ac] = self.branch_inputs(x)?;
        let [g_id, g_bx, g_by, g_ac] = self.branch_inputs(grad_out)?;
        let (gx_bx, band_x) = self.band_x.backward(&bx, &g_bx)?;
        let (gx_by, band_y) = self.band_y.backward(&by, &g_by)?;
        let acn = if self.split.acn > 0 {
            self.acn.backward(&ac, &g_ac)?
        } else {
            AcnGradients {
                input: g_ac,
                pointwise: Vec::new(),
                kernels: vec![Vec::new(); self.acn.kernels().len()],
            }
        };
        let input = Tensor::concat_channels(&[g_id, gx_bx, gx_by, acn.input.clone()])?;
        Ok(InceptionGradients {
            input,
            band_x,
            band_y,
            acn,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn split_rules() {
        assert_eq!(
            ChannelSplit::even(8),
            ChannelSplit { identity: 2, band_x: 2, band_y: 2, acn: 2 }
        );
        assert_eq!(
            ChannelSplit::even(10),
            ChannelSplit { identity: 4, band_x: 2, band_y: 2, acn: 2 }
        );
        for c in 1..40 {
            assert_eq!(ChannelSplit::even(c).total(), c);
        }
    }

    #[test]
    fn identity_parameterization_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Tensor::from_fn(6, 7, 5, |_, _, _| rng.random_range(-2.0..2.0));
        let block = AnisoInceptionBlock::identity(6, &[3, 5, 7]).unwrap();
        assert_eq!(block.forward(&x).unwrap(), x);
    }

    #[test]
    fn identity_branch_passes_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = Tensor::from_fn(7, 6, 6, |_, _, _| rng.random_range(-1.0..1.0));
        let block = AnisoInceptionBlock::random(7, &[3, 5], 1.0, &mut rng).unwrap();
        let y = block.forward(&x).unwrap();
        let id = block.split().identity;
        assert_eq!(y.slice_channels(0, id), x.slice_channels(0, id));
        assert_eq!(y.shape(), x.shape());
    }

    #[test]
    fn small_channel_counts_keep_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for c in 1..6 {
            let x = Tensor::filled(c, 4, 3, 0.5);
            let block = AnisoInceptionBlock::random(c, &[3], 0.3, &mut rng).unwrap();
            assert_eq!(block.forward(&x).unwrap().shape(), x.shape());
            let g = block.backward(&x, &x).unwrap();
            assert_eq!(g.input.shape(), x.shape());
        }
    }
}
