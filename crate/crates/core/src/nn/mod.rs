//! Toy-scale neural building blocks: a dense tensor, depthwise and
//! point-wise convolutions, the anisotropic convolution layer and the
//! inception-style block built on it, plus finite-difference checks.

mod acn;
mod conv;
pub mod gradcheck;
mod inception;
mod tensor;
mod toy_net;

pub use acn::{AcnConfig, AcnGradients, AcnLayer, DEFAULT_KERNEL_SIZES};
pub use conv::{softmax_per_direction, weight_index, Direction, PointwiseConv, UnidirectionalKernel};
pub use gradcheck::{run_gradcheck, GradCheckConfig, GradCheckReport, GroupReport};
pub use inception::{AnisoInceptionBlock, ChannelSplit, InceptionGradients, BAND_KERNEL_SIZE};
pub use tensor::Tensor;
pub use toy_net::{ToyLocalizationNet, ToyNetOutput, FINAL_SPATIAL, INPUT_CHANNELS, INPUT_SIZE};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KernelError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("kernel size {0} is even; only odd sizes keep same-padding centered")]
    EvenKernel(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("tensor contains non-finite values")]
    NonFinite,
    #[error("tensor parse error: {0}")]
    Parse(String),
}
