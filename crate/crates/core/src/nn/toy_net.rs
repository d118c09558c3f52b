//! Untrained, toy-scale localization network: four (downsample, inception
//! block) stages, flatten, two fully connected neck layers and a four-value
//! head `(presence logit, x, y, yaw)`. Only shapes, determinism and output
//! ranges are meaningful; the weights are random.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::acn::DEFAULT_KERNEL_SIZES;
use super::inception::AnisoInceptionBlock;
use super::{KernelError, Tensor};
use crate::geometry::Pose2;

pub const INPUT_SIZE: usize = 224;
pub const INPUT_CHANNELS: usize = 3;
/// Spatial size after four stride-2 stages: 224 / 2⁴.
pub const FINAL_SPATIAL: usize = 14;

const STAGE_CHANNELS: [usize; 4] = [8, 16, 16, 32];
const NECK_WIDTHS: [usize; 2] = [64, 32];
const HEAD_WIDTH: usize = 4;

/// `2×2` stride-2 convolution (patch merging).
#[derive(Debug, Clone)]
struct Downsample {
    in_channels: usize,
    out_channels: usize,
    /// `[o][i][a][b]` flattened
    weights: Vec<f64>,
}

impl Downsample {
    fn random(in_channels: usize, out_channels: usize, rng: &mut ChaCha8Rng) -> Self {
        let normal = Normal::new(0.0, (1.0 / (4.0 * in_channels as f64)).sqrt()).unwrap();
        Self {
            in_channels,
            out_channels,
            weights: (0..out_channels * in_channels * 4)
                .map(|_| normal.sample(rng))
                .collect(),
        }
    }

    fn forward(&self, x: &Tensor) -> Tensor {
        let (w, h) = (x.width() / 2, x.height() / 2);
        let mut out = Tensor::zeros(self.out_channels, w, h);
        for o in 0..self.out_channels {
            for i in 0..self.in_channels {
                let base = (o * self.in_channels + i) * 4;
                let k = &self.weights[base..base + 4];
                for px in 0..w {
                    for py in 0..h {
                        out[(o, px, py)] += k[0] * x[(i, 2 * px, 2 * py)]
                            + k[1] * x[(i, 2 * px, 2 * py + 1)]
                            + k[2] * x[(i, 2 * px + 1, 2 * py)]
                            + k[3] * x[(i, 2 * px + 1, 2 * py + 1)];
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
struct Dense {
    inputs: usize,
    outputs: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Dense {
    fn random(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let normal = Normal::new(0.0, (1.0 / inputs as f64).sqrt()).unwrap();
        Self {
            inputs,
            outputs,
            weights: (0..inputs * outputs).map(|_| normal.sample(rng)).collect(),
            bias: vec![0.0; outputs],
        }
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.inputs);
        (0..self.outputs)
            .map(|o| {
                let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
                self.bias[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyNetOutput {
    /// Probability that a robot is in view, in [0, 1].
    pub presence: f64,
    pub pose: Pose2,
    /// `(C, W, H)` after the stem input and after every stage.
    pub shape_trace: Vec<(usize, usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct ToyLocalizationNet {
    stages: Vec<(Downsample, AnisoInceptionBlock)>,
    neck: Vec<Dense>,
    head: Dense,
}

impl ToyLocalizationNet {
    pub fn new(seed: u64) -> Result<Self, KernelError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut stages = Vec::with_capacity(STAGE_CHANNELS.len());
        let mut c_in = INPUT_CHANNELS;
        for &c_out in &STAGE_CHANNELS {
            let down = Downsample::random(c_in, c_out, &mut rng);
            let block = AnisoInceptionBlock::random(c_out, &DEFAULT_KERNEL_SIZES, 0.1, &mut rng)?;
            stages.push((down, block));
            c_in = c_out;
        }
        let mut width = c_in * FINAL_SPATIAL * FINAL_SPATIAL;
        let mut neck = Vec::with_capacity(NECK_WIDTHS.len());
        for &n in &NECK_WIDTHS {
            neck.push(Dense::random(width, n, &mut rng));
            width = n;
        }
        let head = Dense::random(width, HEAD_WIDTH, &mut rng);
        Ok(Self { stages, neck, head })
    }

    pub fn forward(&self, image: &Tensor) -> Result<ToyNetOutput, KernelError> {
        if image.shape() != (INPUT_CHANNELS, INPUT_SIZE, INPUT_SIZE) {
            return Err(KernelError::ShapeMismatch(format!(
                "expected a {INPUT_CHANNELS}x{INPUT_SIZE}x{INPUT_SIZE} image, got {:?}",
                image.shape()
            )));
        }
        let mut shape_trace = vec![image.shape()];
        let mut x = image.clone();
        for (down, block) in &self.stages {
            x = block.forward(&down.forward(&x))?;
            shape_trace.push(x.shape());
        }
        let mut features = x.into_vec();
        for layer in &self.neck {
            features = layer.forward(&features);
            features.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        let out = self.head.forward(&features);
        Ok(ToyNetOutput {
            presence: sigmoid(out[0]),
            pose: Pose2::new(out[1], out[2], out[3]),
            shape_trace,
        })
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}
