use std::fmt::Write as _;
use std::ops::{Index, IndexMut};

use super::KernelError;

/// Dense `C × W × H` feature map, stored channel-major then width-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    channels: usize,
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(channels: usize, width: usize, height: usize) -> Self {
        Self {
            channels,
            width,
            height,
            data: vec![0.0; channels * width * height],
        }
    }

    pub fn filled(channels: usize, width: usize, height: usize, value: f64) -> Self {
        Self {
            channels,
            width,
            height,
            data: vec![value; channels * width * height],
        }
    }

    pub fn from_vec(
        channels: usize,
        width: usize,
        height: usize,
        data: Vec<f64>,
    ) -> Result<Self, KernelError> {
        if data.len() != channels * width * height {
            return Err(KernelError::ShapeMismatch(format!(
                "{} values for shape {channels}x{width}x{height}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(KernelError::NonFinite);
        }
        Ok(Self {
            channels,
            width,
            height,
            data,
        })
    }

    pub fn from_fn(
        channels: usize,
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut t = Self::zeros(channels, width, height);
        for c in 0..channels {
            for x in 0..width {
                for y in 0..height {
                    t[(c, x, y)] = f(c, x, y);
                }
            }
        }
        t
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.width, self.height)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Values of one channel, width-major.
    pub fn channel(&self, c: usize) -> &[f64] {
        let plane = self.width * self.height;
        &self.data[c * plane..(c + 1) * plane]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let plane = self.width * self.height;
        &mut self.data[c * plane..(c + 1) * plane]
    }

    /// Copies channels `[start, start + count)` into a new tensor.
    pub fn slice_channels(&self, start: usize, count: usize) -> Tensor {
        let plane = self.width * self.height;
        Tensor {
            channels: count,
            width: self.width,
            height: self.height,
            data: self.data[start * plane..(start + count) * plane].to_vec(),
        }
    }

    /// Stacks tensors with equal spatial size along the channel axis.
    pub fn concat_channels(parts: &[Tensor]) -> Result<Tensor, KernelError> {
        let first = parts
            .first()
            .ok_or_else(|| KernelError::ShapeMismatch("no tensors to concatenate".into()))?;
        let (w, h) = (first.width, first.height);
        let mut data = Vec::new();
        let mut channels = 0;
        for p in parts {
            if (p.width, p.height) != (w, h) {
                return Err(KernelError::ShapeMismatch(format!(
                    "spatial size {}x{} vs {w}x{h}",
                    p.width, p.height
                )));
            }
            channels += p.channels;
            data.extend_from_slice(&p.data);
        }
        Ok(Tensor {
            channels,
            width: w,
            height: h,
            data,
        })
    }

    pub fn same_shape(&self, other: &Tensor) -> Result<(), KernelError> {
        if self.shape() != other.shape() {
            return Err(KernelError::ShapeMismatch(format!(
                "{:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn dot(&self, other: &Tensor) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Parses the fixture format: a `C W H` header followed by `C·W·H`
    /// whitespace-separated values. Lines starting with `#` are ignored.
    pub fn parse(text: &str) -> Result<Tensor, KernelError> {
        let mut tokens = text
            .lines()
            .filter(|l| !l.trim_start().starts_with('#'))
            .flat_map(str::split_whitespace);
        let mut dim = |name: &str| -> Result<usize, KernelError> {
            let tok = tokens
                .next()
                .ok_or_else(|| KernelError::Parse(format!("missing {name} in header")))?;
            tok.parse()
                .map_err(|_| KernelError::Parse(format!("bad {name} `{tok}`")))
        };
        let (c, w, h) = (dim("C")?, dim("W")?, dim("H")?);
        let values = tokens
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| KernelError::Parse(format!("bad value `{t}`")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Tensor::from_vec(c, w, h, values)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{} {} {}\n", self.channels, self.width, self.height);
        for c in 0..self.channels {
            for x in 0..self.width {
                let row = &self.data[(c * self.width + x) * self.height..][..self.height];
                for (i, v) in row.iter().enumerate() {
                    if i > 0 {
                        out.push(' ');
                    }
                    let _ = write!(out, "{v:e}");
                }
                out.push('\n');
            }
        }
        out
    }

    #[inline]
    fn offset(&self, c: usize, x: usize, y: usize) -> usize {
        (c * self.width + x) * self.height + y
    }
}

impl Index<(usize, usize, usize)> for Tensor {
    type Output = f64;

    #[inline]
    fn index(&self, (c, x, y): (usize, usize, usize)) -> &f64 {
        &self.data[self.offset(c, x, y)]
    }
}

impl IndexMut<(usize, usize, usize)> for Tensor {
    #[inline]
    fn index_mut(&mut self, (c, x, y): (usize, usize, usize)) -> &mut f64 {
        let o = self.offset(c, x, y);
        &mut self.data[o]
    }
}
