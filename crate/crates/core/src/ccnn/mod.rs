//! Complex-valued convolutional networks on range-Doppler(-angle) data.
//!
//! Activations are stored as separate real and imaginary planes with
//! layout `[batch, channel, range, doppler, angle]`. The rank-two network
//! runs on the same engine with a unit angle axis and one-tap angle kernels.
//! Everything is generic over [`Real`] so gradients can be checked in `f64`
//! while training runs in `f32`.

mod bn;
mod checkpoint;
mod conv;
mod model;

pub use bn::{bn_backward, bn_forward, BnCache, BnParams, BN_EPS, BN_MOMENTUM};
pub use checkpoint::{
    read_checkpoint, write_checkpoint, Checkpoint, CheckpointHeader, EpochRecord, CKP1_MAGIC,
};
pub use conv::{conv_backward, conv_forward, ConvGrads, ConvParams};
pub use model::{crelu, crelu_backward, ForwardCache, Layer, Mode, Model};

use crate::error::{Error, Result};
use crate::tensor::ComplexTensor;
use num_complex::Complex32;
use num_traits::Float;
use serde::{Deserialize, Serialize};

/// Floating-point element type of the engine.
pub trait Real:
    Float
    + Default
    + Send
    + Sync
    + std::fmt::Debug
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + 'static
{
    fn of(x: f64) -> Self;
    fn f64(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn of(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn of(x: f64) -> Self {
        x
    }
    #[inline]
    fn f64(self) -> f64 {
        self
    }
}

/// Complex array as split real/imaginary planes.
#[derive(Debug, Clone, PartialEq)]
pub struct Planes<R> {
    shape: Vec<usize>,
    pub re: Vec<R>,
    pub im: Vec<R>,
}

impl<R: Real> Planes<R> {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Planes {
            shape: shape.to_vec(),
            re: vec![R::zero(); n],
            im: vec![R::zero(); n],
        }
    }

    pub fn from_parts(shape: &[usize], re: Vec<R>, im: Vec<R>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if re.len() != n || im.len() != n {
            return Err(Error::InvalidArgument(format!(
                "planes of length {}/{} do not fit shape {shape:?}",
                re.len(),
                im.len()
            )));
        }
        Ok(Planes {
            shape: shape.to_vec(),
            re,
            im,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        if shape.iter().product::<usize>() != self.len() {
            return Err(Error::shape(&self.shape, shape));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn cast<S: Real>(&self) -> Planes<S> {
        Planes {
            shape: self.shape.clone(),
            re: self.re.iter().map(|v| S::of(v.f64())).collect(),
            im: self.im.iter().map(|v| S::of(v.f64())).collect(),
        }
    }

    pub fn from_tensor(t: &ComplexTensor) -> Self {
        Planes {
            shape: t.shape().to_vec(),
            re: t.data().iter().map(|z| R::of(z.re as f64)).collect(),
            im: t.data().iter().map(|z| R::of(z.im as f64)).collect(),
        }
    }

    pub fn to_tensor(&self) -> ComplexTensor {
        let data = self
            .re
            .iter()
            .zip(&self.im)
            .map(|(r, i)| Complex32::new(r.f64() as f32, i.f64() as f32))
            .collect();
        ComplexTensor::from_vec(&self.shape, data).expect("plane lengths match their shape")
    }

    pub fn scale(&mut self, s: R) {
        self.re.iter_mut().for_each(|v| *v *= s);
        self.im.iter_mut().for_each(|v| *v *= s);
    }

    pub fn is_finite(&self) -> bool {
        self.re.iter().chain(&self.im).all(|v| v.is_finite())
    }

    pub(crate) fn ensure_shape(&self, expected: &[usize]) -> Result<()> {
        if self.shape != expected {
            return Err(Error::shape(expected, &self.shape));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PadMode {
    #[default]
    Zero,
    Circular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "2d")]
    TwoD,
    #[serde(rename = "3d")]
    ThreeD,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub variant: Variant,
    /// Output channels of each layer.
    pub channels: Vec<usize>,
    /// `[K_R, K_D, K_θ]` for 3D, `[K_R, K_D]` for 2D.
    pub kernel: Vec<usize>,
    /// Padding per axis, same length as `kernel`.
    #[serde(default)]
    pub padding: Vec<PadMode>,
    /// Complex batch norm on every layer except the first and last.
    #[serde(default = "default_true")]
    pub batch_norm: bool,
}

fn default_true() -> bool {
    true
}

pub const PRESETS: [&str; 5] = ["ccnn3d-l", "ccnn3d-m", "ccnn3d-s", "ccnn3d-xs", "ccnn2d"];

impl ModelSpec {
    pub fn new_3d(channels: &[usize]) -> Self {
        ModelSpec {
            variant: Variant::ThreeD,
            channels: channels.to_vec(),
            kernel: vec![3, 3, 3],
            padding: vec![PadMode::Zero; 3],
            batch_norm: true,
        }
    }

    pub fn new_2d(channels: &[usize]) -> Self {
        ModelSpec {
            variant: Variant::TwoD,
            channels: channels.to_vec(),
            kernel: vec![3, 3],
            padding: vec![PadMode::Zero; 2],
            batch_norm: true,
        }
    }

    /// Named architectures. The rank-two preset carries no batch norm: its
    /// parameter count is exactly the convolution weights and biases.
    pub fn preset(name: &str) -> Result<Self> {
        Ok(match name {
            "ccnn3d-l" => Self::new_3d(&[32, 16, 8, 4, 1]),
            "ccnn3d-m" => Self::new_3d(&[16, 8, 4, 2, 1]),
            "ccnn3d-s" => Self::new_3d(&[8, 4, 2, 1]),
            "ccnn3d-xs" => Self::new_3d(&[4, 2, 1]),
            "ccnn2d" => ModelSpec {
                batch_norm: false,
                ..Self::new_2d(&[32, 16, 16])
            },
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown model {other:?}; expected one of {PRESETS:?}"
                )))
            }
        })
    }

    pub fn with_padding(mut self, padding: &[PadMode]) -> Self {
        self.padding = padding.to_vec();
        self
    }

    pub fn validate(&self) -> Result<()> {
        let rank = match self.variant {
            Variant::TwoD => 2,
            Variant::ThreeD => 3,
        };
        if self.kernel.len() != rank {
            return Err(Error::InvalidConfig(format!(
                "kernel {:?} must have {rank} dimensions",
                self.kernel
            )));
        }
        if self.kernel.iter().any(|k| k % 2 == 0) {
            return Err(Error::InvalidConfig(format!(
                "kernel dimensions must be odd, got {:?}",
                self.kernel
            )));
        }
        if !self.padding.is_empty() && self.padding.len() != rank {
            return Err(Error::InvalidConfig(format!(
                "padding needs {rank} entries, got {}",
                self.padding.len()
            )));
        }
        if self.channels.is_empty() || self.channels.contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "invalid channel list {:?}",
                self.channels
            )));
        }
        if self.variant == Variant::ThreeD && *self.channels.last().unwrap() != 1 {
            return Err(Error::InvalidConfig(
                "a rank-three model must end in a single channel".into(),
            ));
        }
        Ok(())
    }

    /// Channels entering the first layer.
    pub fn in_channels(&self) -> usize {
        match self.variant {
            Variant::ThreeD => 1,
            Variant::TwoD => *self.channels.last().unwrap_or(&1),
        }
    }

    /// Kernel as three dims, the angle tap being 1 for the 2D variant.
    pub fn kernel3(&self) -> [usize; 3] {
        [
            self.kernel[0],
            self.kernel[1],
            self.kernel.get(2).copied().unwrap_or(1),
        ]
    }

    pub fn padding3(&self) -> [PadMode; 3] {
        let p = |i: usize| self.padding.get(i).copied().unwrap_or_default();
        [p(0), p(1), p(2)]
    }

    pub fn n_layers(&self) -> usize {
        self.channels.len()
    }

    pub fn has_bn(&self, layer: usize) -> bool {
        self.batch_norm && layer > 0 && layer + 1 < self.n_layers()
    }

    pub fn layer_channels(&self, layer: usize) -> (usize, usize) {
        let c_in = if layer == 0 {
            self.in_channels()
        } else {
            self.channels[layer - 1]
        };
        (c_in, self.channels[layer])
    }
}

/// Trainable real-valued parameters: two per complex weight and bias, five
/// per batch-normalised channel. Running statistics are not counted.
pub fn param_count(spec: &ModelSpec) -> usize {
    let taps: usize = spec.kernel.iter().product();
    (0..spec.n_layers())
        .map(|l| {
            let (ci, co) = spec.layer_channels(l);
            let conv = 2 * (co * ci * taps + co);
            let bn = if spec.has_bn(l) { 5 * co } else { 0 };
            conv + bn
        })
        .sum()
}
