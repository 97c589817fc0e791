//! The masking network `M(y)` and the separation it induces:
//! `x_hat = y * M(y)`, `b_hat = y - x_hat`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::image::{Image, Shape};
use crate::nn::{Layer, Network, Tensor};
use crate::scalar::Scalar;

/// Standard deviation of the Gaussian weight initialisation.
pub const INIT_STD: f64 = 0.02;

const LEAKY_SLOPE: f64 = 0.2;

/// Architecture of an encoder-decoder masker.
///
/// The encoder is `depth` stride-2 4x4 convolutions with channel counts
/// `base, 2*base, ..., 2^(depth-1)*base`; the decoder mirrors it with
/// transposed convolutions back to `base` channels, followed by a final
/// transposed convolution to the image channels and a sigmoid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArchDescriptor {
    pub shape: Shape,
    pub base_channels: usize,
    pub depth: usize,
}

impl ArchDescriptor {
    /// Picks the depth that brings the bottleneck down to 4x4 (at least one
    /// downsampling stage).
    pub fn for_shape(shape: Shape, base_channels: usize) -> Result<Self> {
        let depth = (shape.height / 4).max(2).trailing_zeros() as usize;
        Self::with_depth(shape, base_channels, depth)
    }

    pub fn with_depth(shape: Shape, base_channels: usize, depth: usize) -> Result<Self> {
        let arch = ArchDescriptor {
            shape,
            base_channels,
            depth,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        let Shape {
            height,
            width,
            channels,
        } = self.shape;
        if height != width {
            return Err(Error::Config(format!("images must be square, got {}", self.shape)));
        }
        if channels == 0 || self.base_channels == 0 || self.depth == 0 {
            return Err(Error::Config(format!("degenerate architecture {self:?}")));
        }
        if self.depth > 16 || height % (1 << self.depth) != 0 || height >> self.depth == 0 {
            return Err(Error::Config(format!(
                "{height}px side is not divisible by 2^{}",
                self.depth
            )));
        }
        Ok(())
    }

    pub fn bottleneck(&self) -> usize {
        self.shape.height >> self.depth
    }

    fn channels_at(&self, level: usize) -> usize {
        self.base_channels << level
    }

    pub(crate) fn build<T: Scalar>(&self) -> Network<T> {
        let conv = |cin, cout| Layer::Conv {
            cin,
            cout,
            kernel: 4,
            stride: 2,
            pad: 1,
        };
        let deconv = |cin, cout| Layer::ConvTranspose {
            cin,
            cout,
            kernel: 4,
            stride: 2,
            pad: 1,
        };
        let mut layers = Vec::new();
        let mut names = Vec::new();
        let mut cin = self.shape.channels;
        for level in 0..self.depth {
            let cout = self.channels_at(level);
            layers.push(conv(cin, cout));
            layers.push(Layer::LeakyRelu(LEAKY_SLOPE));
            names.push(format!("enc{level}"));
            cin = cout;
        }
        for level in (0..self.depth - 1).rev() {
            let cout = self.channels_at(level);
            layers.push(deconv(cin, cout));
            layers.push(Layer::Relu);
            names.push(format!("dec{level}"));
            cin = cout;
        }
        layers.push(deconv(cin, self.shape.channels));
        layers.push(Layer::Sigmoid);
        names.push("mask".into());
        Network::new(layers, &names)
    }
}

/// Estimated sources of one mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparationResult<T> {
    pub x_hat: Image<T>,
    pub b_hat: Image<T>,
    pub mask: Image<T>,
}

impl<T: Scalar> SeparationResult<T> {
    /// `x_hat = y * mask`, `b_hat = y - x_hat`.
    pub fn from_mask(y: &Image<T>, mask: Image<T>) -> Result<Self> {
        let x_hat = y.zip_map(&mask, |a, m| a * m)?;
        let b_hat = y - &x_hat;
        Ok(SeparationResult { x_hat, b_hat, mask })
    }
}

/// Anything that splits a mixture into two source estimates.
pub trait Separator<T: Scalar> {
    fn input_shape(&self) -> Shape;

    fn masks(&self, ys: &[Image<T>]) -> Result<Vec<Image<T>>>;

    fn separate(&self, y: &Image<T>) -> Result<SeparationResult<T>> {
        let mask = self.masks(std::slice::from_ref(y))?.pop().expect("one mask");
        SeparationResult::from_mask(y, mask)
    }

    fn separate_all(&self, ys: &[Image<T>]) -> Result<Vec<SeparationResult<T>>> {
        let masks = self.masks(ys)?;
        ys.iter()
            .zip(masks)
            .map(|(y, m)| SeparationResult::from_mask(y, m))
            .collect()
    }
}

/// The learned masking network.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskNet<T> {
    arch: ArchDescriptor,
    net: Network<T>,
}

impl<T: Scalar> MaskNet<T> {
    /// Zero-initialised parameters (every mask value is exactly 0.5).
    pub fn zeroed(arch: ArchDescriptor) -> Self {
        MaskNet {
            arch,
            net: arch.build(),
        }
    }

    pub fn new<R: Rng>(arch: ArchDescriptor, rng: &mut R) -> Self {
        let mut m = Self::zeroed(arch);
        m.net.init_gaussian(INIT_STD, rng);
        m
    }

    pub fn arch(&self) -> &ArchDescriptor {
        &self.arch
    }

    pub fn network(&self) -> &Network<T> {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Network<T> {
        &mut self.net
    }

    fn check_input(&self, shape: Shape) -> Result<()> {
        if shape != self.arch.shape {
            return Err(Error::dims(self.arch.shape, shape));
        }
        Ok(())
    }

    /// `M(y)` for a single image.
    pub fn mask_forward(&self, y: &Image<T>) -> Result<Image<T>> {
        self.check_input(y.shape())?;
        let out = self.net.infer(&Tensor::stack([y])?);
        Ok(out.to_images().pop().expect("one image"))
    }

    /// `M(y)` for a whole batch.
    pub fn mask_batch(&self, ys: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_input(ys.image_shape())?;
        Ok(self.net.infer(ys))
    }
}

impl<T: Scalar> Separator<T> for MaskNet<T> {
    fn input_shape(&self) -> Shape {
        self.arch.shape
    }

    fn masks(&self, ys: &[Image<T>]) -> Result<Vec<Image<T>>> {
        if ys.is_empty() {
            return Ok(Vec::new());
        }
        let batch = Tensor::stack(ys)?;
        Ok(self.mask_batch(&batch)?.to_images())
    }
}

/// Applies the same mask value everywhere. `ConstantMask(1.0)` is the
/// degenerate `x_hat = y, b_hat = 0` solution.
#[derive(Debug, Clone, Copy)]
pub struct ConstantMask<T> {
    pub shape: Shape,
    pub value: T,
}

impl<T: Scalar> Separator<T> for ConstantMask<T> {
    fn input_shape(&self) -> Shape {
        self.shape
    }

    fn masks(&self, ys: &[Image<T>]) -> Result<Vec<Image<T>>> {
        ys.iter()
            .map(|y| {
                if y.shape() != self.shape {
                    return Err(Error::dims(self.shape, y.shape()));
                }
                Ok(Image::filled(self.shape, self.value))
            })
            .collect()
    }
}
