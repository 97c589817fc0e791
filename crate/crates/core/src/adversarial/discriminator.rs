use rand::Rng;

use crate::error::{Error, Result};
use crate::image::{Image, Shape};
use crate::nn::{Layer, Network, Tensor};
use crate::scalar::Scalar;
use crate::separator::{ArchDescriptor, INIT_STD};

const LEAKY_SLOPE: f64 = 0.2;

/// Stride-2 convolution stack (`base, 2*base, ...` channels) down to the
/// bottleneck, then one full-extent convolution to a single unbounded score.
pub(crate) fn build_discriminator<T: Scalar>(arch: &ArchDescriptor) -> Network<T> {
    let mut layers = Vec::new();
    let mut names = Vec::new();
    let mut cin = arch.shape.channels;
    for level in 0..arch.depth {
        let cout = arch.base_channels << level;
        layers.push(Layer::Conv {
            cin,
            cout,
            kernel: 4,
            stride: 2,
            pad: 1,
        });
        layers.push(Layer::LeakyRelu(LEAKY_SLOPE));
        names.push(format!("conv{level}"));
        cin = cout;
    }
    layers.push(Layer::Conv {
        cin,
        cout: 1,
        kernel: arch.bottleneck(),
        stride: 1,
        pad: 0,
    });
    names.push("score".into());
    Network::new(layers, &names)
}

/// Least-squares critic scoring how much an image looks like a real mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator<T> {
    arch: ArchDescriptor,
    net: Network<T>,
}

impl<T: Scalar> Discriminator<T> {
    pub fn zeroed(arch: ArchDescriptor) -> Self {
        Discriminator {
            arch,
            net: build_discriminator(&arch),
        }
    }

    pub fn new<R: Rng>(arch: ArchDescriptor, rng: &mut R) -> Self {
        let mut d = Self::zeroed(arch);
        d.net.init_gaussian(INIT_STD, rng);
        d
    }

    pub fn arch(&self) -> &ArchDescriptor {
        &self.arch
    }

    pub fn input_shape(&self) -> Shape {
        self.arch.shape
    }

    pub fn network(&self) -> &Network<T> {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Network<T> {
        &mut self.net
    }

    pub fn score_batch(&self, xs: &Tensor<T>) -> Result<Vec<T>> {
        if xs.image_shape() != self.arch.shape {
            return Err(Error::dims(self.arch.shape, xs.image_shape()));
        }
        Ok(self.net.infer(xs).data)
    }

    pub fn score(&self, x: &Image<T>) -> Result<T> {
        Ok(self.score_batch(&Tensor::stack([x])?)?[0])
    }

    pub fn score_images(&self, xs: &[Image<T>]) -> Result<Vec<T>> {
        if xs.is_empty() {
            return Ok(Vec::new());
        }
        self.score_batch(&Tensor::stack(xs)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn one_score_per_image() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for side in [4, 8, 32] {
            let arch = ArchDescriptor::for_shape(Shape::new(side, side, 1), 4).unwrap();
            let d = Discriminator::<f32>::new(arch, &mut rng);
            let batch = Tensor::zeros(3, 1, side, side);
            assert_eq!(d.score_batch(&batch).unwrap().len(), 3);
        }
    }

    #[test]
    fn dcgan_channel_progression() {
        let arch = ArchDescriptor::for_shape(Shape::new(32, 32, 1), 64).unwrap();
        let d = Discriminator::<f32>::zeroed(arch);
        let convs: Vec<_> = d
            .network()
            .layers()
            .iter()
            .filter_map(|l| match l {
                Layer::Conv { cin, cout, kernel, .. } => Some((*cin, *cout, *kernel)),
                _ => None,
            })
            .collect();
        assert_eq!(convs, vec![(1, 64, 4), (64, 128, 4), (128, 256, 4), (256, 1, 4)]);
    }

    #[test]
    fn rejects_wrong_shape() {
        let arch = ArchDescriptor::for_shape(Shape::new(8, 8, 1), 4).unwrap();
        let d = Discriminator::<f64>::zeroed(arch);
        assert!(d.score(&Image::zeros(Shape::new(8, 8, 3))).is_err());
    }
}
