use crate::error::{Error, Result};
use crate::image::{Image, Shape};
use crate::scalar::Scalar;

/// Dense `N x C x H x W` activation buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Tensor {
            n,
            c,
            h,
            w,
            data: vec![T::zero(); n * c * h * w],
        }
    }

    pub fn item_len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn item(&self, i: usize) -> &[T] {
        let len = self.item_len();
        &self.data[i * len..(i + 1) * len]
    }

    pub fn item_mut(&mut self, i: usize) -> &mut [T] {
        let len = self.item_len();
        &mut self.data[i * len..(i + 1) * len]
    }

    pub fn image_shape(&self) -> Shape {
        Shape::new(self.h, self.w, self.c)
    }

    /// Stacks images of identical shape into one batch.
    pub fn stack<'a, I>(images: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Image<T>>,
    {
        let mut iter = images.into_iter().peekable();
        let shape = match iter.peek() {
            Some(img) => img.shape(),
            None => return Err(Error::Config("cannot stack an empty image list".into())),
        };
        let mut data = Vec::new();
        let mut n = 0;
        for img in iter {
            if img.shape() != shape {
                return Err(Error::dims(shape, img.shape()));
            }
            data.extend_from_slice(img.as_slice());
            n += 1;
        }
        Ok(Tensor {
            n,
            c: shape.channels,
            h: shape.height,
            w: shape.width,
            data,
        })
    }

    pub fn to_images(&self) -> Vec<Image<T>> {
        let shape = self.image_shape();
        (0..self.n)
            .map(|i| Image::from_vec(shape, self.item(i).to_vec()).expect("consistent shape"))
            .collect()
    }

    pub fn same_dims(&self, other: &Self) -> bool {
        self.n == other.n && self.c == other.c && self.h == other.h && self.w == other.w
    }

    pub fn ensure_same_dims(&self, other: &Self) -> Result<()> {
        if !self.same_dims(other) {
            return Err(Error::dims(
                (self.n, self.c, self.h, self.w),
                (other.n, other.c, other.h, other.w),
            ));
        }
        Ok(())
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        debug_assert!(self.same_dims(other));
        self.with_data(self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        self.with_data(self.data.iter().map(|&a| f(a)).collect())
    }

    /// Same geometry, new contents.
    pub fn with_data(&self, data: Vec<T>) -> Self {
        assert_eq!(data.len() % self.item_len().max(1), 0);
        Tensor {
            n: data.len() / self.item_len().max(1),
            c: self.c,
            h: self.h,
            w: self.w,
            data,
        }
    }

    /// Concatenates two batches along the batch axis.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if (self.c, self.h, self.w) != (other.c, other.h, other.w) {
            return Err(Error::dims((self.c, self.h, self.w), (other.c, other.h, other.w)));
        }
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Ok(Tensor {
            n: self.n + other.n,
            c: self.c,
            h: self.h,
            w: self.w,
            data,
        })
    }

    /// Splits the batch into `[0, at)` and `[at, n)`.
    pub fn split_at(&self, at: usize) -> (Self, Self) {
        let cut = at * self.item_len();
        (
            self.with_data(self.data[..cut].to_vec()),
            self.with_data(self.data[cut..].to_vec()),
        )
    }
}
