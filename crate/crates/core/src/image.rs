//! `Image` is the carrier for every signal in the pipeline: raw sources,
//! mixtures, masks and separated estimates.
//!
//! Pixels are stored channel-planar (`C x H x W`, row-major inside a plane).

use std::fmt;
use std::ops::{Add, Sub};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Shape {
    pub const fn new(height: usize, width: usize, channels: usize) -> Self {
        Shape {
            height,
            width,
            channels,
        }
    }

    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: Scalar> Image<T> {
    pub fn zeros(shape: Shape) -> Self {
        Image {
            shape,
            data: vec![T::zero(); shape.len()],
        }
    }

    pub fn filled(shape: Shape, value: T) -> Self {
        Image {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<T>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::dims(shape.len(), data.len()));
        }
        Ok(Image { shape, data })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize, channel: usize) -> usize {
        (channel * self.shape.height + row) * self.shape.width + col
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> T {
        self.data[self.index(row, col, channel)]
    }

    pub fn set(&mut self, row: usize, col: usize, channel: usize, value: T) {
        let i = self.index(row, col, channel);
        self.data[i] = value;
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Image {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.ensure_same_shape(other)?;
        Ok(Image {
            shape: self.shape,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn ensure_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::dims(self.shape, other.shape));
        }
        Ok(())
    }

    pub fn scale(&self, factor: T) -> Self {
        self.map(|v| v * factor)
    }

    pub fn mean(&self) -> T {
        if self.data.is_empty() {
            return T::zero();
        }
        self.data.iter().copied().sum::<T>() / T::from_usize(self.data.len()).unwrap()
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max)
    }

    pub fn min_value(&self) -> T {
        self.data.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max_value(&self) -> T {
        self.data.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn cast<U: Scalar>(&self) -> Image<U> {
        Image {
            shape: self.shape,
            data: self
                .data
                .iter()
                .map(|v| U::from_f64(v.to_f64().unwrap()).unwrap())
                .collect(),
        }
    }
}

impl<T: Scalar> Add for &Image<T> {
    type Output = Image<T>;

    /// Panics on shape mismatch; use [`Image::zip_map`] for a checked sum.
    fn add(self, rhs: &Image<T>) -> Image<T> {
        self.zip_map(rhs, |a, b| a + b).expect("shape mismatch in add")
    }
}

impl<T: Scalar> Sub for &Image<T> {
    type Output = Image<T>;

    fn sub(self, rhs: &Image<T>) -> Image<T> {
        self.zip_map(rhs, |a, b| a - b).expect("shape mismatch in sub")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planar_indexing() {
        let shape = Shape::new(2, 3, 2);
        let mut img = Image::<f32>::zeros(shape);
        img.set(1, 2, 1, 4.0);
        assert_eq!(img.as_slice()[shape.plane() + 3 + 2], 4.0);
        assert_eq!(img.get(1, 2, 1), 4.0);
    }

    #[test]
    fn from_vec_checks_length() {
        assert!(Image::<f64>::from_vec(Shape::new(2, 2, 1), vec![0.0; 3]).is_err());
    }

    #[test]
    fn zip_map_rejects_mismatch() {
        let a = Image::<f64>::zeros(Shape::new(2, 2, 1));
        let b = Image::<f64>::zeros(Shape::new(2, 2, 3));
        assert!(matches!(a.zip_map(&b, |x, _| x), Err(Error::Dimension { .. })));
    }
}
