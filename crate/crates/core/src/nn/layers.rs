//! Convolution kernels and pointwise activations with hand-written backward
//! passes. Both convolution flavours reduce to `im2col` + gemm.

use crate::scalar::{lit, Scalar};

/// Output extent of a strided convolution along one axis.
pub fn conv_out(size: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (size + 2 * pad - kernel) / stride + 1
}

/// Output extent of a transposed convolution along one axis.
pub fn conv_transpose_out(size: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (size - 1) * stride + kernel - 2 * pad
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Geometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Geometry {
    pub fn out_h(&self) -> usize {
        conv_out(self.height, self.kernel, self.stride, self.pad)
    }

    pub fn out_w(&self) -> usize {
        conv_out(self.width, self.kernel, self.stride, self.pad)
    }

    pub fn col_rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    pub fn col_cols(&self) -> usize {
        self.out_h() * self.out_w()
    }

    /// Yields `(col_index, image_index)` for every in-bounds tap of one
    /// column-matrix row.
    #[inline]
    fn for_each_tap(&self, row: usize, mut f: impl FnMut(usize, usize)) {
        let k = self.kernel;
        let ci = row / (k * k);
        let ki = (row / k) % k;
        let kj = row % k;
        let (oh, ow) = (self.out_h(), self.out_w());
        for oi in 0..oh {
            let ii = (oi * self.stride + ki) as isize - self.pad as isize;
            if ii < 0 || ii >= self.height as isize {
                continue;
            }
            for oj in 0..ow {
                let jj = (oj * self.stride + kj) as isize - self.pad as isize;
                if jj < 0 || jj >= self.width as isize {
                    continue;
                }
                let src = (ci * self.height + ii as usize) * self.width + jj as usize;
                f(oi * ow + oj, src);
            }
        }
    }
}

/// Unfolds `x` (`C x H x W`) into a `(C*k*k) x (oh*ow)` column matrix.
pub fn im2col<T: Scalar>(x: &[T], g: &Geometry, col: &mut [T]) {
    let cols = g.col_cols();
    debug_assert_eq!(col.len(), g.col_rows() * cols);
    col.fill(T::zero());
    for row in 0..g.col_rows() {
        let dst = &mut col[row * cols..(row + 1) * cols];
        g.for_each_tap(row, |c, src| dst[c] = x[src]);
    }
}

/// Adjoint of [`im2col`]: scatters-adds columns back into `x`.
pub fn col2im<T: Scalar>(col: &[T], g: &Geometry, x: &mut [T]) {
    let cols = g.col_cols();
    for row in 0..g.col_rows() {
        let src_row = &col[row * cols..(row + 1) * cols];
        g.for_each_tap(row, |c, dst| x[dst] += src_row[c]);
    }
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[inline]
pub fn leaky_relu<T: Scalar>(x: T, slope: T) -> T {
    if x > T::zero() {
        x
    } else {
        x * slope
    }
}

pub(crate) fn leaky_slope<T: Scalar>(slope: f64) -> T {
    lit(slope)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stride_two_halves() {
        assert_eq!(conv_out(32, 4, 2, 1), 16);
        assert_eq!(conv_out(8, 4, 2, 1), 4);
        assert_eq!(conv_transpose_out(16, 4, 2, 1), 32);
        assert_eq!(conv_transpose_out(4, 4, 2, 1), 8);
        assert_eq!(conv_out(4, 4, 1, 0), 1);
    }

    #[test]
    fn im2col_col2im_are_adjoint() {
        // <im2col(x), c> == <x, col2im(c)>
        let g = Geometry {
            channels: 2,
            height: 5,
            width: 4,
            kernel: 3,
            stride: 2,
            pad: 1,
        };
        let x: Vec<f64> = (0..g.channels * g.height * g.width)
            .map(|i| (i as f64 * 0.7).sin())
            .collect();
        let c: Vec<f64> = (0..g.col_rows() * g.col_cols())
            .map(|i| (i as f64 * 0.3).cos())
            .collect();
        let mut col = vec![0.0; c.len()];
        im2col(&x, &g, &mut col);
        let lhs: f64 = col.iter().zip(&c).map(|(a, b)| a * b).sum();
        let mut back = vec![0.0; x.len()];
        col2im(&c, &g, &mut back);
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_is_stable_and_bounded() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert!(sigmoid(-800.0f64) >= 0.0);
        assert!(sigmoid(800.0f64) <= 1.0);
        assert!((sigmoid(2.0f64) + sigmoid(-2.0f64) - 1.0).abs() < 1e-15);
    }
}
