//! A minimal feed-forward convolutional network with reverse-mode gradients.
//!
//! A [`Network`] is stateless with respect to activations: `forward` returns a
//! [`Tape`] that the caller hands back to `backward`. The same network can be
//! applied several times inside one objective and every application
//! back-propagates through its own tape into one shared [`ParamGrads`].

mod layers;
mod tensor;

pub use layers::{col2im, conv_out, conv_transpose_out, im2col, sigmoid, Geometry};
pub use tensor::Tensor;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};
use layers::{leaky_relu, leaky_slope};

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor<T> {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Scalar> NamedTensor<T> {
    pub fn zeros(name: impl Into<String>, dims: Vec<usize>) -> Self {
        let len = dims.iter().product();
        NamedTensor {
            name: name.into(),
            dims,
            data: vec![T::zero(); len],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Layer {
    /// Weight layout `[cout, cin, k, k]`.
    Conv {
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    /// Weight layout `[cin, cout, k, k]`.
    ConvTranspose {
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    LeakyRelu(f64),
    Relu,
    Sigmoid,
}

impl Layer {
    fn has_params(&self) -> bool {
        matches!(self, Layer::Conv { .. } | Layer::ConvTranspose { .. })
    }
}

/// Per-layer activations recorded during a forward pass.
#[derive(Debug, Clone)]
pub struct Tape<T> {
    /// `acts[i]` is the input of layer `i`; the last entry is the output.
    acts: Vec<Tensor<T>>,
}

impl<T> Tape<T> {
    pub fn output(&self) -> &Tensor<T> {
        self.acts.last().expect("tape always holds the input")
    }
}

/// Gradient buffers matching a network's parameter list one-to-one.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads<T> {
    pub tensors: Vec<Vec<T>>,
}

impl<T: Scalar> ParamGrads<T> {
    pub fn scale(&mut self, factor: T) {
        for t in &mut self.tensors {
            for g in t.iter_mut() {
                *g *= factor;
            }
        }
    }

    pub fn add_scaled(&mut self, other: &Self, factor: T) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y * factor;
            }
        }
    }

    pub fn flat(&self) -> impl Iterator<Item = T> + '_ {
        self.tensors.iter().flat_map(|t| t.iter().copied())
    }

    pub fn all_finite(&self) -> bool {
        self.flat().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    layers: Vec<Layer>,
    params: Vec<NamedTensor<T>>,
    /// Index of each parametrised layer's weight in `params`; bias follows.
    param_slot: Vec<Option<usize>>,
}

impl<T: Scalar> Network<T> {
    /// Builds a network with zeroed parameters. `prefixes` names each
    /// parametrised layer in order.
    pub fn new(layers: Vec<Layer>, prefixes: &[String]) -> Self {
        let mut params = Vec::new();
        let mut param_slot = Vec::with_capacity(layers.len());
        let mut names = prefixes.iter();
        for layer in &layers {
            match *layer {
                Layer::Conv {
                    cin, cout, kernel, ..
                } => {
                    let prefix = names.next().expect("one prefix per conv layer");
                    param_slot.push(Some(params.len()));
                    params.push(NamedTensor::zeros(
                        format!("{prefix}.weight"),
                        vec![cout, cin, kernel, kernel],
                    ));
                    params.push(NamedTensor::zeros(format!("{prefix}.bias"), vec![cout]));
                }
                Layer::ConvTranspose {
                    cin, cout, kernel, ..
                } => {
                    let prefix = names.next().expect("one prefix per conv layer");
                    param_slot.push(Some(params.len()));
                    params.push(NamedTensor::zeros(
                        format!("{prefix}.weight"),
                        vec![cin, cout, kernel, kernel],
                    ));
                    params.push(NamedTensor::zeros(format!("{prefix}.bias"), vec![cout]));
                }
                _ => param_slot.push(None),
            }
        }
        Network {
            layers,
            params,
            param_slot,
        }
    }

    /// Weights ~ N(0, std), biases zero.
    pub fn init_gaussian<R: Rng>(&mut self, std: f64, rng: &mut R) {
        let normal = Normal::new(0.0, std).expect("valid std");
        for p in &mut self.params {
            if p.name.ends_with(".weight") {
                for v in &mut p.data {
                    *v = lit(normal.sample(rng));
                }
            } else {
                p.data.fill(T::zero());
            }
        }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn params(&self) -> &[NamedTensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [NamedTensor<T>] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    pub fn zero_grads(&self) -> ParamGrads<T> {
        ParamGrads {
            tensors: self.params.iter().map(|p| vec![T::zero(); p.data.len()]).collect(),
        }
    }

    /// Replaces the parameter values, checking names and dimensions.
    pub fn load_params(&mut self, tensors: Vec<NamedTensor<T>>) -> Result<()> {
        if tensors.len() != self.params.len() {
            return Err(Error::dims(self.params.len(), tensors.len()));
        }
        for (have, new) in self.params.iter().zip(&tensors) {
            if have.name != new.name || have.dims != new.dims {
                return Err(Error::dims(
                    (&have.name, &have.dims),
                    (&new.name, &new.dims),
                ));
            }
        }
        self.params = tensors;
        Ok(())
    }

    fn weight_bias(&self, layer: usize) -> (&[T], &[T]) {
        let slot = self.param_slot[layer].expect("parametrised layer");
        (&self.params[slot].data, &self.params[slot + 1].data)
    }

    /// Forward pass that keeps every intermediate activation.
    pub fn forward(&self, x: &Tensor<T>) -> Tape<T> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.clone());
        for i in 0..self.layers.len() {
            let next = self.apply(i, acts.last().unwrap());
            acts.push(next);
        }
        Tape { acts }
    }

    /// Forward pass without recording activations.
    pub fn infer(&self, x: &Tensor<T>) -> Tensor<T> {
        let mut cur = x.clone();
        for i in 0..self.layers.len() {
            cur = self.apply(i, &cur);
        }
        cur
    }

    fn apply(&self, i: usize, x: &Tensor<T>) -> Tensor<T> {
        match self.layers[i] {
            Layer::Conv {
                cin,
                cout,
                kernel,
                stride,
                pad,
            } => {
                assert_eq!(x.c, cin, "conv input channels");
                let (w, b) = self.weight_bias(i);
                conv_forward(x, w, b, cout, kernel, stride, pad)
            }
            Layer::ConvTranspose {
                cin,
                cout,
                kernel,
                stride,
                pad,
            } => {
                assert_eq!(x.c, cin, "transposed conv input channels");
                let (w, b) = self.weight_bias(i);
                conv_transpose_forward(x, w, b, cout, kernel, stride, pad)
            }
            Layer::LeakyRelu(slope) => {
                let s: T = leaky_slope(slope);
                x.map(|v| leaky_relu(v, s))
            }
            Layer::Relu => x.map(|v| v.max(T::zero())),
            Layer::Sigmoid => x.map(sigmoid),
        }
    }

    /// Back-propagates `grad_out` through the recorded tape, accumulating
    /// parameter gradients into `grads` when given. Returns the gradient with
    /// respect to the network input.
    pub fn backward(
        &self,
        tape: &Tape<T>,
        grad_out: Tensor<T>,
        mut grads: Option<&mut ParamGrads<T>>,
    ) -> Tensor<T> {
        let mut g = grad_out;
        for i in (0..self.layers.len()).rev() {
            let input = &tape.acts[i];
            let output = &tape.acts[i + 1];
            debug_assert!(g.same_dims(output));
            g = match self.layers[i] {
                Layer::Conv {
                    cout,
                    kernel,
                    stride,
                    pad,
                    ..
                } => {
                    let slot = self.param_slot[i].unwrap();
                    let (w, _) = self.weight_bias(i);
                    let pg = grads.as_deref_mut().map(|gr| {
                        let (a, b) = gr.tensors.split_at_mut(slot + 1);
                        (a[slot].as_mut_slice(), b[0].as_mut_slice())
                    });
                    conv_backward(input, &g, w, cout, kernel, stride, pad, pg)
                }
                Layer::ConvTranspose {
                    cout,
                    kernel,
                    stride,
                    pad,
                    ..
                } => {
                    let slot = self.param_slot[i].unwrap();
                    let (w, _) = self.weight_bias(i);
                    let pg = grads.as_deref_mut().map(|gr| {
                        let (a, b) = gr.tensors.split_at_mut(slot + 1);
                        (a[slot].as_mut_slice(), b[0].as_mut_slice())
                    });
                    conv_transpose_backward(input, &g, w, cout, kernel, stride, pad, pg)
                }
                Layer::LeakyRelu(slope) => {
                    let s: T = leaky_slope(slope);
                    g.zip_map(input, |gv, xv| if xv > T::zero() { gv } else { gv * s })
                }
                Layer::Relu => g.zip_map(input, |gv, xv| if xv > T::zero() { gv } else { T::zero() }),
                Layer::Sigmoid => g.zip_map(output, |gv, yv| gv * yv * (T::one() - yv)),
            };
        }
        g
    }

    pub fn parametrised_layers(&self) -> usize {
        self.layers.iter().filter(|l| l.has_params()).count()
    }
}

fn conv_forward<T: Scalar>(
    x: &Tensor<T>,
    w: &[T],
    b: &[T],
    cout: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
) -> Tensor<T> {
    let g = Geometry {
        channels: x.c,
        height: x.h,
        width: x.w,
        kernel,
        stride,
        pad,
    };
    let (oh, ow) = (g.out_h(), g.out_w());
    let (rows, cols) = (g.col_rows(), g.col_cols());
    let mut out = Tensor::zeros(x.n, cout, oh, ow);
    let mut col = vec![T::zero(); rows * cols];
    for n in 0..x.n {
        im2col(x.item(n), &g, &mut col);
        let dst = out.item_mut(n);
        for (co, plane) in dst.chunks_mut(cols).enumerate() {
            plane.fill(b[co]);
        }
        T::gemm(
            cout,
            rows,
            cols,
            T::one(),
            w,
            rows as isize,
            1,
            &col,
            cols as isize,
            1,
            T::one(),
            dst,
            cols as isize,
            1,
        );
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn conv_backward<T: Scalar>(
    x: &Tensor<T>,
    grad_out: &Tensor<T>,
    w: &[T],
    cout: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    mut param_grads: Option<(&mut [T], &mut [T])>,
) -> Tensor<T> {
    let g = Geometry {
        channels: x.c,
        height: x.h,
        width: x.w,
        kernel,
        stride,
        pad,
    };
    let (rows, cols) = (g.col_rows(), g.col_cols());
    let mut dx = Tensor::zeros(x.n, x.c, x.h, x.w);
    let mut col = vec![T::zero(); rows * cols];
    let mut dcol = vec![T::zero(); rows * cols];
    for n in 0..x.n {
        let go = grad_out.item(n);
        if let Some((dw, db)) = param_grads.as_mut() {
            im2col(x.item(n), &g, &mut col);
            // dW += dOut * col^T
            T::gemm(
                cout,
                cols,
                rows,
                T::one(),
                go,
                cols as isize,
                1,
                &col,
                1,
                cols as isize,
                T::one(),
                dw,
                rows as isize,
                1,
            );
            for (co, plane) in go.chunks(cols).enumerate() {
                db[co] += plane.iter().copied().sum::<T>();
            }
        }
        // dcol = W^T * dOut
        T::gemm(
            rows,
            cout,
            cols,
            T::one(),
            w,
            1,
            rows as isize,
            go,
            cols as isize,
            1,
            T::zero(),
            &mut dcol,
            cols as isize,
            1,
        );
        col2im(&dcol, &g, dx.item_mut(n));
    }
    dx
}

fn conv_transpose_forward<T: Scalar>(
    x: &Tensor<T>,
    w: &[T],
    b: &[T],
    cout: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
) -> Tensor<T> {
    let oh = conv_transpose_out(x.h, kernel, stride, pad);
    let ow = conv_transpose_out(x.w, kernel, stride, pad);
    // Geometry of the equivalent forward convolution from output to input.
    let g = Geometry {
        channels: cout,
        height: oh,
        width: ow,
        kernel,
        stride,
        pad,
    };
    debug_assert_eq!((g.out_h(), g.out_w()), (x.h, x.w));
    let (rows, cols) = (g.col_rows(), g.col_cols());
    let mut out = Tensor::zeros(x.n, cout, oh, ow);
    let mut col = vec![T::zero(); rows * cols];
    for n in 0..x.n {
        // col = W^T * x, W stored [cin, cout*k*k]
        T::gemm(
            rows,
            x.c,
            cols,
            T::one(),
            w,
            1,
            rows as isize,
            x.item(n),
            cols as isize,
            1,
            T::zero(),
            &mut col,
            cols as isize,
            1,
        );
        let dst = out.item_mut(n);
        for (co, plane) in dst.chunks_mut(oh * ow).enumerate() {
            plane.fill(b[co]);
        }
        col2im(&col, &g, dst);
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn conv_transpose_backward<T: Scalar>(
    x: &Tensor<T>,
    grad_out: &Tensor<T>,
    w: &[T],
    cout: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    mut param_grads: Option<(&mut [T], &mut [T])>,
) -> Tensor<T> {
    let g = Geometry {
        channels: cout,
        height: grad_out.h,
        width: grad_out.w,
        kernel,
        stride,
        pad,
    };
    let (rows, cols) = (g.col_rows(), g.col_cols());
    let plane = grad_out.h * grad_out.w;
    let mut dx = Tensor::zeros(x.n, x.c, x.h, x.w);
    let mut dcol = vec![T::zero(); rows * cols];
    for n in 0..x.n {
        let go = grad_out.item(n);
        im2col(go, &g, &mut dcol);
        // dx = W * dcol
        T::gemm(
            x.c,
            rows,
            cols,
            T::one(),
            w,
            rows as isize,
            1,
            &dcol,
            cols as isize,
            1,
            T::zero(),
            dx.item_mut(n),
            cols as isize,
            1,
        );
        if let Some((dw, db)) = param_grads.as_mut() {
            // dW += x * dcol^T
            T::gemm(
                x.c,
                cols,
                rows,
                T::one(),
                x.item(n),
                cols as isize,
                1,
                &dcol,
                1,
                cols as isize,
                T::one(),
                dw,
                rows as isize,
                1,
            );
            for (co, p) in go.chunks(plane).enumerate() {
                db[co] += p.iter().copied().sum::<T>();
            }
        }
    }
    dx
}
