//! Convolution and transposed convolution via im2col + GEMM.
//!
//! Conv weights are `(c_out, c_in, k, k)`. Transposed-conv weights use the
//! adjoint layout `(c_in, c_out, k, k)` so one weight tensor can drive both
//! a strided convolution and its transpose.

use crate::error::{Error, Result};
use crate::ops::spec::ConvSpec;
use crate::tensor::{gemm, Element, Shape, Tensor};

/// Geometry of a convolution from a `(c_in, h_in, w_in)` plane stack to
/// `(h_out, w_out)` positions.
#[derive(Clone, Copy, Debug)]
struct Geometry {
    c_in: usize,
    h_in: usize,
    w_in: usize,
    h_out: usize,
    w_out: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    dilation: usize,
}

impl Geometry {
    fn col_rows(&self) -> usize {
        self.c_in * self.kernel * self.kernel
    }

    fn positions(&self) -> usize {
        self.h_out * self.w_out
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.padding == 0
    }

    /// Input coordinate for output coordinate `o` and kernel tap `t`, if inside.
    #[inline]
    fn source(&self, o: usize, t: usize, len: usize) -> Option<usize> {
        let pos = (o * self.stride + t * self.dilation) as isize - self.padding as isize;
        (pos >= 0 && (pos as usize) < len).then_some(pos as usize)
    }
}

fn im2col<T: Element>(x: &[T], g: &Geometry, col: &mut [T]) {
    let k = g.kernel;
    let p = g.positions();
    for c in 0..g.c_in {
        let plane = &x[c * g.h_in * g.w_in..(c + 1) * g.h_in * g.w_in];
        for ki in 0..k {
            for kj in 0..k {
                let row = ((c * k + ki) * k + kj) * p;
                let dst = &mut col[row..row + p];
                for oy in 0..g.h_out {
                    let out_row = &mut dst[oy * g.w_out..(oy + 1) * g.w_out];
                    match g.source(oy, ki, g.h_in) {
                        None => out_row.iter_mut().for_each(|v| *v = T::zero()),
                        Some(iy) => {
                            let src = &plane[iy * g.w_in..(iy + 1) * g.w_in];
                            for (ox, v) in out_row.iter_mut().enumerate() {
                                *v = match g.source(ox, kj, g.w_in) {
                                    Some(ix) => src[ix],
                                    None => T::zero(),
                                };
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-adds columns back onto the image planes.
fn col2im<T: Element>(col: &[T], g: &Geometry, x: &mut [T]) {
    let k = g.kernel;
    let p = g.positions();
    for c in 0..g.c_in {
        let plane = &mut x[c * g.h_in * g.w_in..(c + 1) * g.h_in * g.w_in];
        for ki in 0..k {
            for kj in 0..k {
                let row = ((c * k + ki) * k + kj) * p;
                let src = &col[row..row + p];
                for oy in 0..g.h_out {
                    let Some(iy) = g.source(oy, ki, g.h_in) else {
                        continue;
                    };
                    let dst = &mut plane[iy * g.w_in..(iy + 1) * g.w_in];
                    for ox in 0..g.w_out {
                        if let Some(ix) = g.source(ox, kj, g.w_in) {
                            dst[ix] += src[oy * g.w_out + ox];
                        }
                    }
                }
            }
        }
    }
}

fn check_bias<T: Element>(bias: &Tensor<T>, channels: usize) -> Result<()> {
    if bias.len() != channels {
        return Err(Error::Contract(format!(
            "bias has {} entries, expected {channels}",
            bias.len()
        )));
    }
    Ok(())
}

fn conv_geometry(input: Shape, spec: &ConvSpec) -> Result<Geometry> {
    let (h_out, w_out) = spec.output_hw(input.h, input.w)?;
    Ok(Geometry {
        c_in: input.c,
        h_in: input.h,
        w_in: input.w,
        h_out,
        w_out,
        kernel: spec.kernel,
        stride: spec.stride,
        padding: spec.padding,
        dilation: spec.dilation,
    })
}

/// Validates operands and returns the output shape.
pub fn conv2d_shape(input: Shape, weight: Shape, spec: &ConvSpec) -> Result<Shape> {
    let expected = [spec.out_channels, input.c, spec.kernel, spec.kernel];
    if weight.dims() != expected {
        return Err(Error::Contract(format!(
            "conv weight {weight} does not match (c_out, c_in, k, k) = {expected:?}"
        )));
    }
    spec.output_shape(input)
}

pub fn conv2d_forward<T: Element>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    spec: &ConvSpec,
) -> Result<Tensor<T>> {
    let out_shape = conv2d_shape(x.shape(), weight.shape(), spec)?;
    check_bias(bias, spec.out_channels)?;
    let g = conv_geometry(x.shape(), spec)?;
    let (rows, pos) = (g.col_rows(), g.positions());
    let in_len = x.shape().c * x.shape().plane();
    let out_len = spec.out_channels * pos;
    let mut out = vec![T::zero(); out_shape.numel()];
    let mut col = if g.is_pointwise() {
        Vec::new()
    } else {
        vec![T::zero(); rows * pos]
    };
    for n in 0..x.shape().n {
        let xi = &x.data()[n * in_len..(n + 1) * in_len];
        let oi = &mut out[n * out_len..(n + 1) * out_len];
        for (c, plane) in oi.chunks_exact_mut(pos).enumerate() {
            plane.iter_mut().for_each(|v| *v = bias.data()[c]);
        }
        let cols: &[T] = if g.is_pointwise() {
            xi
        } else {
            im2col(xi, &g, &mut col);
            &col
        };
        gemm(
            false,
            false,
            spec.out_channels,
            pos,
            rows,
            T::one(),
            weight.data(),
            cols,
            T::one(),
            oi,
        );
    }
    Tensor::from_vec(out_shape, out)
}

/// Input gradient (when requested), weight gradient and bias gradient.
pub type ConvGrads<T> = (Option<Vec<T>>, Vec<T>, Vec<T>);

/// Gradients of a convolution: `(d_input, d_weight, d_bias)`.
/// The input gradient is only computed when `want_input` is set.
pub fn conv2d_backward<T: Element>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    spec: &ConvSpec,
    grad_out: &[T],
    want_input: bool,
) -> Result<ConvGrads<T>> {
    let g = conv_geometry(x.shape(), spec)?;
    let (rows, pos) = (g.col_rows(), g.positions());
    let c_out = spec.out_channels;
    let in_len = x.shape().c * x.shape().plane();
    let out_len = c_out * pos;
    let mut dw = vec![T::zero(); weight.len()];
    let mut db = vec![T::zero(); c_out];
    let mut dx = want_input.then(|| vec![T::zero(); x.len()]);
    let mut col = vec![T::zero(); rows * pos];
    let mut dcol = vec![T::zero(); rows * pos];
    for n in 0..x.shape().n {
        let xi = &x.data()[n * in_len..(n + 1) * in_len];
        let go = &grad_out[n * out_len..(n + 1) * out_len];
        for (c, plane) in go.chunks_exact(pos).enumerate() {
            db[c] += plane.iter().copied().sum::<T>();
        }
        let cols: &[T] = if g.is_pointwise() {
            xi
        } else {
            im2col(xi, &g, &mut col);
            &col
        };
        gemm(false, true, c_out, rows, pos, T::one(), go, cols, T::one(), &mut dw);
        if let Some(dx) = dx.as_mut() {
            let dxi = &mut dx[n * in_len..(n + 1) * in_len];
            if g.is_pointwise() {
                gemm(
                    true,
                    false,
                    rows,
                    pos,
                    c_out,
                    T::one(),
                    weight.data(),
                    go,
                    T::one(),
                    dxi,
                );
            } else {
                gemm(
                    true,
                    false,
                    rows,
                    pos,
                    c_out,
                    T::one(),
                    weight.data(),
                    go,
                    T::zero(),
                    &mut dcol,
                );
                col2im(&dcol, &g, dxi);
            }
        }
    }
    Ok((dx, dw, db))
}

/// The convolution whose adjoint a transposed convolution computes: it maps
/// the transposed output back to the transposed input.
fn transposed_geometry(input: Shape, spec: &ConvSpec) -> Result<(Shape, Geometry)> {
    let out_shape = spec.transposed_output_shape(input)?;
    let g = Geometry {
        c_in: spec.out_channels,
        h_in: out_shape.h,
        w_in: out_shape.w,
        h_out: input.h,
        w_out: input.w,
        kernel: spec.kernel,
        stride: spec.stride,
        padding: spec.padding,
        dilation: spec.dilation,
    };
    // The forward map of `g` must land exactly on the input grid.
    let (h, w) = spec.output_hw(out_shape.h, out_shape.w)?;
    if (h, w) != (input.h, input.w) {
        return Err(Error::InvalidShape(format!(
            "transposed conv geometry is not invertible for input {input}"
        )));
    }
    Ok((out_shape, g))
}

pub fn conv_transpose2d_shape(input: Shape, weight: Shape, spec: &ConvSpec) -> Result<Shape> {
    let expected = [input.c, spec.out_channels, spec.kernel, spec.kernel];
    if weight.dims() != expected {
        return Err(Error::Contract(format!(
            "transposed conv weight {weight} does not match (c_in, c_out, k, k) = {expected:?}"
        )));
    }
    Ok(transposed_geometry(input, spec)?.0)
}

pub fn conv_transpose2d_forward<T: Element>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    spec: &ConvSpec,
) -> Result<Tensor<T>> {
    let out_shape = conv_transpose2d_shape(x.shape(), weight.shape(), spec)?;
    check_bias(bias, spec.out_channels)?;
    let (_, g) = transposed_geometry(x.shape(), spec)?;
    let (rows, pos) = (g.col_rows(), g.positions());
    let c_in = x.shape().c;
    let in_len = c_in * pos;
    let out_plane = out_shape.plane();
    let out_len = spec.out_channels * out_plane;
    let mut out = vec![T::zero(); out_shape.numel()];
    let mut col = vec![T::zero(); rows * pos];
    for n in 0..x.shape().n {
        let xi = &x.data()[n * in_len..(n + 1) * in_len];
        let oi = &mut out[n * out_len..(n + 1) * out_len];
        gemm(
            true,
            false,
            rows,
            pos,
            c_in,
            T::one(),
            weight.data(),
            xi,
            T::zero(),
            &mut col,
        );
        col2im(&col, &g, oi);
        for (c, plane) in oi.chunks_exact_mut(out_plane).enumerate() {
            plane.iter_mut().for_each(|v| *v += bias.data()[c]);
        }
    }
    Tensor::from_vec(out_shape, out)
}

pub fn conv_transpose2d_backward<T: Element>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    spec: &ConvSpec,
    grad_out: &[T],
    want_input: bool,
) -> Result<ConvGrads<T>> {
    let (out_shape, g) = transposed_geometry(x.shape(), spec)?;
    let (rows, pos) = (g.col_rows(), g.positions());
    let c_in = x.shape().c;
    let in_len = c_in * pos;
    let out_plane = out_shape.plane();
    let out_len = spec.out_channels * out_plane;
    let mut dw = vec![T::zero(); weight.len()];
    let mut db = vec![T::zero(); spec.out_channels];
    let mut dx = want_input.then(|| vec![T::zero(); x.len()]);
    let mut dcol = vec![T::zero(); rows * pos];
    for n in 0..x.shape().n {
        let xi = &x.data()[n * in_len..(n + 1) * in_len];
        let go = &grad_out[n * out_len..(n + 1) * out_len];
        for (c, plane) in go.chunks_exact(out_plane).enumerate() {
            db[c] += plane.iter().copied().sum::<T>();
        }
        im2col(go, &g, &mut dcol);
        gemm(false, true, c_in, rows, pos, T::one(), xi, &dcol, T::one(), &mut dw);
        if let Some(dx) = dx.as_mut() {
            let dxi = &mut dx[n * in_len..(n + 1) * in_len];
            gemm(
                false,
                false,
                c_in,
                pos,
                rows,
                T::one(),
                weight.data(),
                &dcol,
                T::zero(),
                dxi,
            );
        }
    }
    Ok((dx, dw, db))
}
