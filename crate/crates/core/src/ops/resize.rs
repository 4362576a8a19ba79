//! Bilinear resampling with half-pixel centers (corner alignment off).

use crate::error::Result;
use crate::tensor::{Element, Shape, Tensor};

/// Per output coordinate: the two source taps and the weight of the upper one.
fn axis_taps(in_len: usize, out_len: usize) -> Vec<(usize, usize, f64)> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let lo = (src.floor() as usize).min(in_len - 1);
            let hi = (lo + 1).min(in_len - 1);
            let frac = if hi == lo { 0.0 } else { src - lo as f64 };
            (lo, hi, frac)
        })
        .collect()
}

pub fn bilinear_forward<T: Element>(x: &Tensor<T>, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
    let s = x.shape();
    let out_shape = Shape::new(s.n, s.c, out_h, out_w)?;
    if (out_h, out_w) == (s.h, s.w) {
        return Tensor::from_vec(out_shape, x.data().to_vec());
    }
    let ty = axis_taps(s.h, out_h);
    let tx = axis_taps(s.w, out_w);
    let mut out = Vec::with_capacity(out_shape.numel());
    for plane in x.data().chunks_exact(s.plane()) {
        for &(y0, y1, fy) in &ty {
            let (fy, gy) = (T::of(fy), T::of(1.0 - fy));
            let r0 = &plane[y0 * s.w..(y0 + 1) * s.w];
            let r1 = &plane[y1 * s.w..(y1 + 1) * s.w];
            for &(x0, x1, fx) in &tx {
                let (fx, gx) = (T::of(fx), T::of(1.0 - fx));
                let top = gx * r0[x0] + fx * r0[x1];
                let bottom = gx * r1[x0] + fx * r1[x1];
                out.push(gy * top + fy * bottom);
            }
        }
    }
    Tensor::from_vec(out_shape, out)
}

pub fn bilinear_backward<T: Element>(input: Shape, out_h: usize, out_w: usize, grad_out: &[T]) -> Vec<T> {
    let mut dx = vec![T::zero(); input.numel()];
    if (out_h, out_w) == (input.h, input.w) {
        dx.copy_from_slice(grad_out);
        return dx;
    }
    let ty = axis_taps(input.h, out_h);
    let tx = axis_taps(input.w, out_w);
    let out_plane = out_h * out_w;
    for (plane, go) in dx.chunks_exact_mut(input.plane()).zip(grad_out.chunks_exact(out_plane)) {
        for (oy, &(y0, y1, fy)) in ty.iter().enumerate() {
            let (fy, gy) = (T::of(fy), T::of(1.0 - fy));
            for (ox, &(x0, x1, fx)) in tx.iter().enumerate() {
                let (fx, gx) = (T::of(fx), T::of(1.0 - fx));
                let g = go[oy * out_w + ox];
                plane[y0 * input.w + x0] += gy * gx * g;
                plane[y0 * input.w + x1] += gy * fx * g;
                plane[y1 * input.w + x0] += fy * gx * g;
                plane[y1 * input.w + x1] += fy * fx * g;
            }
        }
    }
    dx
}
