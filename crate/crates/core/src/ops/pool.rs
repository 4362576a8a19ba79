use crate::error::Result;
use crate::ops::spec::PoolSpec;
use crate::tensor::{Element, Tensor};

/// Max pooling. Returns the pooled tensor and, per output element, the flat
/// input index of the window maximum (first occurrence in row-major window
/// order on ties).
pub fn max_pool2d_forward<T: Element>(x: &Tensor<T>, spec: &PoolSpec) -> Result<(Tensor<T>, Vec<usize>)> {
    let s = x.shape();
    let out_shape = spec.output_shape(s)?;
    let k = spec.kernel;
    let mut out = Vec::with_capacity(out_shape.numel());
    let mut argmax = Vec::with_capacity(out_shape.numel());
    for plane in 0..s.n * s.c {
        let base = plane * s.plane();
        for oy in 0..out_shape.h {
            for ox in 0..out_shape.w {
                let mut best_idx = base + (oy * k) * s.w + ox * k;
                let mut best = x.data()[best_idx];
                for ky in 0..k {
                    let row = base + (oy * k + ky) * s.w + ox * k;
                    for kx in 0..k {
                        let v = x.data()[row + kx];
                        if v > best {
                            best = v;
                            best_idx = row + kx;
                        }
                    }
                }
                out.push(best);
                argmax.push(best_idx);
            }
        }
    }
    Ok((Tensor::from_vec(out_shape, out)?, argmax))
}

pub fn max_pool2d_backward<T: Element>(input_len: usize, argmax: &[usize], grad_out: &[T]) -> Vec<T> {
    let mut dx = vec![T::zero(); input_len];
    for (&i, &g) in argmax.iter().zip(grad_out) {
        dx[i] += g;
    }
    dx
}
