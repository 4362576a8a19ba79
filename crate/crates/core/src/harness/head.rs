//! Kernels of the single-scale disparity head.
//!
//! The cost of disparity `d` at left pixel `(y, x)` is the channel-mean
//! squared distance between the left feature and the right feature at
//! `(y, x - d)`. Candidates with `x - d < 0` are excluded from the softmax.
//! The prediction is the soft-argmin `sum_d d * softmax(-cost)_d`.

use crate::error::{Error, Result};
use crate::tensor::{Element, Shape, Tensor};

pub fn check_head_inputs(left: Shape, right: Shape) -> Result<Shape> {
    if left != right {
        return Err(Error::Contract(format!(
            "left features {left} and right features {right} differ"
        )));
    }
    Shape::new(left.n, 1, left.h, left.w)
}

/// Returns the disparity map `(N,1,H,W)` and the softmax weights
/// `(N, max_disp + 1, H, W)` (zero for excluded candidates).
pub fn soft_argmin_forward<T: Element>(
    left: &Tensor<T>,
    right: &Tensor<T>,
    max_disp: usize,
) -> Result<(Tensor<T>, Vec<T>)> {
    let out_shape = check_head_inputs(left.shape(), right.shape())?;
    let s = left.shape();
    let (plane, candidates) = (s.plane(), max_disp + 1);
    let inv_c = T::one() / T::of(s.c as f64);
    let mut pred = vec![T::zero(); out_shape.numel()];
    let mut probs = vec![T::zero(); s.n * candidates * plane];
    let mut logits = vec![T::zero(); candidates];
    for n in 0..s.n {
        let l = &left.data()[n * s.c * plane..(n + 1) * s.c * plane];
        let r = &right.data()[n * s.c * plane..(n + 1) * s.c * plane];
        for y in 0..s.h {
            for x in 0..s.w {
                let p = y * s.w + x;
                let valid = max_disp.min(x) + 1;
                for (d, logit) in logits.iter_mut().enumerate().take(valid) {
                    let q = p - d;
                    let mut cost = T::zero();
                    for c in 0..s.c {
                        let diff = l[c * plane + p] - r[c * plane + q];
                        cost += diff * diff;
                    }
                    *logit = -cost * inv_c;
                }
                let peak = logits[..valid].iter().copied().fold(T::neg_infinity(), T::max);
                let mut z = T::zero();
                for logit in &mut logits[..valid] {
                    *logit = (*logit - peak).exp();
                    z += *logit;
                }
                let mut expectation = T::zero();
                for (d, &e) in logits[..valid].iter().enumerate() {
                    let pi = e / z;
                    probs[(n * candidates + d) * plane + p] = pi;
                    expectation += T::of(d as f64) * pi;
                }
                pred[n * plane + p] = expectation;
            }
        }
    }
    Ok((Tensor::from_vec(out_shape, pred)?, probs))
}

/// Gradients with respect to the left and right features.
pub fn soft_argmin_backward<T: Element>(
    left: &Tensor<T>,
    right: &Tensor<T>,
    max_disp: usize,
    probs: &[T],
    pred: &[T],
    grad_out: &[T],
) -> (Vec<T>, Vec<T>) {
    let s = left.shape();
    let (plane, candidates) = (s.plane(), max_disp + 1);
    let two_over_c = T::of(2.0) / T::of(s.c as f64);
    let mut dl = vec![T::zero(); left.len()];
    let mut dr = vec![T::zero(); right.len()];
    for n in 0..s.n {
        let off = n * s.c * plane;
        let l = &left.data()[off..off + s.c * plane];
        let r = &right.data()[off..off + s.c * plane];
        let dl = &mut dl[off..off + s.c * plane];
        let dr = &mut dr[off..off + s.c * plane];
        for y in 0..s.h {
            for x in 0..s.w {
                let p = y * s.w + x;
                let g = grad_out[n * plane + p];
                if g == T::zero() {
                    continue;
                }
                let mean = pred[n * plane + p];
                for d in 0..=max_disp.min(x) {
                    let pi = probs[(n * candidates + d) * plane + p];
                    // d pred / d cost_d = -pi_d (d - pred)
                    let g_cost = -g * pi * (T::of(d as f64) - mean);
                    if g_cost == T::zero() {
                        continue;
                    }
                    let q = p - d;
                    let scale = g_cost * two_over_c;
                    for c in 0..s.c {
                        let diff = l[c * plane + p] - r[c * plane + q];
                        dl[c * plane + p] += scale * diff;
                        dr[c * plane + q] -= scale * diff;
                    }
                }
            }
        }
    }
    (dl, dr)
}

/// Huber loss with `delta = 1`, averaged over masked elements.
pub fn smooth_l1_forward<T: Element>(pred: &[T], target: &[T], mask: &[bool]) -> Result<(T, usize)> {
    if pred.len() != target.len() || pred.len() != mask.len() {
        return Err(Error::Contract(format!(
            "smooth-L1 operands disagree: pred {}, target {}, mask {}",
            pred.len(),
            target.len(),
            mask.len()
        )));
    }
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(Error::Contract("smooth-L1 mask selects no element".into()));
    }
    let half = T::of(0.5);
    let total = pred
        .iter()
        .zip(target)
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|((&p, &t), _)| {
            let r = (p - t).abs();
            if r < T::one() {
                half * r * r
            } else {
                r - half
            }
        })
        .sum::<T>();
    Ok((total / T::of(count as f64), count))
}

pub fn smooth_l1_backward<T: Element>(pred: &[T], target: &[T], mask: &[bool], count: usize, grad_out: T) -> Vec<T> {
    let scale = grad_out / T::of(count as f64);
    pred.iter()
        .zip(target)
        .zip(mask)
        .map(|((&p, &t), &m)| {
            if !m {
                return T::zero();
            }
            let r = p - t;
            r.max(-T::one()).min(T::one()) * scale
        })
        .collect()
}
