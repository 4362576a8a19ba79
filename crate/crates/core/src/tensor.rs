//! Dense 4-D tensors in `N, C, H, W` row-major layout.

use std::fmt;
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Floating-point element type of the engine.
///
/// Training runs in `f32`; gradient checks switch the whole engine to `f64`.
pub trait Element:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + fmt::Debug
    + fmt::Display
    + Send
    + Sync
    + 'static
{
    /// Dtype code used by the tensor dump format.
    const DTYPE_CODE: u8;
    const BYTES: usize;

    /// `C = alpha * A * B + beta * C` with explicit row/column strides.
    ///
    /// # Safety
    /// Every index reachable through the dimensions and strides must be in
    /// bounds for the respective pointer.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;

    #[inline]
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 is representable")
    }
}

impl Element for f32 {
    const DTYPE_CODE: u8 = 1;
    const BYTES: usize = 4;

    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> f32 {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}

impl Element for f64 {
    const DTYPE_CODE: u8 = 2;
    const BYTES: usize = 8;

    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc);
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> f64 {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
}

/// Dense matrix product on row-major slices.
///
/// `a` is `m x k` (or `k x m` when `trans_a`), `b` is `k x n` (or `n x k`
/// when `trans_b`), `c` is `m x n`. Computes `c = alpha * op(a) op(b) + beta * c`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm<T: Element>(
    trans_a: bool,
    trans_b: bool,
    m: usize,
    n: usize,
    k: usize,
    alpha: T,
    a: &[T],
    b: &[T],
    beta: T,
    c: &mut [T],
) {
    assert!(a.len() >= m * k, "gemm: lhs too short");
    assert!(b.len() >= k * n, "gemm: rhs too short");
    assert!(c.len() >= m * n, "gemm: output too short");
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: lengths checked above cover every index reachable through the strides.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Shape of a 4-D tensor: batch, channels, height, width. Every dim is at least 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub fn new(n: usize, c: usize, h: usize, w: usize) -> Result<Self> {
        if n == 0 || c == 0 || h == 0 || w == 0 {
            return Err(Error::InvalidShape(format!(
                "all dims must be >= 1, got ({n},{c},{h},{w})"
            )));
        }
        Ok(Shape { n, c, h, w })
    }

    pub fn scalar() -> Self {
        Shape { n: 1, c: 1, h: 1, w: 1 }
    }

    pub fn numel(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }

    /// Elements in one `H x W` plane.
    pub fn plane(&self) -> usize {
        self.h * self.w
    }

    pub fn with_channels(&self, c: usize) -> Self {
        Shape { c, ..*self }
    }

    pub fn with_spatial(&self, h: usize, w: usize) -> Self {
        Shape { h, w, ..*self }
    }

    pub fn is_scalar(&self) -> bool {
        self.numel() == 1
    }
}

impl TryFrom<[i64; 4]> for Shape {
    type Error = Error;

    fn try_from(dims: [i64; 4]) -> Result<Self> {
        if dims.iter().any(|&d| d < 1) {
            return Err(Error::InvalidShape(format!("all dims must be >= 1, got {dims:?}")));
        }
        Shape::new(dims[0] as usize, dims[1] as usize, dims[2] as usize, dims[3] as usize)
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{},{})", self.n, self.c, self.h, self.w)
    }
}

/// Initial contents for [`Tensor::create`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Fill {
    Constant(f64),
    Uniform {
        low: f64,
        high: f64,
    },
    /// Uniform on `[-b, b]` with `b = sqrt(6 / fan_in)`, i.e. variance `2 / fan_in`.
    KaimingUniform {
        fan_in: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Shape,
    data: Vec<T>,
    requires_grad: bool,
    grad: Option<Vec<T>>,
}

impl<T: Element> Tensor<T> {
    pub fn zeros(shape: Shape) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: Shape, value: T) -> Self {
        Tensor {
            shape,
            data: vec![value; shape.numel()],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn scalar(value: T) -> Self {
        Self::full(Shape::scalar(), value)
    }

    pub fn from_vec(shape: Shape, data: Vec<T>) -> Result<Self> {
        if data.len() != shape.numel() {
            return Err(Error::InvalidShape(format!(
                "data length {} does not match shape {shape} ({} elements)",
                data.len(),
                shape.numel()
            )));
        }
        Ok(Tensor {
            shape,
            data,
            requires_grad: false,
            grad: None,
        })
    }

    /// Deterministic construction from a fill rule and seed.
    pub fn create(shape: Shape, fill: Fill, seed: u64) -> Result<Self> {
        let numel = shape.numel();
        let data = match fill {
            Fill::Constant(v) => vec![T::of(v); numel],
            Fill::Uniform { low, high } => sample_uniform(numel, low, high, seed)?,
            Fill::KaimingUniform { fan_in } => {
                if fan_in == 0 {
                    return Err(Error::InvalidShape("fan_in must be >= 1".into()));
                }
                let bound = (6.0 / fan_in as f64).sqrt();
                sample_uniform(numel, -bound, bound, seed)?
            }
        };
        Tensor::from_vec(shape, data)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn set_requires_grad(&mut self, flag: bool) {
        self.requires_grad = flag;
    }

    pub fn with_requires_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn grad(&self) -> Option<&[T]> {
        self.grad.as_deref()
    }

    /// Adds `g` into the gradient slot, allocating it on first use.
    pub fn accumulate_grad(&mut self, g: &[T]) {
        assert_eq!(g.len(), self.data.len(), "gradient length mismatch");
        match &mut self.grad {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, &b)| *a += b),
            None => self.grad = Some(g.to_vec()),
        }
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = &mut self.grad {
            g.iter_mut().for_each(|v| *v = T::zero());
        }
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    pub fn index(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        let s = self.shape;
        debug_assert!(n < s.n && c < s.c && h < s.h && w < s.w);
        ((n * s.c + c) * s.h + h) * s.w + w
    }

    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> T {
        self.data[self.index(n, c, h, w)]
    }

    /// Value of a single-element tensor.
    pub fn item(&self) -> Result<T> {
        if !self.shape.is_scalar() {
            return Err(Error::Contract(format!(
                "item() needs a scalar tensor, got {}",
                self.shape
            )));
        }
        Ok(self.data[0])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Converts to another element type. Gradient state is dropped.
    pub fn cast<U: Element>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self
                .data
                .iter()
                .map(|v| U::from_f64(v.to_f64().unwrap_or(f64::NAN)).unwrap_or(U::nan()))
                .collect(),
            requires_grad: self.requires_grad,
            grad: None,
        }
    }
}

fn sample_uniform<T: Element>(numel: usize, low: f64, high: f64, seed: u64) -> Result<Vec<T>> {
    let dist =
        Uniform::new(low, high).map_err(|e| Error::Contract(format!("bad uniform range [{low}, {high}): {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..numel).map(|_| T::of(dist.sample(&mut rng))).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_fill() {
        let t = Tensor::<f32>::create(Shape::new(1, 1, 2, 2).unwrap(), Fill::Constant(0.0), 0).unwrap();
        assert_eq!(t.data(), &[0.0; 4]);
        assert!(!t.requires_grad());
    }

    #[test]
    fn uniform_fill_is_deterministic() {
        let shape = Shape::new(1, 3, 64, 64).unwrap();
        let fill = Fill::Uniform { low: -1.0, high: 1.0 };
        let a = Tensor::<f32>::create(shape, fill, 7).unwrap();
        let b = Tensor::<f32>::create(shape, fill, 7).unwrap();
        let bits = |t: &Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        let c = Tensor::<f32>::create(shape, fill, 8).unwrap();
        assert_ne!(bits(&a), bits(&c));
        assert!(a.data().iter().all(|&v| (-1.0..1.0).contains(&v)));
    }

    #[test]
    fn kaiming_variance_matches_fan_in() {
        // (2,16,32,32) draws more than 10^4 values.
        let fan_in = 16 * 9;
        let t = Tensor::<f64>::create(Shape::new(2, 16, 32, 32).unwrap(), Fill::KaimingUniform { fan_in }, 3).unwrap();
        let n = t.len() as f64;
        let mean = t.data().iter().sum::<f64>() / n;
        let var = t.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let target = 2.0 / fan_in as f64;
        assert!((var / target - 1.0).abs() < 0.2, "var {var} target {target}");
    }

    #[test]
    fn rejects_degenerate_dims() {
        assert!(matches!(Shape::new(1, 0, 2, 2), Err(Error::InvalidShape(_))));
        assert!(matches!(Shape::try_from([1, 3, -2, 2]), Err(Error::InvalidShape(_))));
        assert!(Tensor::<f32>::from_vec(Shape::new(1, 1, 2, 2).unwrap(), vec![0.0; 3]).is_err());
    }

    #[test]
    fn grad_accumulates() {
        let mut t = Tensor::<f64>::zeros(Shape::new(1, 1, 1, 2).unwrap()).with_requires_grad();
        t.accumulate_grad(&[1.0, 2.0]);
        t.accumulate_grad(&[0.5, 0.5]);
        assert_eq!(t.grad().unwrap(), &[1.5, 2.5]);
        t.zero_grad();
        assert_eq!(t.grad().unwrap(), &[0.0, 0.0]);
    }

    #[test]
    fn gemm_transposes() {
        // a = [[1,2],[3,4]], b = [[5,6],[7,8]]
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [5.0, 6.0, 7.0, 8.0];
        let mut c = [0.0f64; 4];
        gemm(false, false, 2, 2, 2, 1.0, &a, &b, 0.0, &mut c);
        assert_eq!(c, [19.0, 22.0, 43.0, 50.0]);
        gemm(true, false, 2, 2, 2, 1.0, &a, &b, 0.0, &mut c);
        assert_eq!(c, [26.0, 30.0, 38.0, 44.0]);
        gemm(false, true, 2, 2, 2, 1.0, &a, &b, 0.0, &mut c);
        assert_eq!(c, [17.0, 23.0, 39.0, 53.0]);
    }
}
