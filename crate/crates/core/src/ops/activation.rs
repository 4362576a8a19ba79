use crate::tensor::Element;

/// Default negative slope.
pub const LEAKY_SLOPE: f64 = 0.1;

pub fn leaky_relu_forward<T: Element>(x: &[T], slope: T) -> Vec<T> {
    x.iter().map(|&v| if v >= T::zero() { v } else { slope * v }).collect()
}

pub fn leaky_relu_backward<T: Element>(x: &[T], slope: T, grad_out: &[T]) -> Vec<T> {
    x.iter()
        .zip(grad_out)
        .map(|(&v, &g)| if v >= T::zero() { g } else { slope * g })
        .collect()
}
