//! Differentiable layer kernels: forward, backward, parameter and FLOP counts.

pub mod activation;
pub mod conv;
pub mod pool;
pub mod resize;
pub mod spec;

pub use activation::LEAKY_SLOPE;
pub use spec::{ConvSpec, PoolSpec};
