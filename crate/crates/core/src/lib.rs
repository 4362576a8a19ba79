//! Feature pyramids (FPN) with additional residual skip connections from
//! higher-resolution encoder levels, built on a small reverse-mode autodiff
//! core.
//!
//! * [`tensor`], [`tape`]: NCHW tensors and the differentiation tape.
//! * [`ops`]: convolution, transposed convolution, pooling, LeakyReLU and
//!   bilinear resizing kernels with parameter and FLOP counts.
//! * [`pyramid`]: configuration, graph construction and parameters.
//! * [`accounting`]: per-layer tables and variant comparisons.
//! * [`harness`]: random-dot stereo data, a soft-argmin disparity head,
//!   training and metrics.
//! * [`gradcheck`]: finite-difference checks.
//! * [`cli`]: the `resfpn` command line.

pub mod accounting;
pub mod cli;
pub mod dump;
pub mod error;
pub mod gradcheck;
pub mod harness;
pub mod ops;
pub mod pyramid;
pub mod tape;
pub mod tensor;

pub use error::{Error, Result};
pub use pyramid::{build_resfpn, PyramidConfig, PyramidNet};
pub use tape::{Tape, Var};
pub use tensor::{Shape, Tensor};
