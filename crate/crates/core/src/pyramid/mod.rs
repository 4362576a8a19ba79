//! Pyramid configuration, graph construction and parameters.

pub mod builder;
pub mod config;
pub mod params;

pub use builder::{
    attach_projection, build_liteflownet_variant, build_resfpn, Features, Layer, LayerKind, PyramidNet, Role, Source,
    Step,
};
pub use config::{Merge, PyramidConfig, Reshape, VARIANT_NAMES};
pub use params::{ParamSpec, ParamStore};
