//! Toy stereo matching harness: synthetic data, disparity head, training
//! and evaluation.

pub mod head;
pub mod metrics;
pub mod stereo;
pub mod train;

pub use metrics::{best_constant_epe, evaluate_predictions, BoundaryBucket, MetricsReport};
pub use stereo::{generate_sample, MatchSample};
pub use train::{evaluate, predict, train, Adam, Split, TaskParams, TrainConfig, TrainReport};
