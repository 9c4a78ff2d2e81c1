//! Desk-scale comparison of unconstrained, soft and hard monotonic alignment
//! on a synthetic token-to-frame task.

pub mod metrics;
mod model;
mod task;
mod train;

pub use model::{forward_gradcheck, infer, teacher_alignment, Inference, Params, ToyModel};
pub use task::{make_batch, render, token_centers, Lexicon, ToyBatch, ToyTask};
pub use train::{train, EvalRecord, Mode, Optimizer, StepRecord, TrainConfig, TrainReport};
