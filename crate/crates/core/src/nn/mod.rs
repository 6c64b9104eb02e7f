//! Tone classification network with manual reverse-mode gradients.

mod batch;
pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
mod model;
mod real;

pub use batch::Batch;
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use gradcheck::{check_model, grad_check, GradCheckReport};
pub use layers::{softmax, softmax_cross_entropy, stats_pool};
pub use model::{argmax_rows, Forward, Grads, Mode, Model, ModelConfig, Param, Variant};
pub use real::Real;
