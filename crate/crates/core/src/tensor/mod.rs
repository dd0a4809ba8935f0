//! Deterministic training substrate: matrices, a reverse-mode tape, dense
//! tanh networks, Nesterov SGD and learning-rate schedules.
//!
//! Everything here is single-threaded with fixed reduction order, so two
//! runs with equal inputs produce bit-identical parameters.

pub mod matrix;
pub mod model;
pub mod optim;
pub mod schedule;
pub mod tape;

pub use matrix::Matrix;
pub use model::{forward_logits, forward_probs, BoundModel, ModelParams};
pub use optim::{optimizer_step, step_model, OptState, DEFAULT_MOMENTUM};
pub use schedule::{lr_at, LrSchedule};
pub use tape::{compute_gradients, Gradients, NodeId, Tape};
