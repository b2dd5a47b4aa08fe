//! Dense `f64` tensors, a reverse-mode gradient tape, the Adam optimiser,
//! deterministic seeding and a named-tensor checkpoint format.

pub mod checkpoint;
mod error;
pub mod gradcheck;
pub mod optim;
pub mod rng;
mod tape;
mod tensor;

pub use checkpoint::{Checkpoint, CheckpointError};
pub use error::{Result, TensorError};
pub use optim::{Adam, AdamState};
pub use tape::{matmul_into, Gradients, Tape, Var};
pub use tensor::Tensor;
