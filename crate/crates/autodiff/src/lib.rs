//! Dense tensors with tape-based reverse-mode differentiation, an Adam
//! optimiser and a binary checkpoint container.
//!
//! Tensors are row-major with the feature axis last. A forward pass records
//! onto a [`Tape`]; [`Tape::backward`] returns gradients for every parameter
//! and variable reached from the loss.

pub mod checkpoint;
pub mod error;
mod ops;
pub mod optim;
pub mod params;
pub mod scalar;
mod tape;
pub mod tensor;

pub use checkpoint::{Checkpoint, NamedTensor};
pub use error::{AutodiffError, Result};
pub use ops::BatchStats;
pub use optim::Adam;
pub use params::{ParamId, ParamStore, Parameter};
pub use scalar::Scalar;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
