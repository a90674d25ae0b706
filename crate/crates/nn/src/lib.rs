//! Dense `f64` tensors, tape-based reverse-mode differentiation and the
//! layers used by the trajectory model.

pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod optim;
pub mod params;
pub mod tape;
pub mod tensor;

pub use error::{NnError, Result};
pub use params::{Gradients, ParamId, ParamStore};
pub use tape::{Tape, UnaryOp, Var};
pub use tensor::Tensor;
