//! Reverse-mode automatic differentiation over dense `f64` tensors.

mod gradcheck;
pub(crate) mod kernels;
mod tape;
mod tensor;

pub use gradcheck::{check_gradients, GradCheck};
pub use tape::{Tape, Var, Variance};
pub use tensor::Tensor;
