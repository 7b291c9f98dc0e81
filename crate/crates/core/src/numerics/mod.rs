//! Tensors and reverse-mode gradient bookkeeping.

pub mod gemm;
pub mod tape;
pub mod tensor;

pub use tape::{Backward, Gradients, Tape, Var};
pub use tensor::Tensor;
