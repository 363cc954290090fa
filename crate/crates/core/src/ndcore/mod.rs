//! Dense `f64` tensors with a dynamic reverse-mode tape.
//!
//! Binary elementwise operations accept either identical shapes or one
//! single-element operand; every other expansion goes through an explicit
//! op (`repeat_rows`, `repeat_cols`). A fresh [`Tape`] is built per
//! minibatch and discarded after `backward`.

pub mod gradcheck;
mod tape;
mod tensor;

pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

pub(crate) use tape::sigmoid;



#[cfg(test)]
mod tests;
