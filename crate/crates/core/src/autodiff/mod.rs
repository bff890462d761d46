//! Reverse-mode automatic differentiation over a linear tape.

mod ops;
mod tape;

pub use ops::{softmax_rows, Pointwise, MASK_LOGIT};
pub use tape::{Tape, Var};
