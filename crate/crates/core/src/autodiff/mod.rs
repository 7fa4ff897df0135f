//! Reverse-mode automatic differentiation over dense tensors.

mod array;
mod gradcheck;
pub(crate) mod kernels;
mod ops;
mod tape;

pub use array::Array;
pub use gradcheck::finite_diff_check;
pub use ops::{attention, concat, elementwise, mse, ElementwiseKind};
pub use tape::{Tape, Tensor};
