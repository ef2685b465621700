//! Dense-tensor arithmetic with reverse-mode automatic differentiation.
//!
//! Everything is 64-bit floats: the gradient checks in the test suite need
//! the precision. A tape and the tensors recorded on it are single-threaded;
//! independent tapes may run concurrently.

mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{finite_difference_gradient, max_relative_error, relative_error};
pub use params::{ParamId, ParamStore, Parameter};
pub use tape::{matmul_raw, ReduceOp, Tape, Var};
pub use tensor::Tensor;
