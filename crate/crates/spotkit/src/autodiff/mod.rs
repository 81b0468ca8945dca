//! Reverse-mode differentiation substrate: tensors, the tape, the op
//! catalog, named parameters, and a finite-difference gradient checker.

pub mod gradcheck;
pub mod kernels;
pub mod ops;
pub mod params;
pub mod tape;
pub mod tensor;

pub use gradcheck::{grad_check, CheckReport};
pub use params::{peek_dtype, ParamStore};
pub use tape::{Grads, Tape};
pub use tensor::{Tensor, TensorId};
