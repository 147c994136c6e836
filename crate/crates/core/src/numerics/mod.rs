//! Tensor arithmetic, the seeded generator and the gradient tape.

pub mod ops;
pub mod rng;
pub mod scalar;
pub mod tape;
pub mod tensor;

pub use ops::{matmul, rms_norm, softmax_rows, RMS_EPS};
pub use rng::Rng;
pub use scalar::{DType, Phase, Scalar};
pub use tape::{finite_difference, grad, relative_error, Tape, Var};
pub use tensor::Tensor;
