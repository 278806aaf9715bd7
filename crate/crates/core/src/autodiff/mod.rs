//! Minimal reverse-mode automatic differentiation over dense `f64` tensors.

mod adam;
mod gradcheck;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::finite_diff_check;
pub use tape::{gelu, normal_cdf, Gradients, Tape, Var};
pub use tensor::Tensor;
