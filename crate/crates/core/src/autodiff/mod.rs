//! Dense `f64` tensors with reverse-mode differentiation and Adam.

mod adam;
mod gradcheck;
mod graph;
pub(crate) mod kernels;
mod params;
mod tensor;

pub use adam::{clip_global_norm, AdamState};
pub use gradcheck::{finite_diff_check, GRADCHECK_FLOOR};
pub use graph::{Gradients, Graph, Var};
pub use params::{BoundParams, ParamSet};
pub use tensor::Tensor;

