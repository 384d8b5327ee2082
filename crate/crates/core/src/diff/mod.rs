//! Dense matrices and the small reverse-mode engine the model is built on.

mod gradcheck;
mod graph;
mod tensor;

pub use gradcheck::{grad_check, relative_error, GradCheckReport};
pub use graph::{Graph, Var, BCE_CLAMP};
pub use tensor::{
    dot, is_masked, layer_norm, masked_softmax_rows, relu, sigmoid, sigmoid_scalar,
    LayerNormCache, Tensor2, MASK_NEG,
};
