//! Dense double-precision math with hand-written backward passes, Adam, and a
//! central-difference gradient checker.

pub mod gradcheck;
pub mod ops;
pub mod params;
pub mod tensor;

pub use gradcheck::{grad_check, relative_error, GradCheckEntry, GradCheckReport};
pub use ops::{
    layer_norm, layer_norm_backward, layer_norm_cached, sigmoid, softmax, softmax_backward,
    softplus, softplus_inv, LayerNormCache, LAYER_NORM_EPS,
};
pub use params::{adam_step, AdamConfig, Gradients, ParamEntry, ParamId, ParamStore, SavedParam};
pub use tensor::Tensor;
