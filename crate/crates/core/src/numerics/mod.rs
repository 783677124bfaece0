//! Dense tensors, a small reverse-mode tape, Adam, and gradient checking.

mod adam;
mod checkpoint;
mod gradcheck;
mod graph;
pub mod ops;
mod params;
mod tensor;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{Checkpoint, Dtype, CHECKPOINT_FORMAT_VERSION};
pub use gradcheck::{eval_scalar, grad_check, gradient_pairs, norm_relative_error, relative_error, GradientPair};
pub use graph::{Activation, Graph, Var};
pub use ops::{matmul, mlp_forward, scaled_dot_attention, softmax};
pub use params::{
    add_grads, init_weight, normal_tensor, scale_grads, uniform_tensor, Grads, MlpSpec, ParamStore,
    ParamVars,
};
pub use tensor::Tensor;
