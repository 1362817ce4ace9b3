//! Deterministic differentiable compute: layers, reverse-mode gradients with
//! respect to inputs and parameters, and the second-order path used by
//! gradient matching.

mod checkpoint;
mod gemm;
mod graph;
mod kernels;
mod layer;
mod loss;
mod matching;
mod net;
mod optim;
mod second_order;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use graph::{Backward, Graph};
pub use layer::Layer;
pub use loss::{
    check_labels, cross_entropy, mean_loss_and_gradient, mean_param_gradient, param_gradient,
    softmax_rows, GradientSource, GradientVector,
};
pub use matching::{distance_and_gradient, gradient_distance};
pub use net::{embed_len, FeatureNet};
pub use optim::{sgd_step, sgd_update, Sgd};
pub use second_order::{ensure_second_order_capable, match_gradients, second_order_grad, GradientMatch};

#[cfg(test)]
mod tests;
