//! Tensors, reverse-mode differentiation over a fixed operator set,
//! initialisers and optimizers.

pub mod conv;
pub mod graph;
pub mod network;
pub mod optim;
pub mod params;
pub mod random;
pub mod real;
pub mod tensor;

pub use graph::{Gradients, Graph, Var};
pub use network::{
    apply_layer, bias_name, build_network, forward_backward, forward_sequential, reinit_layers, weight_name, Architecture, Init, Layer,
    LossHead,
};
pub use optim::{OptimizerKind, OptimizerState};
pub use params::{accumulate_grads, clip_grad_norm, grad_norm, Bound, Chain, Grads, NetworkParams, ParamLookup};
pub use random::{derive_seed, rng_from_seed, sample_categorical, standard_normal, LabRng};
pub use real::Real;
pub use tensor::Tensor;
