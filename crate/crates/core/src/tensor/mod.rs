//! Minimal dense differentiable computation: tensors, a reverse-mode tape,
//! the layers the fault encoder and migration GAN need, AdamW, and a
//! finite-difference gradient checker.

mod dense;
mod gradcheck;
mod graph;
mod nn;
mod params;

pub use dense::Tensor;
pub use gradcheck::{grad_check, relative_error, GradCheckConfig, GradCheckReport};
pub use graph::{sigmoid, Grads, Graph, Var, LAYER_NORM_EPS};
pub use nn::{
    linear, scaled_dot_attention, AttentionHead, FeedForward, GruCell, Linear, MultiHeadAttention,
};
pub use params::{AdamW, ParamId, ParamStore, Parameter};
