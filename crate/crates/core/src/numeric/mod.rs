//! Dense tensors, seeded randomness and per-sample reverse-mode gradients for small MLPs.

mod matrix;
mod mlp;
mod objective;
mod rng;

pub use matrix::{axpy, dot, squared_distance, DenseMatrix, DenseVector};
pub use mlp::{
    grad_dot, mlp_forward, Activation, FlatParams, MlpSpec, MlpTrace, ParamKind, ParamLayout,
    ParamSegment,
};
pub(crate) use objective::check_sample;
pub use objective::{per_sample_gradient, LossKind, Objective};
pub use rng::{gaussian_sample, mix_seed, sample_key, Rng};
