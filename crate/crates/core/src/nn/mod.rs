//! Two-layer MLP with exact GELU and pre-output LayerNorm, hand-written
//! backward passes, AdamW, and the MSE / softmax / Bernoulli loss heads.

mod activation;
mod gradcheck;
mod loss;
mod mlp;
mod optim;

pub use activation::{
    gelu, gelu_grad, gelu_grad_scalar, gelu_scalar, gelu_with_grad, layernorm, layernorm_backward,
    phi, LayerNormCache, LAYERNORM_EPS,
};
pub use gradcheck::{check_mlp_gradients, relative_error, GradCheck, LossHead, RELATIVE_FLOOR};
pub use loss::{log_softmax, log_sum_exp, loss_bce_bits, loss_mse, loss_softmax_ce, sigmoid};
pub use mlp::{Mlp, MlpCache, MlpGrads, DEFAULT_HIDDEN};
pub use optim::{grad_norm_variance, AdamW, AdamWConfig};
