//! Toy patch transformers with hand-written gradients.
//!
//! A segment is cut into one-second patches, embedded linearly and passed
//! through pre-norm blocks (RMSNorm, multi-head attention with rotary
//! positions, GELU MLP). Heads on the final normalized states predict
//! patches (plus optional Laplace scales) and, from the mean-pooled state, a
//! task output. Causal mode with a next-patch objective is the generative
//! generalist; bidirectional mode with masked reconstruction is the other.

mod checkpoint;
mod entropy;
mod gradcheck;
mod net;
mod ops;
mod params;
mod tensor;
mod train;

use thiserror::Error;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use entropy::{attention_entropy, row_entropy};
pub use gradcheck::{grad_check, rel_error, ClassReport, GradCheckReport, ProbeResult, REL_FLOOR};
pub use net::{
    default_spec, forward, forward_with, grad, grad_with, loss, loss_against, loss_with, sample_mask, AttnMaps,
    ForwardOutput, LossSpec, TaskTarget,
};
pub use ops::{gelu, patch_len_for, rmsnorm, rope_rotate, tokenize, PatchSeq, RMS_EPS};
pub use params::{
    AttentionMode, FreezeMode, LayerWeights, ModelConfig, ModelParams, Objective, TensorClass,
    Weights,
};
pub use tensor::Tensor;
pub use train::{train, Example, TrainObjective, TrainReport, TrainerConfig, ADAM_BETAS, ADAM_EPS};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("{len} samples are not divisible into patches of {patch_len}")]
    LengthNotDivisible { len: usize, patch_len: usize },
    #[error("rotary embedding needs an even dimension, got {0}")]
    OddDimension(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("invalid objective: {0}")]
    InvalidObjective(String),
    #[error("mask fraction must lie in (0, 1), got {0}")]
    MaskFractionOutOfRange(f64),
    #[error("objective needs at least {needed} patches, got {got}")]
    TooFewPatches { needed: usize, got: usize },
    #[error("no training data")]
    EmptyData,
    #[error("task training needs a target on every example")]
    MissingTarget,
    #[error("attention row {row} of layer {layer} head {head} sums to {sum}")]
    NonStochasticRow {
        layer: usize,
        head: usize,
        row: usize,
        sum: f64,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
