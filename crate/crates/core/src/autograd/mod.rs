//! Minimal reverse-mode automatic differentiation over [`Tensor`](crate::tensor::Tensor).
//!
//! Values are recorded on a [`Tape`] as they are computed; [`Tape::backward`]
//! replays the recording in reverse. The operator set is exactly what the
//! segmentation network and its losses need.

mod conv;
mod dense;
mod elementwise;
pub mod gradcheck;
mod kernels;
mod norm;
mod shape;
mod tape;

pub use conv::conv2d;
pub use dense::{cross_entropy_with_logits, linear, softmax};
pub use gradcheck::{grad_check, grad_check_with, GradCheckOptions, GradCheckReport};
pub use norm::{
    batch_norm, channel_affine, instance_norm, Mode, RunningStats, DEFAULT_EPS, DEFAULT_MOMENTUM,
};
pub use shape::{avgpool2d, concat, global_avg_pool, narrow, pad_edge, upsample_nearest};
pub use tape::{Gradients, Tape, Var};

