//! The segmentation network: a learned input adaptor, a fusion encoder, and
//! segmentation, reconstruction and domain-classification heads.

mod checkpoint;
mod config;
mod network;
mod params;

pub use checkpoint::{
    checkpoint_bytes, load_checkpoint, params_from_bytes, read_entries, save_checkpoint,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use config::ModelConfig;
pub use network::{Encoded, Network, Outputs};
pub use params::{init_params, Group, ModelParams, Parameter};
