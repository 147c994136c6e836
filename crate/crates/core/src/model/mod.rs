//! Block variants, full forward passes, weights and their serialization.

mod autodiff;
mod block;
mod config;
mod forward;
mod serialize;
mod weights;

pub use autodiff::{gradient_check, record_forward, GradientCheck, FD_STEP};
pub use block::{
    attention_sublayer, depth_read_layer, forward_block_depth_attn, forward_block_recommended,
    forward_block_standard, mlp,
};
pub use config::{Injection, MixerSpec, ModelConfig};
pub use forward::forward_model;
pub use serialize::{
    decode_weights, encode_weights, LeBytes, Sidecar, TensorEntry, FORMAT_VERSION, MAGIC,
};
pub use weights::{
    depth_read_sets, init_weights, layout, AttnSublayer, BlockWeights, MlpWeights, ModelWeights,
    Slot, SlotKind, INIT_SCALE,
};
