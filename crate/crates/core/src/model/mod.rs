//! Decoder-only transformer with per-layer hidden-state access.
//!
//! Pre-norm blocks (RMSNorm, rotary multi-head attention, SiLU-gated
//! feed-forward). Sequence length never changes inside a block, which is
//! what lets the placeholder slot keep a fixed position across layers.

mod config;
mod forward;
mod weights;

pub use config::ModelConfig;
pub use forward::{
    attention_probs, embed_from, embed_tokens, forward_range, layer_forward, AttentionMask,
    HiddenStates, KvCache, MaskKind, MaskVariant,
};
pub use weights::{LayerWeights, ModelWeights, INIT_STD, WEIGHTS_MAGIC, WEIGHTS_VERSION};
