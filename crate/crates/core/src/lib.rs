//! Sentence embeddings from decoder-only transformers via token prepending.
//!
//! A placeholder token is inserted into the prompt ahead of the sentence.
//! Before each early layer its hidden state is overwritten with the
//! previous layer's state at the final prompt token, so tokens that come
//! before the end of the sentence can attend to a summary of all of it.
//! The embedding is then read from an intermediate layer.
//!
//! The crate bundles everything needed to run that end to end at desk
//! scale: a small byte-level BPE tokenizer, a seeded toy transformer,
//! prompt templates, the prepending engine and an evaluation harness.

pub mod engine;
pub mod error;
pub mod eval;
pub mod model;
pub mod numerics;
pub mod prompts;
pub mod synth;
pub mod tokenizer;

pub use engine::{Embedding, PstInit, TpConfig};
pub use error::{Error, Result};
pub use model::{ModelConfig, ModelWeights};
pub use prompts::{PromptTemplate, RenderedPrompt};
pub use tokenizer::{train_bpe, TokenSequence, Vocab};
