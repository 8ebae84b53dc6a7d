//! Shared fixtures and the reference pipeline used as a test oracle.
//!
//! The reference pipeline reuses only single-layer primitives
//! (`layer_forward`, `rms_norm`). Placeholder initialisation, the
//! replacement schedule, mask construction and readout are spelled out
//! here independently of the engine.
#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tp_core::engine::PST_UNIFORM_SALT;
use tp_core::model::{layer_forward, AttentionMask, HiddenStates, MaskKind, MaskVariant};
use tp_core::numerics::{rms_norm, Matrix};
use tp_core::{synth, train_bpe, ModelConfig, ModelWeights, PstInit, RenderedPrompt, TpConfig, Vocab};

pub fn workspace_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

/// Vocabulary and config shipped with the repository.
pub fn shipped_vocab() -> &'static Vocab {
    static V: OnceLock<Vocab> = OnceLock::new();
    V.get_or_init(|| Vocab::load(&workspace_root().join("data/vocab.txt")).unwrap())
}

pub fn shipped_config() -> ModelConfig {
    let text = std::fs::read_to_string(workspace_root().join("configs/toy.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

/// The 16-layer toy model.
pub fn toy_model() -> &'static ModelWeights {
    static W: OnceLock<ModelWeights> = OnceLock::new();
    W.get_or_init(|| ModelWeights::init(&shipped_config()).unwrap())
}

/// A small vocabulary for the 4-layer test models.
pub fn small_vocab() -> &'static Vocab {
    static V: OnceLock<Vocab> = OnceLock::new();
    V.get_or_init(|| train_bpe(&synth::corpus(3, 60), 400).unwrap())
}

pub fn small_config(seed: u64) -> ModelConfig {
    ModelConfig {
        n_layers: 4,
        n_heads: 4,
        d_model: 32,
        d_ff: 64,
        vocab_size: small_vocab().size(),
        n_reserved_pst: 4,
        rope_theta: 10000.0,
        norm_eps: 1e-5,
        seed,
    }
}

pub fn small_model(seed: u64) -> ModelWeights {
    ModelWeights::init(&small_config(seed)).unwrap()
}

fn initial_row(w: &ModelWeights, id: u32, init: PstInit) -> Vec<f32> {
    let d = w.config.d_model;
    match init {
        PstInit::Zero => vec![0.0; d],
        PstInit::One => vec![1.0; d],
        PstInit::Uniform01 => {
            let mut r = ChaCha8Rng::seed_from_u64(w.config.seed ^ PST_UNIFORM_SALT);
            (0..d).map(|_| r.random::<f32>()).collect()
        }
        PstInit::Gaussian => w.embedding.row(id as usize).to_vec(),
        PstInit::ExistingToken(t) => w.embedding.row(t as usize).to_vec(),
    }
}

/// Every layer materialised in turn; replacement by an explicit loop over
/// placeholder rows and columns.
pub fn reference_embedding(w: &ModelWeights, r: &RenderedPrompt, tp: &TpConfig) -> Vec<f32> {
    let ids = r.seq.ids();
    let n = ids.len();
    let d = w.config.d_model;
    let pst: Vec<usize> = if tp.enabled { r.pst_positions().to_vec() } else { Vec::new() };
    let last = n - 1;
    assert_eq!(r.set_index, last);

    let mut h0 = Matrix::zeros(n, d);
    for i in 0..n {
        let row = if pst.contains(&i) {
            initial_row(w, ids[i], tp.pst_init)
        } else {
            w.embedding.row(ids[i] as usize).to_vec()
        };
        for (c, v) in row.into_iter().enumerate() {
            h0.set(i, c, v);
        }
    }

    let anchor = match r.pst_positions().first() {
        Some(&p) => p.min(r.text_span.start),
        None => r.text_span.start,
    };
    let variant = match tp.mask {
        MaskKind::Causal => MaskVariant::Causal,
        MaskKind::BidirLastToken => MaskVariant::BidirLastToken { start: anchor },
        MaskKind::BidirInputSentence => MaskVariant::BidirInputSentence { start: anchor },
    };

    let mut h = HiddenStates { layer: 0, offset: 0, states: h0 };
    for l in 1..=tp.exit_layer {
        let in_scope = l >= tp.start_layer + 1 && l <= tp.end_layer;
        let resumed = match tp.resume_layer {
            Some(rl) => l >= rl && l <= tp.exit_layer,
            None => false,
        };
        if tp.enabled && (in_scope || resumed) {
            for &p in &pst {
                for c in 0..d {
                    let v = h.states.get(last, c);
                    h.states.set(p, c, v);
                }
            }
        }
        let blocked = if l == 1 && tp.enabled && tp.mask_pst_first_layer { pst.clone() } else { Vec::new() };
        let mask = AttentionMask { variant, blocked_keys: blocked };
        h = layer_forward(w, l - 1, &h, &mask, None).unwrap();
    }

    let row = h.states.row(last);
    if tp.exit_layer == w.config.n_layers {
        rms_norm(row, &w.final_norm, w.config.norm_eps).unwrap()
    } else {
        row.to_vec()
    }
}

pub fn max_abs_diff(a: &[f32], b: &[f32]) -> f32 {
    assert_eq!(a.len(), b.len());
    assert!(a.iter().chain(b).all(|x| x.is_finite()), "non-finite value");
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f32::max)
}

pub fn bits(v: &[f32]) -> Vec<u32> {
    v.iter().map(|x| x.to_bits()).collect()
}
