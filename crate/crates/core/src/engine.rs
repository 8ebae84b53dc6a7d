//! Token-prepending extraction.
//!
//! Layers are numbered from 1 as in the usual "layer l" phrasing: layer
//! `l` is block `l - 1` and its input is the hidden state after `l - 1`
//! blocks. With prepending enabled the pipeline is:
//!
//! 1. embed the prompt, giving placeholder rows their initial vector;
//! 2. before each layer `l` in `start_layer + 1 ..= end_layer`, overwrite
//!    every placeholder row with the row at the final prompt token;
//! 3. run the remaining layers up to `exit_layer` untouched, or, when
//!    `resume_layer` is set, overwrite again before every layer from
//!    `resume_layer` through `exit_layer`;
//! 4. read the final prompt token's row after `exit_layer`.
//!
//! The final RMS norm is applied only when `exit_layer` is the last layer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    embed_from, layer_forward, AttentionMask, HiddenStates, KvCache, MaskKind, ModelConfig,
    ModelWeights,
};
use crate::numerics::rms_norm;
use crate::prompts::{render, PromptTemplate, RenderedPrompt};
use crate::tokenizer::Vocab;

/// Mixed into the model seed for the `uniform01` placeholder init.
pub const PST_UNIFORM_SALT: u64 = 0x5053_545f_494e_4954;

/// How the placeholder rows are initialised before layer 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PstInit {
    Zero,
    One,
    /// Seeded draw from U[0, 1), shared by all placeholder slots.
    Uniform01,
    /// The reserved embedding rows, which hold seeded N(0, 0.02) values.
    #[default]
    Gaussian,
    /// A copy of an existing token's embedding row.
    ExistingToken(u32),
}

impl PstInit {
    pub const ALL_KINDS: [&'static str; 5] = ["zero", "one", "uniform01", "gaussian", "existing_token"];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TpConfig {
    pub enabled: bool,
    pub n_pst: usize,
    pub pst_init: PstInit,
    pub start_layer: usize,
    pub end_layer: usize,
    pub resume_layer: Option<usize>,
    pub exit_layer: usize,
    #[serde(rename = "mask_variant")]
    pub mask: MaskKind,
    pub mask_pst_first_layer: bool,
}

impl TpConfig {
    /// Defaults scaled to the model depth: prepending through layer
    /// `round(L / 4)` and readout from layer `L - 5`, never below the end
    /// of the prepending scope.
    pub fn defaults_for(n_layers: usize) -> Self {
        let end_layer = ((n_layers as f64 / 4.0).round() as usize).max(1);
        let exit_layer = n_layers.saturating_sub(5).max(end_layer).clamp(1, n_layers.max(1));
        Self {
            enabled: true,
            n_pst: 1,
            pst_init: PstInit::Gaussian,
            start_layer: 1,
            end_layer,
            resume_layer: None,
            exit_layer,
            mask: MaskKind::Causal,
            mask_pst_first_layer: false,
        }
    }

    /// Prepending switched off; plain readout from `exit_layer`.
    pub fn disabled(exit_layer: usize) -> Self {
        Self {
            enabled: false,
            n_pst: 0,
            exit_layer,
            end_layer: 1,
            ..Self::defaults_for(exit_layer.max(1))
        }
    }

    /// Placeholders to render into the prompt.
    pub fn render_pst(&self) -> usize {
        if self.enabled {
            self.n_pst
        } else {
            0
        }
    }

    /// Whether the input of `layer` (1-based) is rewritten.
    pub fn prepends_before(&self, layer: usize) -> bool {
        if !self.enabled {
            return false;
        }
        let scope = layer > self.start_layer && layer <= self.end_layer;
        let resumed = self
            .resume_layer
            .is_some_and(|r| layer >= r && layer <= self.exit_layer);
        scope || resumed
    }

    pub fn validate(&self, cfg: &ModelConfig) -> Result<()> {
        let l = cfg.n_layers;
        if self.exit_layer == 0 || self.exit_layer > l {
            return Err(Error::config(format!(
                "exit_layer {} outside 1..={l}",
                self.exit_layer
            )));
        }
        if !self.enabled {
            return Ok(());
        }
        if self.n_pst == 0 {
            return Err(Error::config("n_pst must be at least 1 when enabled"));
        }
        if self.n_pst > cfg.n_reserved_pst {
            return Err(Error::config(format!(
                "n_pst {} exceeds the model's {} reserved placeholder rows",
                self.n_pst, cfg.n_reserved_pst
            )));
        }
        if self.start_layer == 0 || self.start_layer > self.end_layer || self.end_layer > l {
            return Err(Error::config(format!(
                "need 1 <= start_layer ({}) <= end_layer ({}) <= {l}",
                self.start_layer, self.end_layer
            )));
        }
        if let Some(r) = self.resume_layer {
            if r <= self.start_layer || r > l {
                return Err(Error::config(format!(
                    "resume_layer {r} must lie in {}..={l}",
                    self.start_layer + 1
                )));
            }
        }
        if let PstInit::ExistingToken(id) = self.pst_init {
            if id as usize >= cfg.vocab_size {
                return Err(Error::config(format!(
                    "existing_token id {id} is outside the vocabulary"
                )));
            }
        }
        Ok(())
    }
}

/// A JSON run file: every [`TpConfig`] knob plus the prompt template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TpRunConfig {
    pub enabled: bool,
    pub n_pst: usize,
    pub pst_init: PstInit,
    pub start_layer: usize,
    pub end_layer: usize,
    pub resume_layer: Option<usize>,
    pub exit_layer: usize,
    pub mask_variant: MaskKind,
    pub mask_pst_first_layer: bool,
    pub template: String,
}

impl TpRunConfig {
    pub fn new(tp: &TpConfig, template: impl Into<String>) -> Self {
        Self {
            enabled: tp.enabled,
            n_pst: tp.n_pst,
            pst_init: tp.pst_init,
            start_layer: tp.start_layer,
            end_layer: tp.end_layer,
            resume_layer: tp.resume_layer,
            exit_layer: tp.exit_layer,
            mask_variant: tp.mask,
            mask_pst_first_layer: tp.mask_pst_first_layer,
            template: template.into(),
        }
    }

    pub fn tp(&self) -> TpConfig {
        TpConfig {
            enabled: self.enabled,
            n_pst: self.n_pst,
            pst_init: self.pst_init,
            start_layer: self.start_layer,
            end_layer: self.end_layer,
            resume_layer: self.resume_layer,
            exit_layer: self.exit_layer,
            mask: self.mask_variant,
            mask_pst_first_layer: self.mask_pst_first_layer,
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// A sentence embedding read from one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub vector: Vec<f32>,
    /// Number of layers run before readout.
    pub layer: usize,
    /// Readout position; `None` for averages over several prompts.
    pub position: Option<usize>,
}

/// Hooks called around every layer of an extraction.
pub trait LayerObserver {
    /// `h` is the (possibly rewritten) input of `layer`.
    fn layer_input(&mut self, _layer: usize, _h: &HiddenStates) {}
    fn layer_output(&mut self, _layer: usize, _h: &HiddenStates) {}
}

/// Keeps a copy of every layer input and output.
#[derive(Debug, Default)]
pub struct TraceRecorder {
    pub inputs: Vec<(usize, HiddenStates)>,
    pub outputs: Vec<(usize, HiddenStates)>,
}

impl LayerObserver for TraceRecorder {
    fn layer_input(&mut self, layer: usize, h: &HiddenStates) {
        self.inputs.push((layer, h.clone()));
    }

    fn layer_output(&mut self, layer: usize, h: &HiddenStates) {
        self.outputs.push((layer, h.clone()));
    }
}

/// Overwrites every placeholder row with the row at `last_index`.
/// Positions are absolute; all other rows are left untouched.
pub fn intermediate_prepend(
    h: &HiddenStates,
    pst_positions: &[usize],
    last_index: usize,
) -> Result<HiddenStates> {
    let n = h.seq_len();
    if last_index >= n || last_index < h.offset {
        return Err(Error::OutOfRange { position: last_index, len: n });
    }
    let mut out = h.clone();
    if pst_positions.is_empty() {
        return Ok(out);
    }
    let src = h.states.row(last_index - h.offset).to_vec();
    for &p in pst_positions {
        if p >= last_index || p < h.offset {
            return Err(Error::OutOfRange { position: p, len: last_index });
        }
        out.states.row_mut(p - h.offset).copy_from_slice(&src);
    }
    Ok(out)
}

/// The vector placed in placeholder rows, or `None` to use the reserved
/// embedding rows.
pub fn pst_override(w: &ModelWeights, init: PstInit) -> Result<Option<Vec<f32>>> {
    let d = w.d_model();
    Ok(match init {
        PstInit::Zero => Some(vec![0.0; d]),
        PstInit::One => Some(vec![1.0; d]),
        PstInit::Uniform01 => {
            let mut rng = ChaCha8Rng::seed_from_u64(w.config.seed ^ PST_UNIFORM_SALT);
            Some((0..d).map(|_| rng.random::<f32>()).collect())
        }
        PstInit::Gaussian => None,
        PstInit::ExistingToken(id) => {
            if id as usize >= w.config.vocab_size {
                return Err(Error::UnknownToken(id));
            }
            Some(w.embedding.row(id as usize).to_vec())
        }
    })
}

/// Runs the configured pipeline and returns the hidden states after
/// `tp.exit_layer` layers (before any final norm).
pub fn run_to_exit(
    w: &ModelWeights,
    rendered: &RenderedPrompt,
    tp: &TpConfig,
    cache: Option<&KvCache>,
    mut observer: Option<&mut dyn LayerObserver>,
) -> Result<HiddenStates> {
    tp.validate(&w.config)?;
    let pst = rendered.pst_positions();
    let set = rendered.set_index;
    if tp.enabled {
        if pst.len() != tp.n_pst {
            return Err(Error::config(format!(
                "prompt has {} placeholders but n_pst is {}",
                pst.len(),
                tp.n_pst
            )));
        }
        if let Some(&p) = pst.iter().find(|&&p| p >= set) {
            return Err(Error::OutOfRange { position: p, len: set });
        }
    }
    let anchor = rendered.static_prefix_len();
    let offset = match cache {
        Some(c) => {
            c.check_prefix(rendered.seq.ids())?;
            if c.prefix_len() > anchor {
                return Err(Error::CacheMismatch(format!(
                    "cache covers {} tokens but position {anchor} onward may change",
                    c.prefix_len()
                )));
            }
            c.prefix_len()
        }
        None => 0,
    };
    if set >= rendered.len() || set < offset {
        return Err(Error::OutOfRange { position: set, len: rendered.len() });
    }

    let main_mask = AttentionMask::from(tp.mask.anchored(anchor));
    let first_mask = if tp.enabled && tp.mask_pst_first_layer {
        AttentionMask {
            blocked_keys: pst.to_vec(),
            ..main_mask.clone()
        }
    } else {
        main_mask.clone()
    };

    let init = if tp.enabled { pst_override(w, tp.pst_init)? } else { None };
    let mut h = embed_from(w, &rendered.seq, offset, init.as_deref())?;
    for layer in 1..=tp.exit_layer {
        if tp.prepends_before(layer) {
            h = intermediate_prepend(&h, pst, set)?;
        }
        if let Some(obs) = observer.as_deref_mut() {
            obs.layer_input(layer, &h);
        }
        let mask = if layer == 1 { &first_mask } else { &main_mask };
        h = layer_forward(w, layer - 1, &h, mask, cache)?;
        if let Some(obs) = observer.as_deref_mut() {
            obs.layer_output(layer, &h);
        }
    }
    Ok(h)
}

fn readout(w: &ModelWeights, h: &HiddenStates, position: usize) -> Result<Embedding> {
    let row = h
        .row_at(position)
        .ok_or(Error::OutOfRange { position, len: h.seq_len() })?;
    let vector = if h.layer == w.n_layers() {
        rms_norm(row, &w.final_norm, w.config.norm_eps)?
    } else {
        row.to_vec()
    };
    Ok(Embedding {
        vector,
        layer: h.layer,
        position: Some(position),
    })
}

pub fn extract_embedding(w: &ModelWeights, rendered: &RenderedPrompt, tp: &TpConfig) -> Result<Embedding> {
    extract_embedding_cached(w, rendered, tp, None)
}

pub fn extract_embedding_cached(
    w: &ModelWeights,
    rendered: &RenderedPrompt,
    tp: &TpConfig,
    cache: Option<&KvCache>,
) -> Result<Embedding> {
    let h = run_to_exit(w, rendered, tp, cache, None)?;
    readout(w, &h, rendered.set_index)
}

/// Plain causal forward through `exit_layer` layers, last-token readout.
pub fn extract_embedding_vanilla(
    w: &ModelWeights,
    rendered: &RenderedPrompt,
    exit_layer: usize,
) -> Result<Embedding> {
    if exit_layer == 0 || exit_layer > w.n_layers() {
        return Err(Error::config(format!(
            "exit_layer {exit_layer} outside 1..={}",
            w.n_layers()
        )));
    }
    let h0 = embed_from(w, &rendered.seq, 0, None)?;
    let h = crate::model::forward_range(w, &h0, 0, exit_layer, &AttentionMask::causal(), None)?;
    readout(w, &h, rendered.set_index)
}

/// Unweighted mean of the per-template embeddings of `text`.
pub fn multi_prompt_embedding(
    w: &ModelWeights,
    vocab: &Vocab,
    text: &str,
    templates: &[PromptTemplate],
    tp: &TpConfig,
) -> Result<Embedding> {
    if templates.is_empty() {
        return Err(Error::invalid("multi-prompt embedding needs at least one template"));
    }
    let mut sum = vec![0.0f32; w.d_model()];
    for t in templates {
        let r = render(t, text, tp.render_pst(), vocab)?;
        let e = extract_embedding(w, &r, tp)?;
        for (s, x) in sum.iter_mut().zip(&e.vector) {
            *s += x;
        }
    }
    let n = templates.len() as f32;
    for s in &mut sum {
        *s /= n;
    }
    Ok(Embedding {
        vector: sum,
        layer: tp.exit_layer,
        position: None,
    })
}

/// Embeds sentences with one template and config, reusing a KV cache of
/// the template's static prefix.
#[derive(Debug, Clone)]
pub struct Extractor<'a> {
    weights: &'a ModelWeights,
    vocab: &'a Vocab,
    template: PromptTemplate,
    tp: TpConfig,
    cache: Option<KvCache>,
}

impl<'a> Extractor<'a> {
    pub fn new(
        weights: &'a ModelWeights,
        vocab: &'a Vocab,
        template: PromptTemplate,
        tp: TpConfig,
        use_cache: bool,
    ) -> Result<Self> {
        tp.validate(&weights.config)?;
        if vocab.size() != weights.config.vocab_size {
            return Err(Error::config(format!(
                "vocabulary has {} tokens but the model expects {}",
                vocab.size(),
                weights.config.vocab_size
            )));
        }
        template.validate()?;
        let cache = if use_cache {
            // The static prefix does not depend on the sentence, so any
            // probe text yields the same prefix tokens.
            let probe = render(&template, "x", tp.render_pst(), vocab)?;
            let prefix = &probe.seq.ids()[..probe.static_prefix_len()];
            Some(KvCache::build(weights, prefix)?)
        } else {
            None
        };
        Ok(Self {
            weights,
            vocab,
            template,
            tp,
            cache,
        })
    }

    pub fn tp(&self) -> &TpConfig {
        &self.tp
    }

    pub fn template(&self) -> &PromptTemplate {
        &self.template
    }

    pub fn cache(&self) -> Option<&KvCache> {
        self.cache.as_ref()
    }

    pub fn render(&self, text: &str) -> Result<RenderedPrompt> {
        render(&self.template, text, self.tp.render_pst(), self.vocab)
    }

    pub fn embed(&self, text: &str) -> Result<Embedding> {
        let r = self.render(text)?;
        extract_embedding_cached(self.weights, &r, &self.tp, self.cache.as_ref())
    }

    /// Hidden states after the exit layer, with the rendered prompt.
    pub fn states(&self, text: &str) -> Result<(RenderedPrompt, HiddenStates)> {
        let r = self.render(text)?;
        let h = run_to_exit(self.weights, &r, &self.tp, self.cache.as_ref(), None)?;
        Ok((r, h))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::embed_tokens;
    use crate::numerics::Matrix;
    use crate::prompts::builtin;
    use crate::tokenizer::{train_bpe, TokenSequence};

    fn hs(rows: &[Vec<f32>]) -> HiddenStates {
        HiddenStates {
            layer: 1,
            offset: 0,
            states: Matrix::from_rows(rows).unwrap(),
        }
    }

    #[test]
    fn prepend_replaces_only_placeholder_rows() {
        let rows: Vec<Vec<f32>> = (0..5).map(|i| vec![i as f32, -(i as f32)]).collect();
        let h = hs(&rows);
        let out = intermediate_prepend(&h, &[1], 4).unwrap();
        assert_eq!(out.states.row(1), h.states.row(4));
        for i in [0, 2, 3, 4] {
            assert_eq!(out.states.row(i), h.states.row(i));
        }
        assert_eq!(out.rows(), 5);
        assert_eq!(intermediate_prepend(&h, &[], 4).unwrap(), h);
        let three = intermediate_prepend(&h, &[0, 1, 2], 4).unwrap();
        for i in 0..3 {
            assert_eq!(three.states.row(i), h.states.row(4));
        }
        assert!(intermediate_prepend(&h, &[4], 4).is_err());
        assert!(intermediate_prepend(&h, &[1], 5).is_err());
    }

    #[test]
    fn defaults_track_depth() {
        let d32 = TpConfig::defaults_for(32);
        assert_eq!((d32.end_layer, d32.exit_layer), (8, 27));
        let d16 = TpConfig::defaults_for(16);
        assert_eq!((d16.end_layer, d16.exit_layer), (4, 11));
        let d4 = TpConfig::defaults_for(4);
        assert_eq!((d4.end_layer, d4.exit_layer), (1, 1));
    }

    #[test]
    fn prepend_schedule() {
        let tp = TpConfig {
            end_layer: 4,
            exit_layer: 10,
            resume_layer: Some(7),
            ..TpConfig::defaults_for(12)
        };
        let on: Vec<usize> = (1..=12).filter(|&l| tp.prepends_before(l)).collect();
        assert_eq!(on, vec![2, 3, 4, 7, 8, 9, 10]);
        assert!(!TpConfig::disabled(5).prepends_before(2));
    }

    #[test]
    fn config_validation() {
        let cfg = ModelConfig { n_layers: 8, ..Default::default() };
        let ok = TpConfig::defaults_for(8);
        ok.validate(&cfg).unwrap();
        let bad = [
            TpConfig { exit_layer: 9, ..ok.clone() },
            TpConfig { exit_layer: 0, ..ok.clone() },
            TpConfig { start_layer: 0, ..ok.clone() },
            TpConfig { start_layer: 3, end_layer: 2, ..ok.clone() },
            TpConfig { end_layer: 9, ..ok.clone() },
            TpConfig { n_pst: 0, ..ok.clone() },
            TpConfig { n_pst: 5, ..ok.clone() },
            TpConfig { resume_layer: Some(1), ..ok.clone() },
            TpConfig { resume_layer: Some(9), ..ok.clone() },
            TpConfig { pst_init: PstInit::ExistingToken(5000), ..ok.clone() },
        ];
        for tp in bad {
            assert!(tp.validate(&cfg).is_err(), "{tp:?}");
        }
        TpConfig::disabled(8).validate(&cfg).unwrap();
    }

    #[test]
    fn run_file_keys_are_exact() {
        let rc = TpRunConfig::new(&TpConfig::defaults_for(16), "prompteol");
        let json = serde_json::to_value(&rc).unwrap();
        let keys: Vec<&str> = json.as_object().unwrap().keys().map(String::as_str).collect();
        let mut expect = vec![
            "enabled", "n_pst", "pst_init", "start_layer", "end_layer", "resume_layer",
            "exit_layer", "mask_variant", "mask_pst_first_layer", "template",
        ];
        expect.sort();
        let mut keys = keys;
        keys.sort();
        assert_eq!(keys, expect);
        assert_eq!(TpRunConfig::from_json(&json.to_string()).unwrap(), rc);

        let mut extra = json.clone();
        extra["k"] = 3.into();
        assert!(TpRunConfig::from_json(&extra.to_string()).is_err());

        let mut existing = json;
        existing["pst_init"] = serde_json::json!({"existing_token": 32});
        existing["mask_variant"] = "bidir_last_token".into();
        let parsed = TpRunConfig::from_json(&existing.to_string()).unwrap();
        assert_eq!(parsed.pst_init, PstInit::ExistingToken(32));
        assert_eq!(parsed.mask_variant, MaskKind::BidirLastToken);
    }

    fn fixture() -> (ModelWeights, Vocab) {
        let vocab = train_bpe(&["this sentence means in one word the cat sat on the mat"], 280).unwrap();
        let w = ModelWeights::init(&ModelConfig {
            n_layers: 4,
            n_heads: 2,
            d_model: 16,
            d_ff: 32,
            vocab_size: vocab.size(),
            n_reserved_pst: 3,
            seed: 11,
            ..Default::default()
        })
        .unwrap();
        (w, vocab)
    }

    #[test]
    fn overrides_follow_init_mode() {
        let (w, _) = fixture();
        assert_eq!(pst_override(&w, PstInit::Zero).unwrap().unwrap(), vec![0.0; 16]);
        assert_eq!(pst_override(&w, PstInit::One).unwrap().unwrap(), vec![1.0; 16]);
        assert!(pst_override(&w, PstInit::Gaussian).unwrap().is_none());
        let u = pst_override(&w, PstInit::Uniform01).unwrap().unwrap();
        assert!(u.iter().all(|x| (0.0..1.0).contains(x)));
        assert_eq!(u, pst_override(&w, PstInit::Uniform01).unwrap().unwrap());
        assert_eq!(
            pst_override(&w, PstInit::ExistingToken(32)).unwrap().unwrap(),
            w.embedding.row(32)
        );
    }

    #[test]
    fn disabled_equals_vanilla() {
        let (w, vocab) = fixture();
        let t = builtin("prompteol").unwrap();
        let r = render(&t, "the cat sat", 0, &vocab).unwrap();
        for m in 1..=4 {
            let a = extract_embedding(&w, &r, &TpConfig::disabled(m)).unwrap();
            let b = extract_embedding_vanilla(&w, &r, m).unwrap();
            assert_eq!(a, b);
        }
        assert!(extract_embedding_vanilla(&w, &r, 5).is_err());
    }

    #[test]
    fn final_norm_only_at_last_layer() {
        let (w, vocab) = fixture();
        let r = render(&builtin("prompteol").unwrap(), "the mat", 0, &vocab).unwrap();
        let e = extract_embedding_vanilla(&w, &r, 4).unwrap();
        let h0 = embed_tokens(&w, &r.seq, None).unwrap();
        let h = crate::model::forward_range(&w, &h0, 0, 4, &AttentionMask::causal(), None).unwrap();
        let raw = h.states.row(r.set_index);
        assert_eq!(e.vector, rms_norm(raw, &w.final_norm, w.config.norm_eps).unwrap());
        let e3 = extract_embedding_vanilla(&w, &r, 3).unwrap();
        let h3 = crate::model::forward_range(&w, &h0, 0, 3, &AttentionMask::causal(), None).unwrap();
        assert_eq!(e3.vector, h3.states.row(r.set_index));
    }

    #[test]
    fn placeholder_count_must_match() {
        let (w, vocab) = fixture();
        let r = render(&builtin("prompteol").unwrap(), "the cat", 2, &vocab).unwrap();
        let tp = TpConfig { end_layer: 2, exit_layer: 3, ..TpConfig::defaults_for(4) };
        assert!(extract_embedding(&w, &r, &tp).is_err());
        let tp2 = TpConfig { n_pst: 2, ..tp };
        assert!(extract_embedding(&w, &r, &tp2).is_ok());
    }

    #[test]
    fn placeholder_after_readout_is_rejected() {
        let (w, _) = fixture();
        let seq = TokenSequence::new(vec![10, 11, 256], vec![2]).unwrap();
        let r = RenderedPrompt { seq, text_span: 0..2, set_index: 2 };
        let tp = TpConfig { end_layer: 2, exit_layer: 2, ..TpConfig::defaults_for(4) };
        assert!(matches!(extract_embedding(&w, &r, &tp), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn multi_prompt_mean() {
        let (w, vocab) = fixture();
        let tp = TpConfig { end_layer: 2, exit_layer: 3, ..TpConfig::defaults_for(4) };
        let a = builtin("prompteol").unwrap();
        let b = builtin("prompt-b").unwrap();
        let single = multi_prompt_embedding(&w, &vocab, "the cat", &[a.clone()], &tp).unwrap();
        let direct = extract_embedding(&w, &render(&a, "the cat", 1, &vocab).unwrap(), &tp).unwrap();
        assert_eq!(single.vector, direct.vector);
        let twice = multi_prompt_embedding(&w, &vocab, "the cat", &[a.clone(), a.clone()], &tp).unwrap();
        assert_eq!(twice.vector, single.vector);
        let mixed = multi_prompt_embedding(&w, &vocab, "the cat", &[a, b.clone()], &tp).unwrap();
        let eb = extract_embedding(&w, &render(&b, "the cat", 1, &vocab).unwrap(), &tp).unwrap();
        for i in 0..16 {
            assert_eq!(mixed.vector[i], (direct.vector[i] + eb.vector[i]) / 2.0);
        }
        assert!(multi_prompt_embedding(&w, &vocab, "x", &[], &tp).is_err());
    }
}
