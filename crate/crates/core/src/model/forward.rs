//! Pre-norm transformer blocks, attention masks and the prefix KV cache.

use serde::{Deserialize, Serialize};

use super::ModelWeights;
use crate::error::{Error, Result};
use crate::numerics::{dot, matmul, rms_norm_rows, rope_heads_in_place, silu, softmax_row, Matrix};
use crate::tokenizer::TokenSequence;

/// Activations after `layer` blocks (`layer = 0` is the embedding output).
///
/// `offset` is the absolute position of the first row. It is non-zero only
/// when a [`KvCache`] supplies the rows before it.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenStates {
    pub layer: usize,
    pub offset: usize,
    pub states: Matrix,
}

impl HiddenStates {
    pub fn rows(&self) -> usize {
        self.states.rows()
    }

    /// Total sequence length covered, counting cached rows.
    pub fn seq_len(&self) -> usize {
        self.offset + self.states.rows()
    }

    /// Row at absolute position `pos`.
    pub fn row_at(&self, pos: usize) -> Option<&[f32]> {
        (pos >= self.offset && pos < self.seq_len()).then(|| self.states.row(pos - self.offset))
    }
}

/// Which attention pattern to use, before it is anchored to a position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskKind {
    #[default]
    Causal,
    BidirLastToken,
    BidirInputSentence,
}

impl MaskKind {
    pub fn anchored(self, start: usize) -> MaskVariant {
        match self {
            MaskKind::Causal => MaskVariant::Causal,
            MaskKind::BidirLastToken => MaskVariant::BidirLastToken { start },
            MaskKind::BidirInputSentence => MaskVariant::BidirInputSentence { start },
        }
    }
}

/// Attention pattern over absolute positions.
///
/// * `Causal`: row `i` sees `j <= i`.
/// * `BidirLastToken`: causal, and every row at or after `start` also sees
///   the final position.
/// * `BidirInputSentence`: causal, and rows in `[start, n)` see each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskVariant {
    Causal,
    BidirLastToken { start: usize },
    BidirInputSentence { start: usize },
}

impl MaskVariant {
    pub fn start(&self) -> Option<usize> {
        match *self {
            MaskVariant::Causal => None,
            MaskVariant::BidirLastToken { start } | MaskVariant::BidirInputSentence { start } => {
                Some(start)
            }
        }
    }
}

/// A mask variant plus key positions hidden from every other row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionMask {
    pub variant: MaskVariant,
    /// Keys nobody but the key's own row may attend to.
    pub blocked_keys: Vec<usize>,
}

impl From<MaskVariant> for AttentionMask {
    fn from(variant: MaskVariant) -> Self {
        Self {
            variant,
            blocked_keys: Vec::new(),
        }
    }
}

impl AttentionMask {
    pub fn causal() -> Self {
        MaskVariant::Causal.into()
    }

    /// Whether query `i` may attend to key `j` in a sequence of length `n`.
    pub fn allows(&self, i: usize, j: usize, n: usize) -> bool {
        if i != j && self.blocked_keys.contains(&j) {
            return false;
        }
        match self.variant {
            MaskVariant::Causal => j <= i,
            MaskVariant::BidirLastToken { start } => j <= i || (i >= start && j + 1 == n),
            MaskVariant::BidirInputSentence { start } => j <= i || (i >= start && j >= start),
        }
    }

    fn check(&self, n: usize) -> Result<()> {
        if let Some(start) = self.variant.start() {
            if start >= n {
                return Err(Error::OutOfRange { position: start, len: n });
            }
        }
        Ok(())
    }
}

/// Keys and values of a frozen prompt prefix for every layer.
#[derive(Debug, Clone, PartialEq)]
pub struct KvCache {
    prefix_ids: Vec<u32>,
    layers: Vec<(Matrix, Matrix)>,
}

impl KvCache {
    /// Runs `prefix_ids` through every layer under causal attention and
    /// keeps the post-rotary keys and the values.
    pub fn build(w: &ModelWeights, prefix_ids: &[u32]) -> Result<Self> {
        let seq = TokenSequence::new(prefix_ids.to_vec(), Vec::new())?;
        let mut h = embed_tokens(w, &seq, None)?;
        let mask = AttentionMask::causal();
        let mut layers = Vec::with_capacity(w.n_layers());
        for layer in 0..w.n_layers() {
            let mut kv = None;
            h = block(w, layer, &h, &mask, None, Some(&mut kv), None)?;
            layers.push(kv.expect("block records kv"));
        }
        Ok(Self {
            prefix_ids: prefix_ids.to_vec(),
            layers,
        })
    }

    pub fn prefix_len(&self) -> usize {
        self.prefix_ids.len()
    }

    pub fn prefix_ids(&self) -> &[u32] {
        &self.prefix_ids
    }

    /// Errors unless `ids` starts with the cached prefix.
    pub fn check_prefix(&self, ids: &[u32]) -> Result<()> {
        if ids.len() < self.prefix_len() || ids[..self.prefix_len()] != self.prefix_ids[..] {
            return Err(Error::CacheMismatch(format!(
                "sequence does not start with the {}-token cached prefix",
                self.prefix_len()
            )));
        }
        Ok(())
    }
}

/// Embedding lookup for the whole sequence. Placeholder rows use
/// `pst_override` when given, else the reserved embedding rows.
pub fn embed_tokens(
    w: &ModelWeights,
    seq: &TokenSequence,
    pst_override: Option<&[f32]>,
) -> Result<HiddenStates> {
    embed_from(w, seq, 0, pst_override)
}

/// Embeds positions `from..` of `seq`; the result has `offset = from`.
pub fn embed_from(
    w: &ModelWeights,
    seq: &TokenSequence,
    from: usize,
    pst_override: Option<&[f32]>,
) -> Result<HiddenStates> {
    let d = w.d_model();
    if from > seq.len() {
        return Err(Error::OutOfRange { position: from, len: seq.len() });
    }
    if let Some(v) = pst_override {
        if v.len() != d {
            return Err(Error::ShapeMismatch {
                op: "embed_tokens override",
                left: (1, v.len()),
                right: (1, d),
            });
        }
    }
    let rows = w.embedding.rows();
    let mut states = Matrix::zeros(seq.len() - from, d);
    for (r, pos) in (from..seq.len()).enumerate() {
        let id = seq.ids()[pos] as usize;
        if id >= rows {
            return Err(Error::UnknownToken(id as u32));
        }
        let is_pst = seq.pst_positions().binary_search(&pos).is_ok();
        let src = match pst_override {
            Some(v) if is_pst => v,
            _ => w.embedding.row(id),
        };
        states.row_mut(r).copy_from_slice(src);
    }
    Ok(HiddenStates { layer: 0, offset: from, states })
}

/// Applies block `layer` (0-based) to `h`, which must hold the output of
/// the previous `layer` blocks.
pub fn layer_forward(
    w: &ModelWeights,
    layer: usize,
    h: &HiddenStates,
    mask: &AttentionMask,
    cache: Option<&KvCache>,
) -> Result<HiddenStates> {
    block(w, layer, h, mask, cache, None, None)
}

/// Post-softmax attention weights of block `layer`, one `[rows × seq_len]`
/// matrix per head. Computed by the same code path as [`layer_forward`].
pub fn attention_probs(
    w: &ModelWeights,
    layer: usize,
    h: &HiddenStates,
    mask: &AttentionMask,
    cache: Option<&KvCache>,
) -> Result<Vec<Matrix>> {
    let mut probs = Vec::new();
    block(w, layer, h, mask, cache, None, Some(&mut probs))?;
    Ok(probs)
}

/// Runs blocks `from..to` with no intervention.
pub fn forward_range(
    w: &ModelWeights,
    h: &HiddenStates,
    from: usize,
    to: usize,
    mask: &AttentionMask,
    cache: Option<&KvCache>,
) -> Result<HiddenStates> {
    if from > to || to > w.n_layers() {
        return Err(Error::invalid(format!(
            "layer range {from}..{to} outside 0..={}",
            w.n_layers()
        )));
    }
    let mut h = h.clone();
    for layer in from..to {
        h = layer_forward(w, layer, &h, mask, cache)?;
    }
    Ok(h)
}

fn block(
    w: &ModelWeights,
    layer: usize,
    h: &HiddenStates,
    mask: &AttentionMask,
    cache: Option<&KvCache>,
    kv_out: Option<&mut Option<(Matrix, Matrix)>>,
    mut probs_out: Option<&mut Vec<Matrix>>,
) -> Result<HiddenStates> {
    let cfg = &w.config;
    let lw = w
        .layers
        .get(layer)
        .ok_or_else(|| Error::invalid(format!("layer {layer} out of range")))?;
    if h.layer != layer {
        return Err(Error::invalid(format!(
            "block {layer} expects hidden states after {layer} layers, got {}",
            h.layer
        )));
    }
    let (d, n_heads, hd) = (cfg.d_model, cfg.n_heads, cfg.head_dim());
    if h.states.cols() != d {
        return Err(Error::ShapeMismatch {
            op: "layer_forward",
            left: h.states.shape(),
            right: (h.rows(), d),
        });
    }
    match cache {
        Some(c) if c.prefix_len() != h.offset => {
            return Err(Error::CacheMismatch(format!(
                "cache covers {} positions but hidden states start at {}",
                c.prefix_len(),
                h.offset
            )))
        }
        None if h.offset != 0 => {
            return Err(Error::CacheMismatch(format!(
                "hidden states start at {} but no cache was given",
                h.offset
            )))
        }
        _ => {}
    }
    let rows = h.rows();
    let n = h.seq_len();
    mask.check(n)?;

    let x = &h.states;
    let xn = rms_norm_rows(x, &lw.attn_norm, cfg.norm_eps)?;
    let mut q = matmul(&xn, &lw.wq)?;
    let mut k = matmul(&xn, &lw.wk)?;
    let v = matmul(&xn, &lw.wv)?;
    let positions: Vec<usize> = (h.offset..n).collect();
    rope_heads_in_place(&mut q, &positions, cfg.rope_theta, hd)?;
    rope_heads_in_place(&mut k, &positions, cfg.rope_theta, hd)?;

    let (keys, values) = match cache {
        Some(c) => {
            let (ck, cv) = &c.layers[layer];
            (ck.vstack(&k)?, cv.vstack(&v)?)
        }
        None => (k.clone(), v.clone()),
    };
    if let Some(out) = kv_out {
        *out = Some((k, v));
    }

    let scale = 1.0 / (hd as f32).sqrt();
    let mut attn = Matrix::zeros(rows, d);
    let mut logits = vec![0.0f32; n];
    for head in 0..n_heads {
        let cols = head * hd..(head + 1) * hd;
        let mut head_probs = probs_out.as_ref().map(|_| Matrix::zeros(rows, n));
        for i in 0..rows {
            let qi = &q.row(i)[cols.clone()];
            let abs_i = h.offset + i;
            for (j, logit) in logits.iter_mut().enumerate() {
                *logit = if mask.allows(abs_i, j, n) {
                    dot(qi, &keys.row(j)[cols.clone()]) * scale
                } else {
                    f32::NEG_INFINITY
                };
            }
            let p = softmax_row(&logits)?;
            let out = &mut attn.row_mut(i)[cols.clone()];
            for (j, &pj) in p.iter().enumerate() {
                if logits[j] == f32::NEG_INFINITY {
                    continue;
                }
                for (o, &vj) in out.iter_mut().zip(&values.row(j)[cols.clone()]) {
                    *o += pj * vj;
                }
            }
            if let Some(hp) = head_probs.as_mut() {
                hp.row_mut(i).copy_from_slice(&p);
            }
        }
        if let (Some(sink), Some(hp)) = (probs_out.as_deref_mut(), head_probs) {
            sink.push(hp);
        }
    }

    let attn_out = matmul(&attn, &lw.wo)?;
    let mut resid = x.clone();
    for (r, a) in resid.data_mut().iter_mut().zip(attn_out.data()) {
        *r += a;
    }

    let hn = rms_norm_rows(&resid, &lw.ffn_norm, cfg.norm_eps)?;
    let gate = matmul(&hn, &lw.gate)?;
    let mut act = matmul(&hn, &lw.up)?;
    for (u, &g) in act.data_mut().iter_mut().zip(gate.data()) {
        *u *= silu(g);
    }
    let ffn_out = matmul(&act, &lw.down)?;
    for (r, f) in resid.data_mut().iter_mut().zip(ffn_out.data()) {
        *r += f;
    }

    Ok(HiddenStates {
        layer: layer + 1,
        offset: h.offset,
        states: resid,
    })
}
