//! Byte-level BPE tokenizer with reserved placeholder ids.
//!
//! Ids `0..256` are raw bytes; learned merges follow. Placeholder tokens
//! live just past the vocabulary (`size + slot`) and never decode to text.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Upper bound on placeholder slots recognised by [`Vocab::decode`].
pub const MAX_PST_SLOTS: usize = 64;

const HEADER: &str = "bpe-vocab v1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<Vec<u8>>,
    merges: Vec<(u32, u32)>,
    by_bytes: HashMap<Vec<u8>, u32>,
    merge_ids: HashMap<(u32, u32), u32>,
}

impl Default for Vocab {
    fn default() -> Self {
        Self::byte_level()
    }
}

impl Vocab {
    /// The 256-symbol base vocabulary with no merges.
    pub fn byte_level() -> Self {
        let tokens: Vec<Vec<u8>> = (0..=255u8).map(|b| vec![b]).collect();
        let by_bytes = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self {
            tokens,
            merges: Vec::new(),
            by_bytes,
            merge_ids: HashMap::new(),
        }
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn merges(&self) -> &[(u32, u32)] {
        &self.merges
    }

    pub fn token_bytes(&self, id: u32) -> Option<&[u8]> {
        self.tokens.get(id as usize).map(Vec::as_slice)
    }

    /// Reserved id of placeholder slot `slot`.
    pub fn pst_id(&self, slot: usize) -> u32 {
        (self.size() + slot) as u32
    }

    pub fn is_pst(&self, id: u32) -> bool {
        let id = id as usize;
        id >= self.size() && id < self.size() + MAX_PST_SLOTS
    }

    fn push_merge(&mut self, left: u32, right: u32) -> u32 {
        let mut bytes = self.tokens[left as usize].clone();
        bytes.extend_from_slice(&self.tokens[right as usize]);
        let id = self.tokens.len() as u32;
        self.by_bytes.insert(bytes.clone(), id);
        self.tokens.push(bytes);
        self.merges.push((left, right));
        self.merge_ids.insert((left, right), id);
        id
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        self.encode_bytes(text.as_bytes())
    }

    pub fn encode_bytes(&self, bytes: &[u8]) -> Vec<u32> {
        let mut out = Vec::with_capacity(bytes.len());
        for chunk in pretokenize(bytes) {
            self.encode_chunk(chunk, &mut out);
        }
        out
    }

    fn encode_chunk(&self, chunk: &[u8], out: &mut Vec<u32>) {
        let mut ids: Vec<u32> = chunk.iter().map(|&b| b as u32).collect();
        // Merge ids are assigned in training order, so the smallest id is
        // the earliest-ranked merge.
        while ids.len() > 1 {
            let best = ids
                .windows(2)
                .filter_map(|w| self.merge_ids.get(&(w[0], w[1])).copied())
                .min();
            let Some(new_id) = best else { break };
            let (l, r) = self.merges[new_id as usize - 256];
            ids = merge_pair(&ids, l, r, new_id);
        }
        out.extend_from_slice(&ids);
    }

    pub fn decode_bytes(&self, ids: &[u32]) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        for &id in ids {
            match self.tokens.get(id as usize) {
                Some(t) => out.extend_from_slice(t),
                None if self.is_pst(id) => return Err(Error::PlaceholderToken(id)),
                None => return Err(Error::UnknownToken(id)),
            }
        }
        Ok(out)
    }

    pub fn decode(&self, ids: &[u32]) -> Result<String> {
        String::from_utf8(self.decode_bytes(ids)?)
            .map_err(|e| Error::invalid(format!("decoded bytes are not UTF-8: {e}")))
    }

    /// Serialises to the line-oriented `bpe-vocab v1` format.
    pub fn to_text(&self) -> String {
        let mut s = format!("{HEADER} {}\n", self.size());
        for &(l, r) in &self.merges {
            let _ = writeln!(
                s,
                "{}\t{}",
                escape(&self.tokens[l as usize]),
                escape(&self.tokens[r as usize])
            );
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::format("vocab", "empty file"))?;
        let size: usize = header
            .strip_prefix(HEADER)
            .and_then(|rest| rest.strip_prefix(' '))
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| Error::format("vocab", format!("bad header {header:?}")))?;
        let mut vocab = Self::byte_level();
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            let (l, r) = line
                .split_once('\t')
                .ok_or_else(|| Error::format("vocab", format!("line {lineno}: expected two fields")))?;
            let lookup = |field: &str| -> Result<u32> {
                let bytes = unescape(field)
                    .map_err(|m| Error::format("vocab", format!("line {lineno}: {m}")))?;
                vocab.by_bytes.get(&bytes).copied().ok_or_else(|| {
                    Error::format("vocab", format!("line {lineno}: unknown token {field:?}"))
                })
            };
            let (l, r) = (lookup(l)?, lookup(r)?);
            let mut joined = vocab.tokens[l as usize].clone();
            joined.extend_from_slice(&vocab.tokens[r as usize]);
            if vocab.by_bytes.contains_key(&joined) {
                return Err(Error::format(
                    "vocab",
                    format!("line {lineno}: merge produces a duplicate token"),
                ));
            }
            vocab.push_merge(l, r);
        }
        if vocab.size() != size {
            return Err(Error::format(
                "vocab",
                format!("header says {size} tokens, merges give {}", vocab.size()),
            ));
        }
        Ok(vocab)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Learns byte-level BPE merges from `corpus`.
///
/// Each round merges the most frequent adjacent pair, breaking ties by the
/// byte strings of (left, right) in lexicographic order. Pairs whose
/// concatenation is already a token are skipped so every id has a unique
/// byte string. Training stops at `target_vocab` tokens or once no pair
/// occurs at least twice.
pub fn train_bpe<S: AsRef<str>>(corpus: &[S], target_vocab: usize) -> Result<Vocab> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if target_vocab < 256 {
        return Err(Error::invalid(format!(
            "target vocabulary {target_vocab} is below the 256-byte base"
        )));
    }
    let mut words: HashMap<Vec<u8>, u64> = HashMap::new();
    for doc in corpus {
        for chunk in pretokenize(doc.as_ref().as_bytes()) {
            *words.entry(chunk.to_vec()).or_default() += 1;
        }
    }
    // Sorted for a deterministic iteration order.
    let mut words: Vec<(Vec<u32>, u64)> = {
        let mut w: Vec<_> = words.into_iter().collect();
        w.sort();
        w.into_iter()
            .map(|(bytes, n)| (bytes.into_iter().map(u32::from).collect(), n))
            .collect()
    };

    let mut vocab = Vocab::byte_level();
    while vocab.size() < target_vocab {
        let mut counts: HashMap<(u32, u32), u64> = HashMap::new();
        for (ids, n) in &words {
            for w in ids.windows(2) {
                *counts.entry((w[0], w[1])).or_default() += n;
            }
        }
        let best = counts
            .into_iter()
            .filter(|&(_, n)| n >= 2)
            .filter(|&((l, r), _)| {
                let mut joined = vocab.tokens[l as usize].clone();
                joined.extend_from_slice(&vocab.tokens[r as usize]);
                !vocab.by_bytes.contains_key(&joined)
            })
            .max_by(|&(pa, na), &(pb, nb)| {
                na.cmp(&nb).then_with(|| {
                    let key = |(l, r): (u32, u32)| (&vocab.tokens[l as usize], &vocab.tokens[r as usize]);
                    // Larger count wins; among equal counts the smaller key wins.
                    key(pb).cmp(&key(pa))
                })
            });
        let Some(((l, r), _)) = best else { break };
        let id = vocab.push_merge(l, r);
        for (ids, _) in &mut words {
            if ids.len() > 1 {
                *ids = merge_pair(ids, l, r, id);
            }
        }
    }
    Ok(vocab)
}

fn merge_pair(ids: &[u32], l: u32, r: u32, new_id: u32) -> Vec<u32> {
    let mut out = Vec::with_capacity(ids.len());
    let mut i = 0;
    while i < ids.len() {
        if i + 1 < ids.len() && ids[i] == l && ids[i + 1] == r {
            out.push(new_id);
            i += 2;
        } else {
            out.push(ids[i]);
            i += 1;
        }
    }
    out
}

/// Splits before every run of spaces, so `"a b"` becomes `["a", " b"]`.
/// Merges never cross these boundaries.
fn pretokenize(bytes: &[u8]) -> impl Iterator<Item = &[u8]> {
    let mut start = 0;
    std::iter::from_fn(move || {
        if start >= bytes.len() {
            return None;
        }
        let mut i = start + 1;
        while i < bytes.len() && !(bytes[i] == b' ' && bytes[i - 1] != b' ') {
            i += 1;
        }
        let chunk = &bytes[start..i];
        start = i;
        Some(chunk)
    })
}

fn escape(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len());
    for &b in bytes {
        if (0x21..=0x7e).contains(&b) && b != b'\\' {
            s.push(b as char);
        } else {
            let _ = write!(s, "\\x{b:02x}");
        }
    }
    s
}

fn unescape(s: &str) -> std::result::Result<Vec<u8>, String> {
    let raw = s.as_bytes();
    let mut out = Vec::with_capacity(raw.len());
    let mut i = 0;
    while i < raw.len() {
        if raw[i] == b'\\' {
            let hex = raw
                .get(i + 1..i + 4)
                .filter(|h| h[0] == b'x')
                .and_then(|h| std::str::from_utf8(&h[1..]).ok())
                .and_then(|h| u8::from_str_radix(h, 16).ok())
                .ok_or_else(|| format!("bad escape in {s:?}"))?;
            out.push(hex);
            i += 4;
        } else {
            out.push(raw[i]);
            i += 1;
        }
    }
    if out.is_empty() {
        return Err("empty token".into());
    }
    Ok(out)
}

/// Token ids plus the positions of placeholder tokens within them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    ids: Vec<u32>,
    pst_positions: Vec<usize>,
}

impl TokenSequence {
    pub fn new(ids: Vec<u32>, pst_positions: Vec<usize>) -> Result<Self> {
        if pst_positions.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("placeholder positions must be strictly increasing"));
        }
        if let Some(&p) = pst_positions.last() {
            if p >= ids.len() {
                return Err(Error::OutOfRange {
                    position: p,
                    len: ids.len(),
                });
            }
        }
        Ok(Self { ids, pst_positions })
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn pst_positions(&self) -> &[usize] {
        &self.pst_positions
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Index of the final token. `None` for an empty sequence.
    pub fn last_index(&self) -> Option<usize> {
        self.ids.len().checked_sub(1)
    }
}
