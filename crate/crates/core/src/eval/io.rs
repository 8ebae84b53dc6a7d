//! Dataset readers and the embedding dump format.
//!
//! Dump layout (little-endian):
//!
//! ```text
//! "TPEB" | u32 version | u32 header_len | header JSON | count × dim f32
//! ```
//!
//! The header is `{"count": .., "dim": .., "config": ..}`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{LabeledExample, StsDataset, StsPair};

pub const DUMP_MAGIC: &[u8; 4] = b"TPEB";
pub const DUMP_VERSION: u32 = 1;

fn parse_err(path: &str, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_string(),
        line,
        msg: msg.into(),
    }
}

fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
}

/// Parses `score<TAB>sentence_a<TAB>sentence_b` lines. `source` names the
/// input in error messages.
pub fn parse_sts(text: &str, source: &str) -> Result<Vec<StsPair>> {
    let mut pairs = Vec::new();
    for (n, line) in lines(text) {
        if line.is_empty() {
            continue;
        }
        let mut f = line.splitn(3, '\t');
        let (Some(score), Some(a), Some(b)) = (f.next(), f.next(), f.next()) else {
            return Err(parse_err(source, n, "expected score<TAB>sentence_a<TAB>sentence_b"));
        };
        let gold: f64 = score
            .trim()
            .parse()
            .map_err(|_| parse_err(source, n, format!("bad score {score:?}")))?;
        let pair = StsPair {
            sentence_a: a.to_string(),
            sentence_b: b.to_string(),
            gold,
        };
        pair.validate().map_err(|e| parse_err(source, n, e.to_string()))?;
        pairs.push(pair);
    }
    Ok(pairs)
}

/// Reads one STS file; the dataset is named after the file stem.
pub fn read_sts(path: &Path) -> Result<StsDataset> {
    let text = fs::read_to_string(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(StsDataset {
        name,
        pairs: parse_sts(&text, &path.display().to_string())?,
    })
}

/// Reads every `*.tsv` file in `dir`, sorted by file name.
pub fn read_sts_dir(dir: &Path) -> Result<Vec<StsDataset>> {
    let mut paths: Vec<_> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "tsv"));
    paths.sort();
    if paths.is_empty() {
        return Err(Error::invalid(format!("no .tsv files in {}", dir.display())));
    }
    paths.iter().map(|p| read_sts(p)).collect()
}

/// Parses `label<TAB>text` lines with integer labels.
pub fn parse_classification(text: &str, source: &str) -> Result<Vec<LabeledExample>> {
    let mut out = Vec::new();
    for (n, line) in lines(text) {
        if line.is_empty() {
            continue;
        }
        let Some((label, body)) = line.split_once('\t') else {
            return Err(parse_err(source, n, "expected label<TAB>text"));
        };
        let label = label
            .trim()
            .parse()
            .map_err(|_| parse_err(source, n, format!("bad label {label:?}")))?;
        if body.is_empty() {
            return Err(parse_err(source, n, "empty text"));
        }
        out.push(LabeledExample {
            text: body.to_string(),
            label,
        });
    }
    Ok(out)
}

pub fn read_classification(path: &Path) -> Result<Vec<LabeledExample>> {
    parse_classification(&fs::read_to_string(path)?, &path.display().to_string())
}

/// One sentence per line; blank lines are errors because every line must
/// map to one embedding.
pub fn parse_sentences(text: &str, source: &str) -> Result<Vec<String>> {
    lines(text)
        .map(|(n, l)| {
            if l.is_empty() {
                Err(parse_err(source, n, "empty sentence"))
            } else {
                Ok(l.to_string())
            }
        })
        .collect()
}

pub fn read_sentences(path: &Path) -> Result<Vec<String>> {
    parse_sentences(&fs::read_to_string(path)?, &path.display().to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DumpHeader {
    count: usize,
    dim: usize,
    config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingDump {
    pub dim: usize,
    pub config: serde_json::Value,
    pub vectors: Vec<Vec<f32>>,
}

impl EmbeddingDump {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        if self.vectors.iter().any(|v| v.len() != self.dim) {
            return Err(Error::format("TPEB", "vector length differs from dim"));
        }
        let header = serde_json::to_vec(&DumpHeader {
            count: self.vectors.len(),
            dim: self.dim,
            config: self.config.clone(),
        })?;
        let mut out = Vec::with_capacity(12 + header.len() + 4 * self.dim * self.vectors.len());
        out.extend_from_slice(DUMP_MAGIC);
        out.extend_from_slice(&DUMP_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for v in self.vectors.iter().flatten() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::format("TPEB", m);
        if bytes.len() < 12 || &bytes[..4] != DUMP_MAGIC {
            return Err(bad("missing TPEB magic"));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        if word(4) != DUMP_VERSION {
            return Err(bad(&format!("unsupported version {}", word(4))));
        }
        let hlen = word(8) as usize;
        let body = 12usize.checked_add(hlen).filter(|&e| e <= bytes.len()).ok_or(bad("truncated header"))?;
        let h: DumpHeader = serde_json::from_slice(&bytes[12..body])?;
        let expect = h
            .count
            .checked_mul(h.dim)
            .and_then(|n| n.checked_mul(4))
            .ok_or(bad("count × dim overflows"))?;
        if bytes.len() - body != expect {
            return Err(bad(&format!(
                "expected {expect} payload bytes, found {}",
                bytes.len() - body
            )));
        }
        let floats: Vec<f32> = bytes[body..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let vectors = if h.dim == 0 {
            vec![Vec::new(); h.count]
        } else {
            floats.chunks(h.dim).map(<[f32]>::to_vec).collect()
        };
        Ok(Self {
            dim: h.dim,
            config: h.config,
            vectors,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
