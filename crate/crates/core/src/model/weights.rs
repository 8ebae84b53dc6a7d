//! Parameter tensors, seeded initialisation and the `TPWT` container.
//!
//! Container layout (little-endian):
//!
//! ```text
//! b"TPWT" | u32 version = 1 | u32 n | n bytes JSON ModelConfig
//! f32 tensors: embedding,
//!              per layer [wq, wk, wv, wo, gate, up, down, attn_norm, ffn_norm],
//!              final_norm
//! ```
//!
//! Projection matrices are stored `[in × out]`, so a row vector `x`
//! maps to `x · W`.

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::ModelConfig;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Vector};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"TPWT";
pub const WEIGHTS_VERSION: u32 = 1;
pub const INIT_STD: f32 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
    pub wo: Matrix,
    pub gate: Matrix,
    pub up: Matrix,
    pub down: Matrix,
    pub attn_norm: Vector,
    pub ffn_norm: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub config: ModelConfig,
    /// `[(vocab_size + n_reserved_pst) × d_model]`; placeholder rows last.
    pub embedding: Matrix,
    pub layers: Vec<LayerWeights>,
    pub final_norm: Vector,
}

impl ModelWeights {
    /// Seeded Gaussian initialisation (std 0.02) for every matrix,
    /// including the reserved placeholder rows. RMS gains start at 1.
    pub fn init(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let normal = Normal::new(0.0f32, INIT_STD).expect("valid std");
        let mut gaussian = |rows: usize, cols: usize| {
            let data = (0..rows * cols).map(|_| normal.sample(&mut rng)).collect();
            Matrix::from_vec(rows, cols, data).expect("sized")
        };
        let (d, ff) = (config.d_model, config.d_ff);
        let embedding = gaussian(config.embedding_rows(), d);
        let layers = (0..config.n_layers)
            .map(|_| LayerWeights {
                wq: gaussian(d, d),
                wk: gaussian(d, d),
                wv: gaussian(d, d),
                wo: gaussian(d, d),
                gate: gaussian(d, ff),
                up: gaussian(d, ff),
                down: gaussian(ff, d),
                attn_norm: vec![1.0; d],
                ffn_norm: vec![1.0; d],
            })
            .collect();
        Ok(Self {
            config: config.clone(),
            embedding,
            layers,
            final_norm: vec![1.0; d],
        })
    }

    pub fn n_layers(&self) -> usize {
        self.config.n_layers
    }

    pub fn d_model(&self) -> usize {
        self.config.d_model
    }

    /// Embedding row of placeholder slot `slot`.
    pub fn pst_row(&self, slot: usize) -> Option<&[f32]> {
        (slot < self.config.n_reserved_pst)
            .then(|| self.embedding.row(self.config.vocab_size + slot))
    }

    fn tensors(&self) -> impl Iterator<Item = &[f32]> {
        std::iter::once(self.embedding.data())
            .chain(self.layers.iter().flat_map(|l| {
                [
                    l.wq.data(),
                    l.wk.data(),
                    l.wv.data(),
                    l.wo.data(),
                    l.gate.data(),
                    l.up.data(),
                    l.down.data(),
                    l.attn_norm.as_slice(),
                    l.ffn_norm.as_slice(),
                ]
            }))
            .chain(std::iter::once(self.final_norm.as_slice()))
    }

    fn param_count(config: &ModelConfig) -> usize {
        let (d, ff) = (config.d_model, config.d_ff);
        config.embedding_rows() * d + config.n_layers * (4 * d * d + 3 * d * ff + 2 * d) + d
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.config)?;
        let mut out = Vec::with_capacity(12 + header.len() + 4 * Self::param_count(&self.config));
        out.extend_from_slice(WEIGHTS_MAGIC);
        out.extend_from_slice(&WEIGHTS_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for t in self.tensors() {
            for x in t {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let err = |m: String| Error::format("weights", m);
        if bytes.len() < 12 || &bytes[..4] != WEIGHTS_MAGIC {
            return Err(err("missing TPWT magic".into()));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != WEIGHTS_VERSION {
            return Err(err(format!("unsupported version {version}")));
        }
        let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let header = bytes
            .get(12..12 + header_len)
            .ok_or_else(|| err("truncated config header".into()))?;
        let config: ModelConfig = serde_json::from_slice(header)?;
        config.validate()?;
        let body = &bytes[12 + header_len..];
        let expected = 4 * Self::param_count(&config);
        if body.len() != expected {
            return Err(err(format!(
                "expected {expected} tensor bytes, found {}",
                body.len()
            )));
        }
        let mut floats = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()));
        let mut take = |n: usize| -> Vec<f32> { floats.by_ref().take(n).collect() };
        let (d, ff) = (config.d_model, config.d_ff);
        let embedding = Matrix::from_vec(config.embedding_rows(), d, take(config.embedding_rows() * d))?;
        let mut layers = Vec::with_capacity(config.n_layers);
        for _ in 0..config.n_layers {
            layers.push(LayerWeights {
                wq: Matrix::from_vec(d, d, take(d * d))?,
                wk: Matrix::from_vec(d, d, take(d * d))?,
                wv: Matrix::from_vec(d, d, take(d * d))?,
                wo: Matrix::from_vec(d, d, take(d * d))?,
                gate: Matrix::from_vec(d, ff, take(d * ff))?,
                up: Matrix::from_vec(d, ff, take(d * ff))?,
                down: Matrix::from_vec(ff, d, take(ff * d))?,
                attn_norm: take(d),
                ffn_norm: take(d),
            });
        }
        let final_norm = take(d);
        let weights = Self {
            config,
            embedding,
            layers,
            final_norm,
        };
        if !weights.tensors().all(|t| t.iter().all(|x| x.is_finite())) {
            return Err(err("non-finite parameter".into()));
        }
        Ok(weights)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
