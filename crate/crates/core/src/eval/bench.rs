//! Wall-clock comparison of extraction configurations.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::engine::{extract_embedding_cached, Extractor, TpConfig};
use crate::error::{Error, Result};
use crate::model::ModelWeights;
use crate::prompts::{PromptTemplate, RenderedPrompt};
use crate::tokenizer::Vocab;

pub const BENCH_WARMUP: usize = 2;
pub const BENCH_REPS: usize = 5;
pub const BENCH_MIN_SENTENCES: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchArm {
    pub name: String,
    pub template: PromptTemplate,
    pub tp: TpConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchArmResult {
    pub name: String,
    /// Median seconds for one pass over all sentences.
    pub median_secs: f64,
    pub rep_secs: Vec<f64>,
    /// `median_secs` divided by the first arm's.
    pub ratio: f64,
    /// Rendered tokens over all sentences.
    pub tokens: usize,
    /// Tokens actually run through the model, after the cached prefix.
    pub computed_tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub sentences: usize,
    pub warmup: usize,
    pub reps: usize,
    pub arms: Vec<BenchArmResult>,
}

fn median(xs: &[f64]) -> f64 {
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 { s[n / 2] } else { 0.5 * (s[n / 2 - 1] + s[n / 2]) }
}

/// Times every arm over `sentences`, one sentence at a time, with the
/// static prompt prefix served from a KV cache.
///
/// Prompts are rendered up front so only the forward pass is timed.
pub fn bench_time(
    w: &ModelWeights,
    vocab: &Vocab,
    sentences: &[String],
    arms: &[BenchArm],
    reps: usize,
) -> Result<BenchResult> {
    if sentences.len() < BENCH_MIN_SENTENCES {
        return Err(Error::invalid(format!(
            "timing needs at least {BENCH_MIN_SENTENCES} sentences, got {}",
            sentences.len()
        )));
    }
    if arms.is_empty() || reps < BENCH_REPS {
        return Err(Error::invalid(format!(
            "timing needs at least one arm and {BENCH_REPS} repetitions"
        )));
    }
    let prepared: Vec<(Extractor, Vec<RenderedPrompt>)> = arms
        .iter()
        .map(|a| {
            let ex = Extractor::new(w, vocab, a.template.clone(), a.tp.clone(), true)?;
            let rendered = sentences.iter().map(|s| ex.render(s)).collect::<Result<Vec<_>>>()?;
            Ok((ex, rendered))
        })
        .collect::<Result<_>>()?;

    // Arms alternate sentence by sentence, with the leading arm rotating,
    // so drifts in machine load hit every arm alike.
    let n = arms.len();
    let mut times = vec![Vec::with_capacity(reps); n];
    for rep in 0..BENCH_WARMUP + reps {
        let mut pass = vec![0.0f64; n];
        for (i, _) in sentences.iter().enumerate() {
            for k in 0..n {
                let a = (rep + i + k) % n;
                let (ex, rendered) = &prepared[a];
                let t = Instant::now();
                let e = extract_embedding_cached(w, &rendered[i], ex.tp(), ex.cache())?;
                pass[a] += t.elapsed().as_secs_f64();
                std::hint::black_box(e);
            }
        }
        if rep >= BENCH_WARMUP {
            for (t, p) in times.iter_mut().zip(pass) {
                t.push(p);
            }
        }
    }

    let base = median(&times[0]);
    let arms = arms
        .iter()
        .zip(&prepared)
        .zip(times)
        .map(|((arm, (ex, rendered)), rep_secs)| {
            let cached = ex.cache().map_or(0, |c| c.prefix_len());
            let tokens: usize = rendered.iter().map(RenderedPrompt::len).sum();
            let m = median(&rep_secs);
            BenchArmResult {
                name: arm.name.clone(),
                median_secs: m,
                rep_secs,
                ratio: m / base,
                tokens,
                computed_tokens: tokens - cached * rendered.len(),
            }
        })
        .collect();
    Ok(BenchResult {
        sentences: sentences.len(),
        warmup: BENCH_WARMUP,
        reps,
        arms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
    }
}
