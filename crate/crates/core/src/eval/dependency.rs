//! How strongly the final sentence token is tied to the rest of the
//! sentence in exit-layer hidden states.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::engine::{run_to_exit, TpConfig};
use crate::error::{Error, Result};
use crate::eval::{cosine, mean, FiveNumberSummary};
use crate::model::{HiddenStates, ModelWeights};
use crate::prompts::{render, PromptTemplate, RenderedPrompt};
use crate::tokenizer::Vocab;

/// Definition string echoed into every report.
pub const DEPENDENCY_METRIC: &str = "mean cosine similarity between the last sentence token \
     (pivot) and every other sentence token, using raw exit-layer hidden states";

/// Mean cosine between the pivot (last span row) and the other span rows.
pub fn span_score(h: &HiddenStates, span: Range<usize>) -> Result<f64> {
    if span.len() < 3 {
        return Err(Error::invalid(format!(
            "dependency analysis needs at least 3 sentence tokens, got {}",
            span.len()
        )));
    }
    let row = |p: usize| h.row_at(p).ok_or(Error::OutOfRange { position: p, len: h.seq_len() });
    let pivot = row(span.end - 1)?;
    let mut sum = 0.0;
    for p in span.start..span.end - 1 {
        sum += cosine(pivot, row(p)?)?;
    }
    Ok(sum / (span.len() - 1) as f64)
}

pub fn dependency_score(w: &ModelWeights, rendered: &RenderedPrompt, tp: &TpConfig) -> Result<f64> {
    let h = run_to_exit(w, rendered, tp, None, None)?;
    span_score(&h, rendered.text_span.clone())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependencySummary {
    #[serde(flatten)]
    pub quartiles: FiveNumberSummary,
    pub mean: f64,
}

impl DependencySummary {
    fn of(scores: &[f64]) -> Result<Self> {
        Ok(Self {
            quartiles: FiveNumberSummary::of(scores)?,
            mean: mean(scores.iter().copied()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependencyReport {
    pub metric: String,
    pub exit_layer: usize,
    pub evaluated: DependencySummary,
    pub vanilla: DependencySummary,
    pub evaluated_scores: Vec<f64>,
    pub vanilla_scores: Vec<f64>,
}

/// Scores every sentence under `tp` and under plain causal attention at
/// the same exit layer, rendering the vanilla prompt without placeholders.
pub fn dependency_analysis(
    w: &ModelWeights,
    vocab: &Vocab,
    template: &PromptTemplate,
    sentences: &[String],
    tp: &TpConfig,
) -> Result<DependencyReport> {
    if sentences.is_empty() {
        return Err(Error::invalid("dependency analysis needs at least one sentence"));
    }
    let vanilla_tp = TpConfig::disabled(tp.exit_layer);
    let mut evaluated = Vec::with_capacity(sentences.len());
    let mut vanilla = Vec::with_capacity(sentences.len());
    for s in sentences {
        let r = render(template, s, tp.render_pst(), vocab)?;
        evaluated.push(dependency_score(w, &r, tp)?);
        let r = render(template, s, 0, vocab)?;
        vanilla.push(dependency_score(w, &r, &vanilla_tp)?);
    }
    Ok(DependencyReport {
        metric: DEPENDENCY_METRIC.to_string(),
        exit_layer: tp.exit_layer,
        evaluated: DependencySummary::of(&evaluated)?,
        vanilla: DependencySummary::of(&vanilla)?,
        evaluated_scores: evaluated,
        vanilla_scores: vanilla,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Matrix;

    fn hs(rows: Vec<Vec<f32>>) -> HiddenStates {
        HiddenStates { layer: 2, offset: 0, states: Matrix::from_rows(&rows).unwrap() }
    }

    #[test]
    fn identical_rows_score_one() {
        let h = hs(vec![vec![0.3, -1.0]; 5]);
        assert!((span_score(&h, 1..5).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pivot_is_excluded_from_the_mean() {
        // Pivot (1, 0); others (0, 1) and (1, 1). Including the pivot would
        // add a third term of 1.
        let h = hs(vec![vec![0.0, 1.0], vec![1.0, 1.0], vec![1.0, 0.0]]);
        let expect = (0.0 + 1.0 / 2f64.sqrt()) / 2.0;
        assert!((span_score(&h, 0..3).unwrap() - expect).abs() < 1e-7);
    }

    #[test]
    fn short_spans_are_rejected() {
        let h = hs(vec![vec![1.0, 0.0]; 4]);
        assert!(span_score(&h, 1..3).is_err());
    }

    #[test]
    fn offset_states_are_addressed_by_absolute_position() {
        let mut h = hs(vec![vec![0.0, 1.0], vec![1.0, 1.0], vec![1.0, 0.0]]);
        h.offset = 10;
        assert!(span_score(&h, 10..13).is_ok());
        assert!(span_score(&h, 9..12).is_err());
    }
}
