//! Layer-scope and exit-layer sweeps.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::engine::{Extractor, TpConfig};
use crate::error::{Error, Result};
use crate::eval::{mean, score_datasets, StsDataset};
use crate::model::ModelWeights;
use crate::prompts::PromptTemplate;
use crate::tokenizer::Vocab;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    EndLayer,
    StartLayer,
    ExitLayer,
}

impl SweepAxis {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "end_layer" | "end-layer" => Ok(Self::EndLayer),
            "start_layer" | "start-layer" => Ok(Self::StartLayer),
            "exit_layer" | "exit-layer" => Ok(Self::ExitLayer),
            _ => Err(Error::invalid(format!(
                "unknown sweep axis {s:?}; expected end_layer, start_layer or exit_layer"
            ))),
        }
    }

    fn apply(self, base: &TpConfig, value: usize) -> TpConfig {
        let mut tp = base.clone();
        match self {
            Self::EndLayer => tp.end_layer = value,
            Self::StartLayer => tp.start_layer = value,
            Self::ExitLayer => tp.exit_layer = value,
        }
        tp
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: usize,
    pub scores: BTreeMap<String, f64>,
    pub average: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    pub axis: SweepAxis,
    pub template: String,
    pub base: TpConfig,
    pub points: Vec<SweepPoint>,
}

/// Average STS score at every `value` of `axis`, other settings taken
/// from `base`. Every point's config is validated before any work starts.
pub fn sweep(
    w: &ModelWeights,
    vocab: &Vocab,
    template: &PromptTemplate,
    datasets: &[StsDataset],
    base: &TpConfig,
    axis: SweepAxis,
    values: &[usize],
) -> Result<SweepCurve> {
    if values.is_empty() {
        return Err(Error::invalid("sweep range is empty"));
    }
    let configs = values
        .iter()
        .map(|&v| {
            let tp = axis.apply(base, v);
            tp.validate(&w.config)
                .map_err(|e| Error::invalid(format!("sweep value {v}: {e}")))?;
            Ok(tp)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut points = Vec::with_capacity(values.len());
    for (&value, tp) in values.iter().zip(configs) {
        let ex = Extractor::new(w, vocab, template.clone(), tp, true)?;
        let scores = score_datasets(datasets, &|s: &str| ex.embed(s))?;
        points.push(SweepPoint {
            value,
            average: mean(scores.values().copied()),
            scores,
        });
    }
    Ok(SweepCurve {
        axis,
        template: template.name.clone(),
        base: base.clone(),
        points,
    })
}
