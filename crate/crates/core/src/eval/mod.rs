//! Evaluation harness: STS scoring, transfer probes, dependency analysis,
//! layer sweeps and timing.

mod bench;
mod dependency;
pub mod io;
mod logreg;
mod metrics;
mod sweep;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::Embedding;
use crate::error::{Error, Result};

pub use bench::{bench_time, BenchArm, BenchArmResult, BenchResult, BENCH_MIN_SENTENCES, BENCH_REPS, BENCH_WARMUP};
pub use dependency::{
    dependency_analysis, dependency_score, span_score, DependencyReport, DependencySummary,
    DEPENDENCY_METRIC,
};
pub use logreg::{
    eval_transfer, train_logreg, transfer_task, LogReg, LogRegConfig, Standardizer, TransferResult,
};
pub use metrics::{average_ranks, cosine, quantile, spearman, FiveNumberSummary};
pub use sweep::{sweep, SweepAxis, SweepCurve, SweepPoint};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StsPair {
    pub sentence_a: String,
    pub sentence_b: String,
    /// Gold similarity in `[0, 5]`.
    pub gold: f64,
}

impl StsPair {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=5.0).contains(&self.gold) {
            return Err(Error::invalid(format!("gold score {} outside [0, 5]", self.gold)));
        }
        if self.sentence_a.is_empty() || self.sentence_b.is_empty() {
            return Err(Error::invalid("STS sentences must be non-empty"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StsDataset {
    pub name: String,
    pub pairs: Vec<StsPair>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub text: String,
    pub label: usize,
}

/// Predicted cosine similarities and gold scores, in dataset order.
///
/// Embeddings are computed on the rayon pool; results are collected in
/// input order, so the output does not depend on the thread count.
pub fn sts_predictions<F>(pairs: &[StsPair], embed: F) -> Result<(Vec<f64>, Vec<f64>)>
where
    F: Fn(&str) -> Result<Embedding> + Sync,
{
    for p in pairs {
        p.validate()?;
    }
    let sims: Vec<Result<f64>> = pairs
        .par_iter()
        .map(|p| {
            let a = embed(&p.sentence_a)?;
            let b = embed(&p.sentence_b)?;
            cosine(&a.vector, &b.vector)
        })
        .collect();
    let pred = sims.into_iter().collect::<Result<Vec<_>>>()?;
    let gold = pairs.iter().map(|p| p.gold).collect();
    Ok((pred, gold))
}

/// Spearman correlation × 100 between cosine predictions and gold scores.
pub fn eval_sts<F>(pairs: &[StsPair], embed: F) -> Result<f64>
where
    F: Fn(&str) -> Result<Embedding> + Sync,
{
    if pairs.len() < 2 {
        return Err(Error::invalid("an STS dataset needs at least two pairs"));
    }
    let (pred, gold) = sts_predictions(pairs, embed)?;
    Ok(spearman(&pred, &gold)? * 100.0)
}

/// Per-dataset scores and their mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Spearman × 100 per dataset, keyed by name.
    pub scores: BTreeMap<String, f64>,
    pub average: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vanilla: Option<BTreeMap<String, f64>>,
    /// `scores - vanilla` per dataset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<BTreeMap<String, f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepCurve>,
    pub config: serde_json::Value,
}

pub fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for v in values {
        s += v;
        n += 1;
    }
    s / n as f64
}

impl EvalReport {
    pub fn new(scores: BTreeMap<String, f64>, config: serde_json::Value) -> Self {
        let average = mean(scores.values().copied());
        Self {
            scores,
            average,
            vanilla: None,
            delta: None,
            timing_ratio: None,
            sweep: None,
            config,
        }
    }

    /// Attaches baseline scores and the per-dataset difference.
    pub fn with_baseline(mut self, vanilla: BTreeMap<String, f64>) -> Self {
        let delta = self
            .scores
            .iter()
            .filter_map(|(k, v)| vanilla.get(k).map(|b| (k.clone(), v - b)))
            .collect();
        self.vanilla = Some(vanilla);
        self.delta = Some(delta);
        self
    }

    /// Evaluates every dataset with `embed`.
    pub fn evaluate<F>(datasets: &[StsDataset], embed: F, config: serde_json::Value) -> Result<Self>
    where
        F: Fn(&str) -> Result<Embedding> + Sync,
    {
        Ok(Self::new(score_datasets(datasets, &embed)?, config))
    }
}

pub fn score_datasets<F>(datasets: &[StsDataset], embed: &F) -> Result<BTreeMap<String, f64>>
where
    F: Fn(&str) -> Result<Embedding> + Sync,
{
    if datasets.is_empty() {
        return Err(Error::invalid("no STS datasets given"));
    }
    let mut out = BTreeMap::new();
    for d in datasets {
        if out.insert(d.name.clone(), eval_sts(&d.pairs, embed)?).is_some() {
            return Err(Error::invalid(format!("duplicate dataset name {:?}", d.name)));
        }
    }
    Ok(out)
}
