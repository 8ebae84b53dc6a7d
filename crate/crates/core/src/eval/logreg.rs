//! Multinomial logistic regression trained by full-batch gradient descent.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::Embedding;
use crate::error::{Error, Result};
use crate::eval::LabeledExample;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRegConfig {
    /// Weight decay on W (not on the bias): `l2 / 2 · ‖W‖²`.
    pub l2: f64,
    pub epochs: usize,
    /// Requested step size. The trainer caps it at `1 / L`, where `L`
    /// bounds the loss curvature, so every step decreases the loss.
    pub lr: f64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        Self { l2: 1e-4, epochs: 200, lr: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogReg {
    /// `n_classes × dim`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub n_classes: usize,
    pub dim: usize,
}

impl LogReg {
    pub fn zeros(n_classes: usize, dim: usize) -> Self {
        Self {
            weights: vec![0.0; n_classes * dim],
            bias: vec![0.0; n_classes],
            n_classes,
            dim,
        }
    }

    fn logits(&self, x: &[f64], out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate() {
            let w = &self.weights[c * self.dim..(c + 1) * self.dim];
            *o = self.bias[c] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        let mut z = vec![0.0; self.n_classes];
        self.logits(x, &mut z);
        let mut best = 0;
        for (c, &v) in z.iter().enumerate() {
            if v > z[best] {
                best = c;
            }
        }
        best
    }

    /// Mean cross-entropy plus the L2 term, with gradients for W and b.
    pub fn loss_and_grad(&self, xs: &[Vec<f64>], ys: &[usize], l2: f64) -> (f64, Vec<f64>, Vec<f64>) {
        let (k, d) = (self.n_classes, self.dim);
        let mut gw = vec![0.0; k * d];
        let mut gb = vec![0.0; k];
        let mut loss = 0.0;
        let mut z = vec![0.0; k];
        for (x, &y) in xs.iter().zip(ys) {
            self.logits(x, &mut z);
            let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for v in z.iter_mut() {
                *v = (*v - m).exp();
                s += *v;
            }
            loss += s.ln() + m - (z[y].ln() + m);
            for c in 0..k {
                let g = z[c] / s - if c == y { 1.0 } else { 0.0 };
                gb[c] += g;
                for (gwj, xj) in gw[c * d..(c + 1) * d].iter_mut().zip(x) {
                    *gwj += g * xj;
                }
            }
        }
        let n = xs.len() as f64;
        loss /= n;
        for (g, w) in gw.iter_mut().zip(&self.weights) {
            *g = *g / n + l2 * w;
        }
        for g in &mut gb {
            *g /= n;
        }
        loss += 0.5 * l2 * self.weights.iter().map(|w| w * w).sum::<f64>();
        (loss, gw, gb)
    }

    /// Accuracy × 100.
    pub fn accuracy(&self, xs: &[Vec<f64>], ys: &[usize]) -> Result<f64> {
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(Error::invalid("accuracy needs a non-empty, aligned test set"));
        }
        let hits = xs.iter().zip(ys).filter(|(x, &y)| self.predict(x) == y).count();
        Ok(100.0 * hits as f64 / xs.len() as f64)
    }
}

fn check_data(xs: &[Vec<f64>], ys: &[usize]) -> Result<usize> {
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(Error::invalid("training set must be non-empty with one label per row"));
    }
    let dim = xs[0].len();
    if dim == 0 || xs.iter().any(|x| x.len() != dim) {
        return Err(Error::invalid("feature rows must share a non-zero dimension"));
    }
    if xs.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("features must be finite"));
    }
    Ok(dim)
}

/// Trains from zero weights and returns the model with the loss recorded
/// before every epoch and after the last one.
pub fn train_logreg(xs: &[Vec<f64>], ys: &[usize], cfg: &LogRegConfig) -> Result<(LogReg, Vec<f64>)> {
    let dim = check_data(xs, ys)?;
    let n_classes = ys.iter().max().unwrap() + 1;
    let distinct = {
        let mut seen = vec![false; n_classes];
        ys.iter().for_each(|&y| seen[y] = true);
        seen.iter().filter(|&&s| s).count()
    };
    if distinct < 2 {
        return Err(Error::invalid("logistic regression needs at least two classes"));
    }
    if !(cfg.lr > 0.0) || !(cfg.l2 >= 0.0) {
        return Err(Error::invalid("lr must be positive and l2 non-negative"));
    }
    // The softmax cross-entropy Hessian is bounded by 1/2 · E[x̃ x̃ᵀ] ⊗ I with
    // x̃ = [x, 1], whose largest eigenvalue is at most max ‖x̃‖².
    let max_sq = xs
        .iter()
        .map(|x| 1.0 + x.iter().map(|v| v * v).sum::<f64>())
        .fold(0.0, f64::max);
    let lr = cfg.lr.min(1.0 / (0.5 * max_sq + cfg.l2));

    let mut model = LogReg::zeros(n_classes, dim);
    let mut history = Vec::with_capacity(cfg.epochs + 1);
    for _ in 0..cfg.epochs {
        let (loss, gw, gb) = model.loss_and_grad(xs, ys, cfg.l2);
        history.push(loss);
        for (w, g) in model.weights.iter_mut().zip(&gw) {
            *w -= lr * g;
        }
        for (b, g) in model.bias.iter_mut().zip(&gb) {
            *b -= lr * g;
        }
    }
    history.push(model.loss_and_grad(xs, ys, cfg.l2).0);
    Ok((model, history))
}

/// Per-feature z-scoring fitted on the training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(xs: &[Vec<f64>]) -> Result<Self> {
        let dim = xs.first().map(Vec::len).ok_or(Error::invalid("cannot fit on no rows"))?;
        let n = xs.len() as f64;
        let mut mean = vec![0.0; dim];
        for x in xs {
            for (m, v) in mean.iter_mut().zip(x) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for x in xs {
            for ((s, v), m) in var.iter_mut().zip(x).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 0.0 { sd } else { 1.0 }
            })
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferResult {
    /// Test accuracy × 100.
    pub accuracy: f64,
    pub train_accuracy: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub n_classes: usize,
    pub final_loss: f64,
}

/// Accuracy × 100 of a trained probe on a held-out set.
pub fn eval_transfer(model: &LogReg, xs: &[Vec<f64>], ys: &[usize]) -> Result<f64> {
    model.accuracy(xs, ys)
}

fn embed_all<F>(examples: &[LabeledExample], embed: &F) -> Result<(Vec<Vec<f64>>, Vec<usize>)>
where
    F: Fn(&str) -> Result<Embedding> + Sync,
{
    let xs: Vec<Result<Vec<f64>>> = examples
        .par_iter()
        .map(|e| Ok(embed(&e.text)?.vector.iter().map(|&v| v as f64).collect()))
        .collect();
    let xs = xs.into_iter().collect::<Result<Vec<_>>>()?;
    Ok((xs, examples.iter().map(|e| e.label).collect()))
}

/// Embeds both splits, standardizes on the training split, trains a probe
/// and scores it on the test split.
pub fn transfer_task<F>(
    train: &[LabeledExample],
    test: &[LabeledExample],
    embed: F,
    cfg: &LogRegConfig,
) -> Result<TransferResult>
where
    F: Fn(&str) -> Result<Embedding> + Sync,
{
    let (xtr, ytr) = embed_all(train, &embed)?;
    let (xte, yte) = embed_all(test, &embed)?;
    let st = Standardizer::fit(&xtr)?;
    let xtr: Vec<_> = xtr.iter().map(|x| st.apply(x)).collect();
    let xte: Vec<_> = xte.iter().map(|x| st.apply(x)).collect();
    let (model, history) = train_logreg(&xtr, &ytr, cfg)?;
    Ok(TransferResult {
        accuracy: eval_transfer(&model, &xte, &yte)?,
        train_accuracy: model.accuracy(&xtr, &ytr)?,
        n_train: xtr.len(),
        n_test: xte.len(),
        n_classes: model.n_classes,
        final_loss: *history.last().unwrap(),
    })
}
