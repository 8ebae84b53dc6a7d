//! Evaluation results recomputed from dumped embeddings and states.

mod common;

use common::*;
use tp_core::engine::{run_to_exit, Extractor};
use tp_core::eval::io::EmbeddingDump;
use tp_core::eval::{dependency_analysis, eval_sts, DEPENDENCY_METRIC};
use tp_core::prompts::{builtin, render};
use tp_core::{synth, TpConfig};

fn cos(a: &[f32], b: &[f32]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum();
    let na: f64 = a.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    d / (na * nb)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|a| {
            let less = v.iter().filter(|b| *b < a).count() as f64;
            let eq = v.iter().filter(|b| *b == a).count() as f64;
            less + (eq + 1.0) / 2.0
        })
        .collect()
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let c: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    c / (vx * vy).sqrt()
}

#[test]
fn sts_score_matches_recomputation_from_dump() {
    let w = small_model(11);
    let v = small_vocab();
    let ex = Extractor::new(&w, v, builtin("prompteol").unwrap(), TpConfig::defaults_for(4), true).unwrap();
    let pairs = synth::sts_pairs(12, 50);
    let score = eval_sts(&pairs, |s| ex.embed(s)).unwrap();

    let mut vectors = Vec::new();
    for p in &pairs {
        vectors.push(ex.embed(&p.sentence_a).unwrap().vector);
        vectors.push(ex.embed(&p.sentence_b).unwrap().vector);
    }
    let dump = EmbeddingDump { dim: 32, config: serde_json::Value::Null, vectors };
    let back = EmbeddingDump::from_bytes(&dump.to_bytes().unwrap()).unwrap();
    let pred: Vec<f64> = back.vectors.chunks(2).map(|c| cos(&c[0], &c[1])).collect();
    let gold: Vec<f64> = pairs.iter().map(|p| p.gold).collect();
    let want = 100.0 * pearson(&ranks(&pred), &ranks(&gold));
    assert!((score - want).abs() < 1e-9, "{score} vs {want}");
}

#[test]
fn sts_score_ignores_uniform_rescaling() {
    let w = small_model(13);
    let v = small_vocab();
    let ex = Extractor::new(&w, v, builtin("prompteol").unwrap(), TpConfig::disabled(4), true).unwrap();
    let pairs = synth::sts_pairs(14, 30);
    let base = eval_sts(&pairs, |s| ex.embed(s)).unwrap();
    let scaled = eval_sts(&pairs, |s| {
        let mut e = ex.embed(s)?;
        e.vector.iter_mut().for_each(|x| *x *= 4.0);
        Ok(e)
    })
    .unwrap();
    assert_eq!(base.to_bits(), scaled.to_bits());
}

fn quartile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, frac) = (pos.floor() as usize, pos.fract());
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac
    }
}

#[test]
fn dependency_summary_matches_recomputation_from_states() {
    let w = small_model(15);
    let v = small_vocab();
    let t = builtin("prompteol").unwrap();
    let tp = TpConfig { end_layer: 3, exit_layer: 3, ..TpConfig::defaults_for(4) };
    let sentences = synth::sentences(16, 20);
    let report = dependency_analysis(&w, v, &t, &sentences, &tp).unwrap();
    assert_eq!(report.metric, DEPENDENCY_METRIC);

    let mut scores = Vec::new();
    for s in &sentences {
        let r = render(&t, s, 1, v).unwrap();
        let h = run_to_exit(&w, &r, &tp, None, None).unwrap();
        let span = r.text_span.clone();
        let rows: Vec<Vec<f32>> = span.clone().map(|p| h.states.row(p).to_vec()).collect();
        let pivot = rows.last().unwrap();
        let others = &rows[..rows.len() - 1];
        scores.push(others.iter().map(|o| cos(pivot, o)).sum::<f64>() / others.len() as f64);
    }
    for (a, b) in scores.iter().zip(&report.evaluated_scores) {
        assert!((a - b).abs() < 1e-12);
    }
    let mut sorted = scores.clone();
    sorted.sort_by(f64::total_cmp);
    let q = &report.evaluated.quartiles;
    assert!((q.min - sorted[0]).abs() < 1e-12);
    assert!((q.q1 - quartile(&sorted, 0.25)).abs() < 1e-12);
    assert!((q.median - quartile(&sorted, 0.5)).abs() < 1e-12);
    assert!((q.q3 - quartile(&sorted, 0.75)).abs() < 1e-12);
    assert!((q.max - sorted[19]).abs() < 1e-12);
    let mean = scores.iter().sum::<f64>() / 20.0;
    assert!((report.evaluated.mean - mean).abs() < 1e-12);
    assert_eq!(report.vanilla_scores.len(), 20);
}
