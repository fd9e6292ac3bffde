//! Accuracy, F1 (class 1 positive) and AUROC at logit threshold 0.

use serde::Serialize;

use super::{predict, Classifier};
use crate::volume::{Label, LabeledSample};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub n: usize,
    pub accuracy: f64,
    pub f1: f64,
    /// `None` when only one class is present.
    pub auroc: Option<f64>,
}

pub fn evaluate(model: &Classifier, samples: &[LabeledSample]) -> Result<Metrics> {
    let logits = samples
        .iter()
        .map(|s| model.forward(&s.volume))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<Label> = samples.iter().map(|s| s.label).collect();
    evaluate_logits(&logits, &labels)
}

pub fn evaluate_logits(logits: &[f64], labels: &[Label]) -> Result<Metrics> {
    if logits.is_empty() || logits.len() != labels.len() {
        return Err(Error::invalid(format!(
            "need equal, nonzero numbers of logits and labels (got {} and {})",
            logits.len(),
            labels.len()
        )));
    }
    let (mut tp, mut fp, mut fn_, mut correct) = (0usize, 0usize, 0usize, 0usize);
    for (&l, &y) in logits.iter().zip(labels) {
        let p = predict(l);
        correct += usize::from(p == y);
        match (p, y) {
            (Label::Female, Label::Female) => tp += 1,
            (Label::Female, Label::Male) => fp += 1,
            (Label::Male, Label::Female) => fn_ += 1,
            _ => {}
        }
    }
    let f1 = if tp == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    };
    Ok(Metrics {
        n: logits.len(),
        accuracy: correct as f64 / logits.len() as f64,
        f1,
        auroc: auroc(logits, labels),
    })
}

/// Mann-Whitney AUROC; tied scores count one half.
pub fn auroc(scores: &[f64], labels: &[Label]) -> Option<f64> {
    let pos = labels.iter().filter(|&&y| y == Label::Female).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of (average) ranks of the positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += avg_rank
            * order[i..=j]
                .iter()
                .filter(|&&k| labels[k] == Label::Female)
                .count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Some(u / (pos * neg) as f64)
}
