//! Class-weighted binary cross-entropy on logits.

use crate::volume::Label;
use crate::{Error, Result};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Mean of `w_y * BCE(logit, y)` over the batch, computed from the logits, and
/// the gradient with respect to each logit. `class_weights` is `[w_male, w_female]`.
pub fn bce_loss(logits: &[f64], labels: &[Label], class_weights: [f64; 2]) -> Result<(f64, Vec<f64>)> {
    if logits.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} logits but {} labels",
            logits.len(),
            labels.len()
        )));
    }
    if logits.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let inv_b = 1.0 / logits.len() as f64;
    let mut total = 0.0;
    let grad = logits
        .iter()
        .zip(labels)
        .map(|(&l, &y)| {
            let w = class_weights[y as usize];
            let y = y.as_f64();
            // -[y ln s(l) + (1-y) ln(1-s(l))] = softplus(l) - y l
            total += w * (softplus(l) - y * l);
            w * (sigmoid(l) - y) * inv_b
        })
        .collect();
    Ok((total * inv_b, grad))
}
