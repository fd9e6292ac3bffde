//! Log-sum-exp smooth extrema and the smooth worst-case margin loss.

use crate::volume::Label;
use crate::{Error, Result};

fn check(logits: &[f64], tau: f64) -> Result<()> {
    if logits.is_empty() {
        return Err(Error::invalid("no logits"));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::invalid(format!("temperature must be > 0, got {tau}")));
    }
    Ok(())
}

/// `tau * ln sum exp(l / tau)` and its softmax weights, max-shifted.
fn lse(logits: &[f64], tau: f64) -> (f64, Vec<f64>) {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&l| ((l - m) / tau).exp()).collect();
    let s: f64 = e.iter().sum();
    (m + tau * s.ln(), e.into_iter().map(|x| x / s).collect())
}

/// `-tau * ln sum exp(-l / tau)`: at most `min(l)`, at least `min(l) - tau ln n`.
pub fn smooth_min(logits: &[f64], tau: f64) -> Result<f64> {
    check(logits, tau)?;
    let neg: Vec<f64> = logits.iter().map(|l| -l).collect();
    Ok(-lse(&neg, tau).0)
}

/// `tau * ln sum exp(l / tau)`: at least `max(l)`, at most `max(l) + tau ln n`.
pub fn smooth_max(logits: &[f64], tau: f64) -> Result<f64> {
    check(logits, tau)?;
    Ok(lse(logits, tau).0)
}

/// Hinge on the smooth worst-case logit, pushing every logit past the margin
/// `gamma` towards `target`:
///
/// - female: `max(0, gamma - smooth_min(l))`
/// - male:   `max(0, gamma + smooth_max(l))`
///
/// Returns the loss and its gradient over the logits: the softmin (softmax)
/// weights, negated for the female branch, or all zeros when the hinge is
/// inactive (including exactly at the corner).
pub fn swm_loss(logits: &[f64], target: Label, gamma: f64, tau: f64) -> Result<(f64, Vec<f64>)> {
    check(logits, tau)?;
    if !gamma.is_finite() {
        return Err(Error::invalid(format!("margin must be finite, got {gamma}")));
    }
    let (margin, weights, sign) = match target {
        Label::Female => {
            let neg: Vec<f64> = logits.iter().map(|l| -l).collect();
            let (s, w) = lse(&neg, tau);
            // gamma - smooth_min = gamma + lse(-l); d/dl_j = -softmin_j
            (gamma + s, w, -1.0)
        }
        Label::Male => {
            let (s, w) = lse(logits, tau);
            (gamma + s, w, 1.0)
        }
    };
    if margin > 0.0 {
        Ok((margin, weights.into_iter().map(|w| sign * w).collect()))
    } else {
        Ok((0.0, vec![0.0; logits.len()]))
    }
}
