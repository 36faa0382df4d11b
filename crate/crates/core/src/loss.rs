//! Mean binary cross-entropy over (example, class) entries.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{sigmoid, softplus};

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before the log.
pub const PROB_EPS: f64 = 1e-12;

fn check(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Shape(alloc::format!(
            "{a} predictions for {b} labels"
        )));
    }
    if a == 0 {
        return Err(Error::Shape("empty prediction set".into()));
    }
    Ok(())
}

/// Loss from probabilities, with the gradient w.r.t. the pre-sigmoid scores.
pub fn bce_loss(probs: &[f64], labels: &[u8]) -> Result<(f64, Vec<f64>)> {
    check(probs.len(), labels.len())?;
    let n = probs.len() as f64;
    let mut loss = 0.0;
    let grad = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let q = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
            loss -= if y == 1 {
                libm::log(q)
            } else {
                libm::log(1.0 - q)
            };
            (p - f64::from(y)) / n
        })
        .collect();
    Ok((loss / n, grad))
}

/// Same loss evaluated from logits: `softplus(s) - y * s`.
pub fn bce_with_logits(logits: &[f64], labels: &[u8]) -> Result<(f64, Vec<f64>)> {
    check(logits.len(), labels.len())?;
    let n = logits.len() as f64;
    let mut loss = 0.0;
    let grad = logits
        .iter()
        .zip(labels)
        .map(|(&s, &y)| {
            let y = f64::from(y);
            loss += softplus(s) - y * s;
            (sigmoid(s) - y) / n
        })
        .collect();
    Ok((loss / n, grad))
}
