use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::scores::ScoreVector;

/// Floor applied to the probability inside the log of the cross-entropy.
pub const PROB_FLOOR: f64 = 1e-12;

/// Max-shifted softmax.
pub fn softmax<T: Scalar>(logits: &[T]) -> Result<ScoreVector<T>> {
    if logits.len() < 2 {
        return Err(Error::Input(format!("softmax needs >= 2 logits, got {}", logits.len())));
    }
    if let Some(bad) = logits.iter().find(|x| !x.is_finite()) {
        return Err(Error::Numeric(format!("non-finite logit {bad}")));
    }
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    Ok(ScoreVector::from_raw(exps.into_iter().map(|e| e / total).collect()))
}

/// Returns `(-ln p[label], probs - one_hot(label))`, the loss and its
/// gradient with respect to the logits that produced `probs`.
pub fn cross_entropy_loss<T: Scalar>(probs: &ScoreVector<T>, label: usize) -> Result<(T, Vec<T>)> {
    let p = probs.as_slice();
    if label >= p.len() {
        return Err(Error::Input(format!("label {label} out of range for {} classes", p.len())));
    }
    let loss = -p[label].max(T::lit(PROB_FLOOR)).ln();
    let mut grad = p.to_vec();
    grad[label] -= T::one();
    Ok((loss, grad))
}

/// Cross-entropy straight from logits. The loss is `logsumexp(z) - z[label]`
/// with the non-maximal terms summed under `ln_1p`. It needs no probability floor and stays consistent with the gradient
/// when the label probability underflows.
pub fn softmax_cross_entropy<T: Scalar>(logits: &[T], label: usize) -> Result<(T, ScoreVector<T>, Vec<T>)> {
    let probs = softmax(logits)?;
    let (_, grad) = cross_entropy_loss(&probs, label)?;
    let top = (0..logits.len()).fold(0, |b, j| if logits[j] > logits[b] { j } else { b });
    let max = logits[top];
    let rest: T = (0..logits.len()).filter(|&j| j != top).map(|j| (logits[j] - max).exp()).sum();
    Ok(((max - logits[label]) + rest.ln_1p(), probs, grad))
}
