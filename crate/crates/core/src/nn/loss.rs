use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::sigmoid;

/// Mean over components of the squared difference, with its gradient
/// w.r.t. `pred`.
pub fn mse_loss<T: Scalar>(pred: &[T], target: &[T]) -> Result<(T, Vec<T>)> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::Shape(format!(
            "mse over {} predictions and {} targets",
            pred.len(),
            target.len()
        )));
    }
    if !pred.iter().chain(target).all(|v| v.is_finite()) {
        return Err(Error::NonFinite("mse input".into()));
    }
    let n = T::of_usize(pred.len());
    let two_over_n = T::of(2.0) / n;
    let mut loss = T::zero();
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let d = *p - *t;
            loss = loss + d * d;
            two_over_n * d
        })
        .collect();
    Ok((loss / n, grad))
}

/// Binary cross-entropy on a logit, in the stable
/// `max(x, 0) - x·y + ln(1 + e^-|x|)` form. Returns the loss and
/// `d loss / d logit = sigmoid(x) - y`.
pub fn bce_with_logits<T: Scalar>(logit: T, label: T) -> Result<(T, T)> {
    if !logit.is_finite() || !label.is_finite() {
        return Err(Error::NonFinite("bce input".into()));
    }
    let loss = logit.max(T::zero()) - logit * label + (-logit.abs()).exp().ln_1p();
    Ok((loss, sigmoid(logit) - label))
}

/// Binary cross-entropy on a probability in (0, 1). Returns the loss and
/// its derivative w.r.t. the probability.
pub fn bce_prob<T: Scalar>(prob: T, label: T) -> Result<(T, T)> {
    if !prob.is_finite() || !label.is_finite() {
        return Err(Error::NonFinite("bce input".into()));
    }
    if !(prob > T::zero() && prob < T::one()) {
        return Err(Error::InvalidArgument(format!("probability {prob} outside (0, 1)")));
    }
    let q = T::one() - prob;
    let loss = -(label * prob.ln() + (T::one() - label) * q.ln());
    Ok((loss, (prob - label) / (prob * q)))
}
