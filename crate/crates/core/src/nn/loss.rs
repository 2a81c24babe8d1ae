use super::{NnError, Tensor2};
use crate::Scalar;

pub const PROB_CLAMP: f64 = 1e-7;

/// Mean binary cross-entropy over labels, with the gradient taken with
/// respect to the pre-sigmoid logits: `(p - t) / n`.
///
/// Probabilities are clamped to `[1e-7, 1 - 1e-7]` inside the logarithms.
pub fn bce_multilabel<T: Scalar>(probs: &[T], targets: &[T]) -> Result<(T, Tensor2<T>), NnError> {
    if probs.len() != targets.len() || probs.is_empty() {
        return Err(NnError::ShapeMismatch(format!(
            "{} probabilities for {} targets",
            probs.len(),
            targets.len()
        )));
    }
    let n = T::of_usize(probs.len());
    let (lo, hi) = (T::of(PROB_CLAMP), T::of(1.0 - PROB_CLAMP));
    let mut loss = T::zero();
    for (&p, &t) in probs.iter().zip(targets) {
        let pc = p.max(lo).min(hi);
        loss -= t * pc.ln() + (T::one() - t) * (T::one() - pc).ln();
    }
    loss /= n;
    if !loss.is_finite() {
        return Err(NnError::NonFinite("loss".into()));
    }
    let grad = probs.iter().zip(targets).map(|(&p, &t)| (p - t) / n).collect();
    Ok((loss, Tensor2::row_vector(grad)))
}
