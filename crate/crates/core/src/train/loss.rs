use alloc::vec;
use alloc::vec::Vec;

use crate::dense::Dense;
use crate::error::{Error, Result};

/// Mean over masked nodes of `w[y_i] * -ln p_i[y_i]`, with its gradient
/// w.r.t. the logits that produced `probs` (`w[y_i] (p_i - onehot) / M`).
pub fn masked_cross_entropy(
    probs: &Dense,
    labels: &[usize],
    mask: &[bool],
    weights: Option<&[f64]>,
) -> Result<(f64, Dense)> {
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    let k = probs.cols();
    let mut grad = Dense::zeros(probs.rows(), k);
    let mut total = 0.0;
    let m = count as f64;
    for i in 0..probs.rows() {
        if !mask[i] {
            continue;
        }
        let y = labels[i];
        if y >= k {
            return Err(Error::Index { index: y, bound: k });
        }
        let w = weights.map_or(1.0, |w| w[y]);
        let p = probs.get(i, y).max(f64::MIN_POSITIVE);
        total += w * -libm::log(p);
        let g = grad.row_mut(i);
        for (c, gc) in g.iter_mut().enumerate() {
            let onehot = if c == y { 1.0 } else { 0.0 };
            *gc = w * (probs.get(i, c) - onehot) / m;
        }
    }
    Ok((total / m, grad))
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

/// Mean binary cross entropy over valid labels, computed as
/// `max(z, 0) - z y + ln(1 + e^{-|z|})`. The gradient is that of the mean.
pub fn sigmoid_cross_entropy_multilabel(
    logits: &[f64],
    labels: &[f64],
    valid: &[bool],
) -> Result<(f64, Vec<f64>)> {
    let count = valid.iter().filter(|&&v| v).count();
    if count == 0 {
        return Err(Error::NoValidLabels);
    }
    let m = count as f64;
    let mut total = 0.0;
    let mut grad = vec![0.0; logits.len()];
    for (c, ((&z, &y), &ok)) in logits.iter().zip(labels).zip(valid).enumerate() {
        if !ok {
            continue;
        }
        total += z.max(0.0) - z * y + libm::log1p(libm::exp(-z.abs()));
        grad[c] = (sigmoid(z) - y) / m;
    }
    Ok((total / m, grad))
}

/// `(pred - target)^2` and its derivative.
pub fn mse_loss(pred: f64, target: f64) -> (f64, f64) {
    let d = pred - target;
    (d * d, 2.0 * d)
}

/// Batch mean of squared errors.
pub fn mse_batch(preds: &[f64], targets: &[f64]) -> f64 {
    if preds.is_empty() {
        return 0.0;
    }
    preds
        .iter()
        .zip(targets)
        .map(|(&p, &t)| mse_loss(p, t).0)
        .sum::<f64>()
        / preds.len() as f64
}
