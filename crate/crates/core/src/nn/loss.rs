use ndarray::{ArrayView1, ArrayViewMut1};

use crate::error::{config_err, Result};

/// In-place numerically stable softmax.
pub fn softmax_inplace(mut xs: ArrayViewMut1<'_, f64>) {
    let max = xs.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let mut sum = 0.0;
    xs.iter_mut().for_each(|x| {
        *x = (*x - max).exp();
        sum += *x;
    });
    xs.iter_mut().for_each(|x| *x /= sum);
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut out = logits.to_vec();
    softmax_inplace(ArrayViewMut1::from(&mut out[..]));
    out
}

/// Cross-entropy of `softmax(logits)` against a single target index.
///
/// Returns `(-log p[target], p - onehot(target))`.
pub fn softmax_xent(logits: &[f64], target: usize) -> Result<(f64, Vec<f64>)> {
    if target >= logits.len() {
        return Err(config_err!(
            "target {target} out of range for {} logits",
            logits.len()
        ));
    }
    let loss = xent_loss(ArrayView1::from(logits), target);
    let mut grad = softmax(logits);
    grad[target] -= 1.0;
    Ok((loss, grad))
}

/// `-log softmax(logits)[target]`, computed as `(max - l_t) + ln(1 + sum_{j != argmax} e^{l_j - max})`
/// so that near-certain predictions keep their tiny losses.
pub(crate) fn xent_loss(logits: ArrayView1<'_, f64>, target: usize) -> f64 {
    let (arg, max) = logits
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(a, m), (i, &x)| if x > m { (i, x) } else { (a, m) });
    let rest: f64 = logits
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != arg)
        .map(|(_, &x)| (x - max).exp())
        .sum();
    (max - logits[target]) + rest.ln_1p()
}
