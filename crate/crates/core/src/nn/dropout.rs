use rand::Rng;

use crate::error::{config_err, Result};

/// Inverted dropout. In training mode each entry is zeroed with probability
/// `rate` and survivors are scaled by `1 / (1 - rate)`; otherwise identity.
pub fn dropout(x: &[f64], rate: f64, rng: &mut impl Rng, training: bool) -> Result<Vec<f64>> {
    let mask = dropout_mask(x.len(), rate, rng, training)?;
    Ok(match mask {
        Some(mask) => x.iter().zip(&mask).map(|(v, m)| v * m).collect(),
        None => x.to_vec(),
    })
}

/// Per-entry multipliers (`0` or `1 / (1 - rate)`), or `None` when the
/// layer is the identity.
pub fn dropout_mask(n: usize, rate: f64, rng: &mut impl Rng, training: bool) -> Result<Option<Vec<f64>>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(config_err!("dropout rate must lie in [0, 1), got {rate}"));
    }
    if !training || rate == 0.0 {
        return Ok(None);
    }
    let keep = 1.0 / (1.0 - rate);
    Ok(Some(
        (0..n)
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect(),
    ))
}
