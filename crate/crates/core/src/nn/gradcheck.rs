use super::{ParamId, ParamStore};
use crate::error::{Error, Result};

/// Outcome of a central-difference gradient comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
    pub analytic: f64,
    pub numeric: f64,
    pub entries: usize,
}

/// Compares the analytic gradient written by `loss_and_grad` against the
/// five-point central difference with step `eps` for every scalar parameter.
///
/// The closure receives the store with gradients zeroed, returns the loss
/// and must accumulate its gradient into the store. It is evaluated twice at
/// the base point and rejected when the two losses differ.
///
/// Relative error is `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn grad_check<F>(params: &mut ParamStore, eps: f64, mut loss_and_grad: F) -> Result<GradCheckReport>
where
    F: FnMut(&mut ParamStore) -> f64,
{
    params.zero_grad();
    let base = loss_and_grad(params);
    let analytic: Vec<Vec<f64>> = params.ids().map(|id| params.grad(id).data().to_vec()).collect();
    params.zero_grad();
    let again = loss_and_grad(params);
    if base.to_bits() != again.to_bits() {
        return Err(Error::Numeric(format!(
            "gradient check invalid: loss closure is not deterministic ({base} vs {again})"
        )));
    }

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        analytic: 0.0,
        numeric: 0.0,
        entries: 0,
    };
    let ids: Vec<ParamId> = params.ids().collect();
    for (slot, &id) in ids.iter().enumerate() {
        for idx in 0..params.value(id).len() {
            let original = params.value(id).data()[idx];
            let mut at = |offset: f64| {
                params.value_mut(id).data_mut()[idx] = original + offset;
                loss_and_grad(params)
            };
            let (p1, m1, p2, m2) = (at(eps), at(-eps), at(2.0 * eps), at(-2.0 * eps));
            params.value_mut(id).data_mut()[idx] = original;

            let numeric = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * eps);
            let a = analytic[slot][idx];
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            let rel = (a - numeric).abs() / denom;
            report.entries += 1;
            if rel > report.max_rel_error || !rel.is_finite() {
                report.max_rel_error = rel;
                report.worst = Some((params.name(id).to_string(), idx));
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    params.zero_grad();
    Ok(report)
}
