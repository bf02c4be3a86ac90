use ndarray::{Array1, ArrayView1, ArrayView2};

use crate::nn::softmax_inplace;

/// Attention weights over encoder steps for every decoder step.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionTrace {
    /// `decoder steps x encoder steps`; each row is a distribution.
    pub weights: Vec<Vec<f64>>,
}

impl AttentionTrace {
    pub fn decoder_steps(&self) -> usize {
        self.weights.len()
    }

    pub fn encoder_steps(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }
}

/// Bilinear attention: scores `h_e,i^T W_a h_d`, softmax over `i`, and the
/// weighted average of encoder states as context.
pub fn attend(encoder_states: ArrayView2<'_, f64>, decoder_state: ArrayView1<'_, f64>, w_a: ArrayView2<'_, f64>) -> (Array1<f64>, Array1<f64>) {
    let projected = w_a.dot(&decoder_state);
    let mut weights = encoder_states.dot(&projected);
    softmax_inplace(weights.view_mut());
    let context = encoder_states.t().dot(&weights);
    (context, weights)
}

/// Size of the largest contiguous run inside the smallest set of top-weighted
/// positions that holds at least half of the row's mass, as a fraction of
/// the row's total mass.
pub fn top_block_mass(row: &[f64]) -> f64 {
    let total: f64 = row.iter().sum();
    if row.is_empty() || total <= 0.0 {
        return 0.0;
    }
    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    let mut in_top = vec![false; row.len()];
    let mut mass = 0.0;
    for &i in &order {
        in_top[i] = true;
        mass += row[i];
        if mass >= 0.5 * total {
            break;
        }
    }
    let mut best: f64 = 0.0;
    let mut run = 0.0;
    for (i, &w) in row.iter().enumerate() {
        if in_top[i] {
            run += w;
            best = best.max(run);
        } else {
            run = 0.0;
        }
    }
    best / total
}

/// Whether the top-attended positions of a row form a contiguous block that
/// carries at least half of the row's mass.
pub fn is_contiguous_row(row: &[f64]) -> bool {
    top_block_mass(row) >= 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn orthogonal_decoder_state_gives_uniform_weights() {
        let states = array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [2.0, -1.0, 0.0]];
        let dec = array![0.0, 0.0, 1.0];
        let (_, w) = attend(states.view(), dec.view(), Array2::eye(3).view());
        for &x in &w {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn log_two_scores() {
        let states = array![[2f64.ln()], [0.0]];
        let dec = array![1.0];
        let (ctx, w) = attend(states.view(), dec.view(), array![[1.0]].view());
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((w[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!((ctx[0] - 2.0 / 3.0 * 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn contiguity() {
        assert!(is_contiguous_row(&[0.05, 0.3, 0.4, 0.2, 0.05]));
        assert!(!is_contiguous_row(&[0.3, 0.05, 0.05, 0.05, 0.25, 0.05, 0.25]));
        assert!(is_contiguous_row(&[1.0]));
    }
}
