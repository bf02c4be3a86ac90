use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EncoderInput, ModelDims, ModelInput, Seq2SeqModel, Variant, EOS};
use crate::chunker::ChunkSequence;
use crate::nn::{grad_check, GradCheckReport};
use crate::observation::ObservationSequence;
use crate::Result;

/// Finite-difference step used by [`toy_gradient_check`]. Smaller steps are
/// dominated by f64 rounding on entries whose gradient sits near the 1e-8
/// floor of the relative error; the five-point stencil keeps truncation
/// error negligible at this size.
pub const GRADCHECK_EPS: f64 = 3e-4;

/// Dimensions of the gradient-check model: hidden 4, caption vocabulary 6,
/// raw input dimension 3 and 3 chunk tokens.
pub fn toy_dims(variant: Variant) -> ModelDims {
    ModelDims { variant, input_dim: 3, chunk_vocab: 3, hidden: 4, caption_vocab: 6 }
}

/// Random encoder input of `len` steps suited to `variant`.
pub fn toy_input(variant: Variant, seed: u64, len: usize) -> ModelInput {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if variant.uses_chunks() {
        ModelInput::Chunks(ChunkSequence((0..len).map(|_| rng.gen_range(0..3)).collect()))
    } else {
        let data = Array2::from_shape_fn((len, 3), |_| rng.gen_range(-1.0..1.0));
        ModelInput::Raw(ObservationSequence::from_array(data).expect("finite toy input"))
    }
}

/// Compares analytic and central-difference gradients of every parameter on
/// a two-action batch (5 and 4 steps, three captions, dropout off).
pub fn toy_gradient_check(variant: Variant, seed: u64) -> Result<GradCheckReport> {
    let mut model = Seq2SeqModel::new(toy_dims(variant), seed)?;
    let inputs = [toy_input(variant, seed ^ 1, 5), toy_input(variant, seed ^ 2, 5)];
    let captions: [Vec<Vec<usize>>; 2] = [vec![vec![3, 4, 5, EOS], vec![2, EOS]], vec![vec![5, 3, EOS]]];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = model.params().clone();
    let ids: Vec<_> = model.params().ids().collect();
    grad_check(&mut store, GRADCHECK_EPS, |s| {
        model.params_mut().copy_values_from(s);
        model.params_mut().zero_grad();
        let batch: Vec<(EncoderInput<'_>, Vec<&[usize]>)> = inputs
            .iter()
            .zip(&captions)
            .map(|(i, c)| (i.as_input(), c.iter().map(Vec::as_slice).collect()))
            .collect();
        let loss = model.accumulate_batch(&batch, 0.0, &mut rng).unwrap_or(f64::NAN);
        for &id in &ids {
            let g = model.params().grad(id);
            s.grad_mut(id).data_mut().iter_mut().zip(g.data()).for_each(|(a, b)| *a += b);
        }
        loss
    })
}
