use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;

use super::{ParamId, ParamStore, Tensor2};

/// Affine map `y = x W^T + b` applied to the rows of `x`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new(store: &mut ParamStore, prefix: &str, input: usize, output: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        Linear {
            weight: store.add(format!("{prefix}.weight"), Tensor2::uniform(output, input, bound, rng)),
            bias: store.add(format!("{prefix}.bias"), Tensor2::uniform(1, output, bound, rng)),
        }
    }

    pub fn forward(&self, store: &ParamStore, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut y = x.dot(&store.value(self.weight).view().t());
        y += &store.value(self.bias).flat();
        y
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward(&self, store: &mut ParamStore, x: ArrayView2<'_, f64>, d_y: ArrayView2<'_, f64>) -> Array2<f64> {
        {
            let mut g = store.grad_mut(self.weight).view_mut();
            general_mat_mul(1.0, &d_y.t(), &x, 1.0, &mut g);
        }
        {
            let mut g = store.grad_mut(self.bias).flat_mut();
            g += &d_y.sum_axis(Axis(0));
        }
        d_y.dot(&store.value(self.weight).view())
    }
}

/// Lookup table of learned row vectors.
#[derive(Clone, Debug)]
pub struct Embedding {
    pub table: ParamId,
    rows: usize,
}

impl Embedding {
    pub fn new(store: &mut ParamStore, name: &str, rows: usize, dim: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (dim as f64).sqrt();
        Embedding {
            table: store.add(name.to_string(), Tensor2::uniform(rows, dim, bound, rng)),
            rows,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Caller guarantees every id is `< rows`.
    pub fn lookup(&self, store: &ParamStore, ids: &[usize]) -> Array2<f64> {
        let table = store.value(self.table);
        let mut out = Array2::zeros((ids.len(), table.cols()));
        for (r, &id) in ids.iter().enumerate() {
            out.row_mut(r).as_slice_mut().expect("contiguous").copy_from_slice(table.row(id));
        }
        out
    }

    pub fn backward(&self, store: &mut ParamStore, ids: &[usize], d_out: ArrayView2<'_, f64>) {
        let grad = store.grad_mut(self.table);
        for (r, &id) in ids.iter().enumerate() {
            grad.row_mut(id)
                .iter_mut()
                .zip(d_out.row(r))
                .for_each(|(g, d)| *g += d);
        }
    }
}
