use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use super::{ParamId, ParamStore, Tensor2};
use crate::error::{config_err, Result};

/// Hidden and cell vectors of one LSTM cell.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub hidden: Vec<f64>,
    pub cell: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        LstmState {
            hidden: vec![0.0; hidden],
            cell: vec![0.0; hidden],
        }
    }

    pub fn dim(&self) -> usize {
        self.hidden.len()
    }

    fn add_assign(&mut self, other: &LstmState) {
        self.hidden.iter_mut().zip(&other.hidden).for_each(|(a, b)| *a += b);
        self.cell.iter_mut().zip(&other.cell).for_each(|(a, b)| *a += b);
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `tanh` through one `exp`; absolute error stays near 1e-16 and the
/// limits saturate to exactly ±1.
#[inline]
fn tanh(x: f64) -> f64 {
    1.0 - 2.0 / (1.0 + (2.0 * x).exp())
}

/// Parameters of a single-layer LSTM.
///
/// Gate rows are laid out `[input, forget, candidate, output]`, each block
/// `hidden` rows tall.
#[derive(Clone, Debug)]
pub struct LstmParams {
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub bias: ParamId,
    input: usize,
    hidden: usize,
}

/// Everything the backward pass needs from a forward pass over a sequence.
#[derive(Clone, Debug)]
pub struct LstmTrace {
    inputs: Array2<f64>,
    init: LstmState,
    /// Post-activation gates, `T x 4H`.
    gates: Array2<f64>,
    cells: Array2<f64>,
    tanh_cells: Array2<f64>,
    hiddens: Array2<f64>,
}

impl LstmTrace {
    pub fn len(&self) -> usize {
        self.hiddens.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Hidden state after every step, `T x H`.
    pub fn hiddens(&self) -> ArrayView2<'_, f64> {
        self.hiddens.view()
    }

    pub fn final_state(&self) -> LstmState {
        match self.len() {
            0 => self.init.clone(),
            t => LstmState {
                hidden: self.hiddens.row(t - 1).to_vec(),
                cell: self.cells.row(t - 1).to_vec(),
            },
        }
    }
}

impl LstmParams {
    /// Registers freshly initialized weights under `prefix`.
    ///
    /// Weights are uniform in `±1/sqrt(fan_in)`; the forget-gate bias
    /// starts at `1.0`.
    pub fn new(store: &mut ParamStore, prefix: &str, input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let w_x = store.add(
            format!("{prefix}.w_x"),
            Tensor2::uniform(4 * hidden, input, 1.0 / (input as f64).sqrt(), rng),
        );
        let w_h = store.add(
            format!("{prefix}.w_h"),
            Tensor2::uniform(4 * hidden, hidden, 1.0 / (hidden as f64).sqrt(), rng),
        );
        let mut b = Tensor2::uniform(1, 4 * hidden, 1.0 / (hidden as f64).sqrt(), rng);
        b.data_mut()[hidden..2 * hidden].iter_mut().for_each(|x| *x = 1.0);
        let bias = store.add(format!("{prefix}.bias"), b);
        LstmParams {
            w_x,
            w_h,
            bias,
            input,
            hidden,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden
    }

    fn check_state(&self, state: &LstmState) -> Result<()> {
        if state.hidden.len() != self.hidden || state.cell.len() != self.hidden {
            return Err(config_err!(
                "lstm state has dims ({}, {}), expected {}",
                state.hidden.len(),
                state.cell.len(),
                self.hidden
            ));
        }
        Ok(())
    }

    /// Applies gate nonlinearities to a `4H` pre-activation row in place and
    /// returns the new `(cell, tanh(cell), hidden)`.
    fn activate(&self, z: &mut [f64], prev_cell: &[f64], cell: &mut [f64], tanh_cell: &mut [f64], hidden: &mut [f64]) {
        let h = self.hidden;
        for k in 0..h {
            let i = sigmoid(z[k]);
            let f = sigmoid(z[h + k]);
            let g = tanh(z[2 * h + k]);
            let o = sigmoid(z[3 * h + k]);
            z[k] = i;
            z[h + k] = f;
            z[2 * h + k] = g;
            z[3 * h + k] = o;
            let c = f * prev_cell[k] + i * g;
            let tc = tanh(c);
            cell[k] = c;
            tanh_cell[k] = tc;
            hidden[k] = o * tc;
        }
    }

    /// One recurrence step.
    pub fn step(&self, store: &ParamStore, x: &[f64], prev: &LstmState) -> Result<LstmState> {
        if x.len() != self.input {
            return Err(config_err!(
                "lstm input has dim {}, expected {}",
                x.len(),
                self.input
            ));
        }
        self.check_state(prev)?;
        let w_x = store.value(self.w_x).view();
        let w_h = store.value(self.w_h).view();
        let mut z: Array1<f64> = w_x.dot(&ArrayView1::from(x)) + w_h.dot(&ArrayView1::from(&prev.hidden[..]));
        z += &store.value(self.bias).flat();
        let mut next = LstmState::zeros(self.hidden);
        let mut tanh_cell = vec![0.0; self.hidden];
        self.activate(
            z.as_slice_mut().expect("contiguous"),
            &prev.cell,
            &mut next.cell,
            &mut tanh_cell,
            &mut next.hidden,
        );
        Ok(next)
    }

    /// Runs the cell over every row of `inputs` (`T x input`).
    pub fn forward(&self, store: &ParamStore, inputs: ArrayView2<'_, f64>, init: &LstmState) -> Result<LstmTrace> {
        if inputs.ncols() != self.input {
            return Err(config_err!(
                "lstm inputs have {} columns, expected {}",
                inputs.ncols(),
                self.input
            ));
        }
        self.check_state(init)?;
        let t_len = inputs.nrows();
        let h = self.hidden;
        let w_h = store.value(self.w_h).flat();
        let w_h = w_h.as_slice().expect("contiguous");
        let mut gates = inputs.dot(&store.value(self.w_x).view().t());
        gates += &store.value(self.bias).flat();
        let mut cells = Array2::zeros((t_len, h));
        let mut tanh_cells = Array2::zeros((t_len, h));
        let mut hiddens = Array2::zeros((t_len, h));
        let mut prev_h = init.hidden.clone();
        let mut prev_c = init.cell.clone();
        for t in 0..t_len {
            let mut z = gates.row_mut(t);
            let z = z.as_slice_mut().expect("contiguous");
            matvec_add(w_h, &prev_h, z);
            let (mut c_row, mut tc_row, mut h_row) = (cells.row_mut(t), tanh_cells.row_mut(t), hiddens.row_mut(t));
            let (c_row, h_row) = (c_row.as_slice_mut().expect("contiguous"), h_row.as_slice_mut().expect("contiguous"));
            self.activate(z, &prev_c, c_row, tc_row.as_slice_mut().expect("contiguous"), h_row);
            prev_h.copy_from_slice(h_row);
            prev_c.copy_from_slice(c_row);
        }
        Ok(LstmTrace {
            inputs: inputs.to_owned(),
            init: init.clone(),
            gates,
            cells,
            tanh_cells,
            hiddens,
        })
    }

    /// Backpropagation through time.
    ///
    /// `d_hiddens` is the loss gradient w.r.t. each emitted hidden state and
    /// `d_final` the gradient w.r.t. the final `(hidden, cell)` pair.
    /// Parameter gradients are accumulated into `store`; input and initial
    /// state gradients are returned.
    pub fn backward(
        &self,
        store: &mut ParamStore,
        trace: &LstmTrace,
        d_hiddens: ArrayView2<'_, f64>,
        d_final: &LstmState,
    ) -> (Array2<f64>, LstmState) {
        let t_len = trace.len();
        let h = self.hidden;
        assert_eq!(d_hiddens.dim(), (t_len, h));
        let w_h = store.value(self.w_h).flat().to_owned();
        let w_h = w_h.as_slice().expect("contiguous");
        let mut d_z = Array2::<f64>::zeros((t_len, 4 * h));
        let mut dh_next = d_final.hidden.clone();
        let mut dc_next = d_final.cell.clone();
        for t in (0..t_len).rev() {
            let gates = trace.gates.row(t);
            let tanh_c = trace.tanh_cells.row(t);
            let prev_c = if t == 0 {
                ArrayView1::from(&trace.init.cell[..])
            } else {
                trace.cells.row(t - 1)
            };
            let d_h = d_hiddens.row(t);
            let mut dz = d_z.row_mut(t);
            for k in 0..h {
                let (i, f, g, o) = (gates[k], gates[h + k], gates[2 * h + k], gates[3 * h + k]);
                let dh = d_h[k] + dh_next[k];
                let tc = tanh_c[k];
                let d_o = dh * tc;
                let dc = dc_next[k] + dh * o * (1.0 - tc * tc);
                dz[k] = dc * g * i * (1.0 - i);
                dz[h + k] = dc * prev_c[k] * f * (1.0 - f);
                dz[2 * h + k] = dc * i * (1.0 - g * g);
                dz[3 * h + k] = d_o * o * (1.0 - o);
                dc_next[k] = dc * f;
            }
            dh_next.iter_mut().for_each(|x| *x = 0.0);
            matvec_t_add(w_h, dz.as_slice().expect("contiguous"), &mut dh_next);
        }

        let mut prev_hiddens = Array2::<f64>::zeros((t_len, h));
        if t_len > 0 {
            prev_hiddens.row_mut(0).assign(&ArrayView1::from(&trace.init.hidden[..]));
            prev_hiddens
                .slice_mut(s![1.., ..])
                .assign(&trace.hiddens.slice(s![..t_len - 1, ..]));
        }
        {
            let mut g = store.grad_mut(self.w_x).view_mut();
            general_mat_mul(1.0, &d_z.t(), &trace.inputs, 1.0, &mut g);
        }
        {
            let mut g = store.grad_mut(self.w_h).view_mut();
            general_mat_mul(1.0, &d_z.t(), &prev_hiddens, 1.0, &mut g);
        }
        {
            let mut g = store.grad_mut(self.bias).flat_mut();
            g += &d_z.sum_axis(Axis(0));
        }
        let d_inputs = d_z.dot(&store.value(self.w_x).view());
        (
            d_inputs,
            LstmState {
                hidden: dh_next,
                cell: dc_next,
            },
        )
    }
}

/// `out += W x` for row-major `W` with `out.len()` rows.
#[inline]
fn matvec_add(w: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for (row, o) in w.chunks_exact(n).zip(out.iter_mut()) {
        *o += dot(row, x);
    }
}

/// `out += W^T y` for row-major `W` with `y.len()` rows.
#[inline]
fn matvec_t_add(w: &[f64], y: &[f64], out: &mut [f64]) {
    let n = out.len();
    for (row, &yr) in w.chunks_exact(n).zip(y) {
        for (o, &wv) in out.iter_mut().zip(row) {
            *o += yr * wv;
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Single LSTM step; see [`LstmParams::step`].
pub fn lstm_step(x: &[f64], prev: &LstmState, params: &LstmParams, store: &ParamStore) -> Result<LstmState> {
    params.step(store, x, prev)
}

/// Adds `b` into `a`; used when several consumers feed one state gradient.
pub(crate) fn accumulate(a: &mut LstmState, b: &LstmState) {
    a.add_assign(b);
}
