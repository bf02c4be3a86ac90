//! Numerical building blocks: dense tensors, a named parameter store, the
//! LSTM cell with backpropagation through time, softmax cross-entropy,
//! dropout, the Adam update and a finite-difference gradient checker.

mod dropout;
pub mod gradcheck;
mod layers;
mod loss;
mod lstm;
mod optim;
mod params;
mod tensor;

pub use dropout::{dropout, dropout_mask};
pub use gradcheck::{grad_check, GradCheckReport};
pub use layers::{Embedding, Linear};
pub use loss::{softmax, softmax_inplace, softmax_xent};
pub(crate) use loss::xent_loss;
pub use lstm::{lstm_step, LstmParams, LstmState, LstmTrace};
pub(crate) use lstm::accumulate;
pub use optim::{optimizer_step, Adam};
pub use params::{ParamId, ParamStore};
pub use tensor::Tensor2;
