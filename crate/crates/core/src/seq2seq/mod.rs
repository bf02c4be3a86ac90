//! Encoder-decoder captioning over observation streams or chunk tokens.

pub mod attention;
mod check;
mod model;
mod train;
mod vocab;

pub use attention::{attend, is_contiguous_row, top_block_mass, AttentionTrace};
pub use check::{toy_dims, toy_gradient_check, toy_input, GRADCHECK_EPS};
pub use model::{EncoderInput, EncoderOutput, ModelDims, ModelInput, Seq2SeqModel, Variant};
pub use train::{dataset_loss, train, TrainConfig, TrainReport, TrainSample};
pub use vocab::{Caption, CaptionVocab, BOS, EOS, UNK};

/// Default cap on generated caption length.
pub const MAX_DECODE_LEN: usize = 30;
