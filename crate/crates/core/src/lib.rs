//! Unsupervised action units and encoder-decoder captioning for robot
//! observation streams.
//!
//! The pipeline runs [`datagen`] → [`quantizer`] → [`chunker`] → [`seq2seq`]
//! → [`metrics`], and [`harness`] ties it into cross-validated experiments.
//! The guide in `book/` walks through each stage with runnable examples.

pub mod chunker;
pub mod datagen;
pub mod error;
pub mod harness;
pub mod hashing;
pub mod metrics;
pub mod nn;
pub mod observation;
pub mod quantizer;
pub mod seq2seq;

pub use error::{Error, Result};

#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/corpus.md")]
    struct Corpus;
    #[doc = include_str!("../../../book/src/segmentation.md")]
    struct Segmentation;
    #[doc = include_str!("../../../book/src/models.md")]
    struct Models;
    #[doc = include_str!("../../../book/src/scoring.md")]
    struct Scoring;
    #[doc = include_str!("../../../book/src/experiments.md")]
    struct Experiments;
    #[doc = include_str!("../../../book/src/formats.md")]
    struct Formats;
}
