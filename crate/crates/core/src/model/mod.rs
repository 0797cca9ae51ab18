//! The encoder-decoder transformer shared by the docid model and the query
//! generator, plus its decoders.

mod config;
mod decode;
mod transformer;

use thiserror::Error;

pub use config::ModelConfig;
pub use decode::{
    beam_search_docids, draw, greedy, log_softmax, sample_top_k, sample_top_k_traced, top_k_distribution,
    BeamHypothesis, BeamOptions, EncodedSource, NextTokenLogProbs,
};
pub use transformer::{generic_loss, teacher_forcing_input, Seq2SeqModel};

use crate::numeric::NumericError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("{what} length {len} exceeds limit {max}")]
    Length {
        what: &'static str,
        len: usize,
        max: usize,
    },
    #[error("batch: {0}")]
    Batch(String),
    #[error("decoding: {0}")]
    Decode(String),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
