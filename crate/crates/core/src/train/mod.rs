//! Dataset builders and training loops for document indexing, supervised
//! indexing with labeled queries, query generation, and indexing from
//! generated queries.

mod dataset;
mod qg;
mod runner;

use thiserror::Error;

pub use dataset::{
    build_dsi_dataset, build_dsi_qg_dataset, build_dsi_s_dataset, build_qg_dataset, qg_source_text, read_dataset,
    read_generated, write_dataset, write_generated, DatasetRecord, EncodingLimits, ExampleKind, TrainingExample,
};
pub use qg::{generate_query_set, train_qg_model, GenerationConfig};
pub use runner::{train, TracePoint, TrainRunConfig, TrainTrace};

use crate::eval::EvalError;
use crate::model::ModelError;
use crate::numeric::NumericError;
use crate::text::{DocId, TextError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("{0} is empty")]
    EmptyInput(&'static str),
    #[error("query refers to docid {0}, which is not in the corpus")]
    DanglingDocid(DocId),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("loss became {loss} at step {step}")]
    Diverged { step: u64, loss: f32 },
    #[error("malformed record: {0}")]
    Format(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error("dev evaluation: {0}")]
    Eval(Box<EvalError>),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<EvalError> for TrainError {
    fn from(e: EvalError) -> Self {
        TrainError::Eval(Box::new(e))
    }
}
