//! Corpus ingestion and persistence, the synthetic corpus generator, and run
//! bookkeeping (manifests, lock files, configuration).

mod config;
mod corpus;
mod run;
mod synth;

use std::fmt::Display;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use config::{EvalSection, GenerationSection, LengthSection, ModelShape, RunConfig, TrainSection};
pub use corpus::{load_corpus, load_documents, load_queries, save_documents, save_queries, Corpus, CorpusFormat};
pub use run::{git_describe, hash_path, sha256_file, Manifest, RunDir, RunLock};
pub use synth::{generate_synthetic_corpus, SyntheticSpec};

use crate::text::DocId;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("duplicate docid {0}")]
    DuplicateDocid(DocId),
    #[error("query refers to docid {0}, which is not in the corpus")]
    DanglingQuery(DocId),
    #[error("query {0:?} appears in both the train and dev splits")]
    OverlappingSplits(String),
    #[error("cannot store {0} in this format")]
    Unrepresentable(String),
    #[error("invalid settings: {0}")]
    Spec(String),
    #[error("run directory is locked by another process ({0})")]
    Locked(PathBuf),
    #[error("cannot open {path}: {source}")]
    Open {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("serialization: {0}")]
    Serialize(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl DataError {
    pub(crate) fn parse(path: &Path, line: usize, message: impl Display) -> Self {
        DataError::Parse {
            path: path.to_path_buf(),
            line,
            message: message.to_string(),
        }
    }

    pub(crate) fn json(e: serde_json::Error) -> Self {
        DataError::Serialize(e.to_string())
    }
}
