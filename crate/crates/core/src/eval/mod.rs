//! Retrieval runs, Hits@k, lexical baselines, and experiment sweeps.

mod bm25;
mod experiment;
mod metrics;
pub mod plot;
mod ranked;
mod report;
mod run;

use thiserror::Error;

pub use bm25::{analyze, bm25_score, bm25_search, doctquery_expand, Bm25Params, InvertedIndex, Posting};
pub use experiment::{
    evaluate_bm25, evaluate_doctquery, generate, generation_languages, run_dsi, run_dsi_qg, run_dsi_s, run_qg, sweep_n,
    StageResult, SweepResult, SweepRow, Workspace,
};
pub use metrics::{hits_at_k, hits_at_k_any, mean_hits_at_k};
pub use ranked::{RankedList, ScoredDoc};
pub use report::{EvalReport, QueryHit, ReportMeta};
pub use run::{evaluate_model, retrieve_all, DevSet, EvalQuery};

use crate::model::ModelError;
use crate::text::{DocId, TextError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no queries to evaluate")]
    NoQueries,
    #[error("beam width {0} is below 10, so Hits@10 would be undefined")]
    BeamWidth(usize),
    #[error("{queries} queries but {rankings} rankings")]
    Mismatch { queries: usize, rankings: usize },
    #[error("generated query refers to docid {0}, which is not in the corpus")]
    DanglingDocid(DocId),
    #[error("malformed data: {0}")]
    Format(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
