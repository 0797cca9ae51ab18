//! Generative retrieval workbench.
//!
//! A single encoder-decoder transformer is trained to map text to fixed-width
//! docid strings, either from raw document text or from queries produced by a
//! second, query-generating model. Retrieval is trie-constrained beam search
//! over docids; evaluation reports Hits@1 and Hits@10 alongside BM25 baselines.

pub mod numeric;
pub mod text;
pub mod model;
pub mod eval;
pub mod seeds;
pub mod train;
pub mod data;
