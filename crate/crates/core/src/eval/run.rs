use serde::{Deserialize, Serialize};

use super::{mean_hits_at_k, EvalError, EvalReport, RankedList, ReportMeta};
use crate::model::{BeamOptions, Seq2SeqModel};
use crate::text::{DocId, DocidTrie, Query, TokenId, Vocabulary};

/// A query prepared for retrieval.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalQuery {
    pub id: usize,
    pub text: String,
    pub tokens: Vec<TokenId>,
    pub gold: Vec<DocId>,
}

impl EvalQuery {
    /// Tokenizes each query with a `max_len` budget; ids follow input order.
    pub fn from_queries(vocab: &Vocabulary, queries: &[Query], max_len: usize) -> Vec<EvalQuery> {
        queries
            .iter()
            .enumerate()
            .map(|(id, q)| EvalQuery {
                id,
                text: q.text.clone(),
                tokens: vocab.tokenize(&q.text, max_len),
                gold: vec![q.docid],
            })
            .collect()
    }
}

/// Beam-search retrieval for every query, in order.
pub fn retrieve_all(
    model: &Seq2SeqModel,
    trie: &DocidTrie,
    queries: &[EvalQuery],
    beam: BeamOptions,
) -> Result<Vec<RankedList>, EvalError> {
    queries
        .iter()
        .map(|q| {
            let r = model.beam_search_docids(&q.tokens, trie, beam)?;
            debug_assert!(r.docids().all(|d| trie.contains(d)));
            Ok(r.with_query_id(q.id))
        })
        .collect()
}

/// Runs beam search per query and aggregates Hits@1 and Hits@10.
pub fn evaluate_model(
    model: &Seq2SeqModel,
    trie: &DocidTrie,
    queries: &[EvalQuery],
    beam_width: usize,
    metadata: ReportMeta,
) -> Result<EvalReport, EvalError> {
    if queries.is_empty() {
        return Err(EvalError::NoQueries);
    }
    if beam_width < 10 {
        return Err(EvalError::BeamWidth(beam_width));
    }
    let rankings = retrieve_all(model, trie, queries, BeamOptions::new(beam_width))?;
    EvalReport::from_rankings(queries, &rankings, metadata)
}

/// Held-out queries scored during training.
#[derive(Clone, Debug)]
pub struct DevSet {
    pub trie: DocidTrie,
    pub queries: Vec<EvalQuery>,
    pub beam_width: usize,
}

impl DevSet {
    pub fn new(trie: DocidTrie, queries: Vec<EvalQuery>) -> Self {
        Self {
            trie,
            queries,
            beam_width: 10,
        }
    }

    pub fn hits_at_10(&self, model: &Seq2SeqModel) -> Result<f64, EvalError> {
        if self.beam_width < 10 {
            return Err(EvalError::BeamWidth(self.beam_width));
        }
        let rankings = retrieve_all(model, &self.trie, &self.queries, BeamOptions::new(self.beam_width))?;
        mean_hits_at_k(rankings.iter().zip(self.queries.iter().map(|q| q.gold.as_slice())), 10)
            .ok_or(EvalError::NoQueries)
    }
}
