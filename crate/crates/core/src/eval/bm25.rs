//! Okapi BM25 over an in-memory inverted index, plus document expansion with
//! generated queries.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{EvalError, RankedList};
use crate::text::{DocId, Document, Query};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 0.9, b: 0.4 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub docid: DocId,
    pub tf: u32,
}

/// Lowercased alphanumeric runs.
pub fn analyze(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct InvertedIndex {
    postings: BTreeMap<String, Vec<Posting>>,
    doc_lens: BTreeMap<DocId, u64>,
    total_len: u64,
}

impl InvertedIndex {
    /// Builds the index. The result does not depend on document order.
    pub fn build(docs: &[Document]) -> Result<Self, EvalError> {
        let mut index = Self::default();
        for d in docs {
            let terms = analyze(&d.text);
            if index.doc_lens.insert(d.docid, terms.len() as u64).is_some() {
                return Err(EvalError::Format(format!("duplicate docid {} in index input", d.docid)));
            }
            index.total_len += terms.len() as u64;
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in terms {
                *tf.entry(t).or_default() += 1;
            }
            for (term, tf) in tf {
                index.postings.entry(term).or_default().push(Posting { docid: d.docid, tf });
            }
        }
        for list in index.postings.values_mut() {
            list.sort_by_key(|p| p.docid);
        }
        Ok(index)
    }

    pub fn num_docs(&self) -> usize {
        self.doc_lens.len()
    }

    pub fn avgdl(&self) -> f64 {
        if self.doc_lens.is_empty() {
            0.0
        } else {
            self.total_len as f64 / self.doc_lens.len() as f64
        }
    }

    pub fn doc_len(&self, docid: DocId) -> Option<u64> {
        self.doc_lens.get(&docid).copied()
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map_or(&[], Vec::as_slice)
    }

    pub fn df(&self, term: &str) -> usize {
        self.postings(term).len()
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.num_docs() as f64;
        let df = self.df(term) as f64;
        ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
    }

    fn term_weight(&self, term: &str, tf: u32, docid: DocId, params: Bm25Params) -> f64 {
        let dl = self.doc_lens[&docid] as f64;
        let tf = tf as f64;
        let norm = params.k1 * (1.0 - params.b + params.b * dl / self.avgdl());
        self.idf(term) * tf * (params.k1 + 1.0) / (tf + norm)
    }
}

/// BM25 score of one document. Repeated query terms count once.
pub fn bm25_score(query_terms: &[String], docid: DocId, index: &InvertedIndex, params: Bm25Params) -> f64 {
    if index.doc_len(docid).is_none() {
        return 0.0;
    }
    let unique: BTreeSet<&str> = query_terms.iter().map(String::as_str).collect();
    unique
        .into_iter()
        .filter_map(|t| {
            let list = index.postings(t);
            list.binary_search_by_key(&docid, |p| p.docid)
                .ok()
                .map(|i| index.term_weight(t, list[i].tf, docid, params))
        })
        .sum()
}

/// Top `top_k` documents sharing at least one term with `query`, by score
/// descending and docid ascending.
pub fn bm25_search(query: &str, index: &InvertedIndex, params: Bm25Params, top_k: usize) -> RankedList {
    let terms: BTreeSet<String> = analyze(query).into_iter().collect();
    let mut scores: HashMap<DocId, f64> = HashMap::new();
    for t in &terms {
        for p in index.postings(t) {
            *scores.entry(p.docid).or_default() += index.term_weight(t, p.tf, p.docid, params);
        }
    }
    let mut ranked = RankedList::from_scores(scores.into_iter().collect());
    ranked.truncate(top_k);
    ranked
}

/// Appends every generated query of a document to its text, in input order.
pub fn doctquery_expand(corpus: &[Document], generated: &[Query]) -> Result<Vec<Document>, EvalError> {
    let mut extra: HashMap<DocId, Vec<&str>> = HashMap::new();
    for q in generated {
        extra.entry(q.docid).or_default().push(&q.text);
    }
    for &docid in extra.keys() {
        if !corpus.iter().any(|d| d.docid == docid) {
            return Err(EvalError::DanglingDocid(docid));
        }
    }
    Ok(corpus
        .iter()
        .map(|d| {
            let mut doc = d.clone();
            if let Some(qs) = extra.get(&d.docid) {
                for q in qs {
                    doc.text.push(' ');
                    doc.text.push_str(q);
                }
            }
            doc
        })
        .collect())
}
