use serde::{Deserialize, Serialize};

use crate::text::DocId;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredDoc {
    pub docid: DocId,
    pub score: f64,
}

/// Docids in rank order with non-increasing scores.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub query_id: usize,
    entries: Vec<ScoredDoc>,
}

impl RankedList {
    /// Sorts by score descending, docid ascending on ties.
    pub fn from_scores(mut scored: Vec<(DocId, f64)>) -> Self {
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        Self::from_sorted(scored)
    }

    pub(crate) fn from_sorted(entries: Vec<(DocId, f64)>) -> Self {
        debug_assert!(entries.windows(2).all(|w| w[0].1 >= w[1].1));
        Self {
            query_id: 0,
            entries: entries
                .into_iter()
                .map(|(docid, score)| ScoredDoc { docid, score })
                .collect(),
        }
    }

    pub fn with_query_id(mut self, id: usize) -> Self {
        self.query_id = id;
        self
    }

    pub fn entries(&self) -> &[ScoredDoc] {
        &self.entries
    }

    pub fn docids(&self) -> impl Iterator<Item = DocId> + '_ {
        self.entries.iter().map(|e| e.docid)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn truncate(&mut self, k: usize) {
        self.entries.truncate(k);
    }

    /// 1-based rank of `docid`, if present.
    pub fn rank_of(&self, docid: DocId) -> Option<usize> {
        self.entries.iter().position(|e| e.docid == docid).map(|p| p + 1)
    }
}
