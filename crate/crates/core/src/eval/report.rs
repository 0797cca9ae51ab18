use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{hits_at_k_any, EvalError, EvalQuery, RankedList};
use crate::text::DocId;

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub model_id: String,
    pub corpus_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    pub seed: u64,
}

/// Outcome for a single query.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryHit {
    pub query_id: usize,
    pub gold: Vec<DocId>,
    /// 1-based rank of the best-placed gold docid.
    pub rank: Option<usize>,
    pub hit_at_1: bool,
    pub hit_at_10: bool,
    pub top: Vec<DocId>,
    pub top_score: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub hits_at_1: f64,
    pub hits_at_10: f64,
    pub rows: Vec<QueryHit>,
    pub metadata: ReportMeta,
}

#[derive(Serialize)]
struct Summary<'a> {
    hits_at_1: f64,
    hits_at_10: f64,
    num_queries: usize,
    metadata: &'a ReportMeta,
}

impl EvalReport {
    /// Aggregates one ranking per query. Rankings and queries pair up by position.
    pub fn from_rankings(queries: &[EvalQuery], rankings: &[RankedList], metadata: ReportMeta) -> Result<Self, EvalError> {
        if queries.is_empty() {
            return Err(EvalError::NoQueries);
        }
        if queries.len() != rankings.len() {
            return Err(EvalError::Mismatch {
                queries: queries.len(),
                rankings: rankings.len(),
            });
        }
        let rows: Vec<QueryHit> = queries
            .iter()
            .zip(rankings)
            .map(|(q, r)| QueryHit {
                query_id: q.id,
                gold: q.gold.clone(),
                rank: q.gold.iter().filter_map(|&g| r.rank_of(g)).min(),
                hit_at_1: hits_at_k_any(r, &q.gold, 1),
                hit_at_10: hits_at_k_any(r, &q.gold, 10),
                top: r.docids().take(10).collect(),
                top_score: r.entries().first().map(|e| e.score),
            })
            .collect();
        let n = rows.len() as f64;
        Ok(Self {
            hits_at_1: rows.iter().filter(|r| r.hit_at_1).count() as f64 / n,
            hits_at_10: rows.iter().filter(|r| r.hit_at_10).count() as f64 / n,
            rows,
            metadata,
        })
    }

    /// One row per query.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), EvalError> {
        let join = |ids: &[DocId]| ids.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(" ");
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["query_id", "gold", "rank", "hit_at_1", "hit_at_10", "top10"])?;
        for r in &self.rows {
            out.write_record([
                r.query_id.to_string(),
                join(&r.gold),
                r.rank.map(|v| v.to_string()).unwrap_or_default(),
                (r.hit_at_1 as u8).to_string(),
                (r.hit_at_10 as u8).to_string(),
                join(&r.top),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Aggregate metrics and metadata.
    pub fn write_json_summary<W: Write>(&self, w: W) -> Result<(), EvalError> {
        let summary = Summary {
            hits_at_1: self.hits_at_1,
            hits_at_10: self.hits_at_10,
            num_queries: self.rows.len(),
            metadata: &self.metadata,
        };
        serde_json::to_writer_pretty(w, &summary).map_err(|e| EvalError::Format(e.to_string()))
    }
}
