//! Construction of (source, target) example sets for every training objective.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::text::{build_prompt, encode_docid, DocId, Document, Query, TokenId, Vocabulary};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExampleKind {
    DocToDocid,
    QueryToDocid,
    DocToQuery,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrainingExample {
    pub src: Vec<TokenId>,
    pub tgt: Vec<TokenId>,
    pub docid: DocId,
    pub kind: ExampleKind,
    pub src_text: String,
    /// Target text for doc→query examples.
    pub tgt_text: Option<String>,
    pub language: Option<String>,
}

/// Lengths and docid width shared by the dataset builders.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodingLimits {
    pub docid_width: usize,
    /// Token budget for document and query sources (EOS included).
    pub truncate_len: usize,
    /// Token budget for the query-generation source, prompt included.
    pub qg_src_len: usize,
    /// Token budget for generated query targets (EOS included).
    pub query_len: usize,
}

impl EncodingLimits {
    pub fn new(docid_width: usize) -> Self {
        Self {
            docid_width,
            truncate_len: 32,
            qg_src_len: 32,
            query_len: 16,
        }
    }
}

fn to_docid_example(
    vocab: &Vocabulary,
    limits: &EncodingLimits,
    text: &str,
    docid: DocId,
    kind: ExampleKind,
    language: Option<String>,
) -> Result<TrainingExample, TrainError> {
    Ok(TrainingExample {
        src: vocab.tokenize(text, limits.truncate_len),
        tgt: encode_docid(docid, limits.docid_width)?,
        docid,
        kind,
        src_text: text.to_string(),
        tgt_text: None,
        language,
    })
}

/// One doc→docid example per document, ordered by docid.
pub fn build_dsi_dataset(
    corpus: &[Document],
    vocab: &Vocabulary,
    limits: &EncodingLimits,
) -> Result<Vec<TrainingExample>, TrainError> {
    if corpus.is_empty() {
        return Err(TrainError::EmptyInput("corpus"));
    }
    let mut docs: Vec<&Document> = corpus.iter().collect();
    docs.sort_by_key(|d| d.docid);
    docs.iter()
        .map(|d| to_docid_example(vocab, limits, &d.text, d.docid, ExampleKind::DocToDocid, d.language.clone()))
        .collect()
}

fn check_docids<'a>(corpus: &[Document], queries: impl IntoIterator<Item = &'a Query>) -> Result<(), TrainError> {
    let known: HashSet<DocId> = corpus.iter().map(|d| d.docid).collect();
    for q in queries {
        if !known.contains(&q.docid) {
            return Err(TrainError::DanglingDocid(q.docid));
        }
    }
    Ok(())
}

/// Documents plus one query→docid example per labeled query. Documents
/// without labels are represented by their text alone.
pub fn build_dsi_s_dataset(
    corpus: &[Document],
    labeled: &[Query],
    vocab: &Vocabulary,
    limits: &EncodingLimits,
) -> Result<Vec<TrainingExample>, TrainError> {
    check_docids(corpus, labeled)?;
    let mut out = build_dsi_dataset(corpus, vocab, limits)?;
    for q in labeled {
        out.push(to_docid_example(
            vocab,
            limits,
            &q.text,
            q.docid,
            ExampleKind::QueryToDocid,
            q.language.clone(),
        )?);
    }
    Ok(out)
}

/// Source text the query generator sees for `doc`. Queries with a language
/// tag get the cross-lingual prompt.
pub fn qg_source_text(vocab: &Vocabulary, doc_text: &str, language: Option<&str>) -> Result<String, TrainError> {
    Ok(match language {
        Some(lang) => build_prompt(vocab, lang, doc_text)?,
        None => doc_text.to_string(),
    })
}

/// doc→query pairs for training the query generator.
pub fn build_qg_dataset(
    corpus: &[Document],
    labeled: &[Query],
    vocab: &Vocabulary,
    limits: &EncodingLimits,
) -> Result<Vec<TrainingExample>, TrainError> {
    if labeled.is_empty() {
        return Err(TrainError::EmptyInput("labeled queries"));
    }
    check_docids(corpus, labeled)?;
    let by_id: std::collections::HashMap<DocId, &Document> = corpus.iter().map(|d| (d.docid, d)).collect();
    labeled
        .iter()
        .map(|q| {
            let doc = by_id[&q.docid];
            let src_text = qg_source_text(vocab, &doc.text, q.language.as_deref())?;
            Ok(TrainingExample {
                src: vocab.tokenize(&src_text, limits.qg_src_len),
                tgt: vocab.tokenize(&q.text, limits.query_len),
                docid: q.docid,
                kind: ExampleKind::DocToQuery,
                src_text,
                tgt_text: Some(q.text.clone()),
                language: q.language.clone(),
            })
        })
        .collect()
}

/// query→docid examples from generated queries only. Passing `raw_docs`
/// re-adds document text, which is only meant for ablations.
pub fn build_dsi_qg_dataset(
    generated: &[Query],
    raw_docs: Option<&[Document]>,
    vocab: &Vocabulary,
    limits: &EncodingLimits,
) -> Result<Vec<TrainingExample>, TrainError> {
    if generated.is_empty() {
        return Err(TrainError::EmptyInput("generated queries"));
    }
    let mut out = generated
        .iter()
        .map(|q| {
            to_docid_example(
                vocab,
                limits,
                &q.text,
                q.docid,
                ExampleKind::QueryToDocid,
                q.language.clone(),
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(docs) = raw_docs {
        check_docids(docs, generated)?;
        out.extend(build_dsi_dataset(docs, vocab, limits)?);
    }
    Ok(out)
}

/// Line-delimited persisted form of a training example.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub src_text: String,
    pub tgt_docid: DocId,
    pub kind: ExampleKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tgt_text: Option<String>,
}

pub fn write_dataset<W: Write>(mut w: W, examples: &[TrainingExample]) -> Result<(), TrainError> {
    for e in examples {
        let rec = DatasetRecord {
            src_text: e.src_text.clone(),
            tgt_docid: e.docid,
            kind: e.kind,
            language: e.language.clone(),
            tgt_text: e.tgt_text.clone(),
        };
        serde_json::to_writer(&mut w, &rec).map_err(|e| TrainError::Format(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads records written by [`write_dataset`] and re-tokenizes them.
pub fn read_dataset<R: BufRead>(
    r: R,
    vocab: &Vocabulary,
    limits: &EncodingLimits,
) -> Result<Vec<TrainingExample>, TrainError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DatasetRecord =
            serde_json::from_str(&line).map_err(|e| TrainError::Format(format!("line {}: {e}", i + 1)))?;
        let example = match rec.kind {
            ExampleKind::DocToQuery => {
                let tgt_text = rec
                    .tgt_text
                    .ok_or_else(|| TrainError::Format(format!("line {}: doc_to_query record without tgt_text", i + 1)))?;
                TrainingExample {
                    src: vocab.tokenize(&rec.src_text, limits.qg_src_len),
                    tgt: vocab.tokenize(&tgt_text, limits.query_len),
                    docid: rec.tgt_docid,
                    kind: rec.kind,
                    src_text: rec.src_text,
                    tgt_text: Some(tgt_text),
                    language: rec.language,
                }
            }
            kind => to_docid_example(vocab, limits, &rec.src_text, rec.tgt_docid, kind, rec.language)?,
        };
        out.push(example);
    }
    Ok(out)
}

/// Generated-query files: one `{docid, lang, query_text}` object per line.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
struct GeneratedRecord {
    docid: DocId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lang: Option<String>,
    query_text: String,
}

pub fn write_generated<W: Write>(mut w: W, queries: &[Query]) -> Result<(), TrainError> {
    for q in queries {
        let rec = GeneratedRecord {
            docid: q.docid,
            lang: q.language.clone(),
            query_text: q.text.clone(),
        };
        serde_json::to_writer(&mut w, &rec).map_err(|e| TrainError::Format(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_generated<R: BufRead>(r: R) -> Result<Vec<Query>, TrainError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: GeneratedRecord =
            serde_json::from_str(&line).map_err(|e| TrainError::Format(format!("line {}: {e}", i + 1)))?;
        out.push(Query::generated(rec.docid, rec.query_text, rec.lang));
    }
    Ok(out)
}
