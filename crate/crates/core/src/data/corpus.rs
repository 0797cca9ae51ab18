//! Corpus records and their on-disk formats.
//!
//! A corpus directory holds `corpus.json` (id and provenance),
//! `documents.{jsonl,tsv}`, `train_queries.{jsonl,tsv}` and
//! `dev_queries.{jsonl,tsv}`. JSONL documents are `{"docid", "text", "lang"?}`;
//! JSONL queries are `{"docid", "text", "lang"?}`. TSV rows are
//! `docid<TAB>text[<TAB>lang]` for both. Text is stored byte-for-byte.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DataError;
use crate::text::{DocId, Document, Query};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Jsonl,
    Tsv,
}

impl CorpusFormat {
    pub fn extension(self) -> &'static str {
        match self {
            CorpusFormat::Jsonl => "jsonl",
            CorpusFormat::Tsv => "tsv",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "jsonl" => Some(CorpusFormat::Jsonl),
            "tsv" => Some(CorpusFormat::Tsv),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub id: String,
    pub documents: Vec<Document>,
    pub train_queries: Vec<Query>,
    pub dev_queries: Vec<Query>,
    pub provenance: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct CorpusMeta {
    id: String,
    #[serde(default)]
    provenance: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct QueryRecord {
    docid: DocId,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lang: Option<String>,
}

impl Corpus {
    /// Rejects duplicate docids, queries for unknown docids, and queries that
    /// appear in both splits.
    pub fn validate(&self) -> Result<(), DataError> {
        let mut ids = HashSet::new();
        for d in &self.documents {
            if !ids.insert(d.docid) {
                return Err(DataError::DuplicateDocid(d.docid));
            }
        }
        for q in self.train_queries.iter().chain(&self.dev_queries) {
            if !ids.contains(&q.docid) {
                return Err(DataError::DanglingQuery(q.docid));
            }
        }
        let train: HashSet<(DocId, &str, Option<&str>)> = self
            .train_queries
            .iter()
            .map(|q| (q.docid, q.text.as_str(), q.language.as_deref()))
            .collect();
        if let Some(q) = self
            .dev_queries
            .iter()
            .find(|q| train.contains(&(q.docid, q.text.as_str(), q.language.as_deref())))
        {
            return Err(DataError::OverlappingSplits(q.text.clone()));
        }
        Ok(())
    }

    pub fn docids(&self) -> Vec<DocId> {
        self.documents.iter().map(|d| d.docid).collect()
    }

    pub fn max_docid(&self) -> DocId {
        self.documents.iter().map(|d| d.docid).max().unwrap_or(0)
    }

    /// Languages used by any query, sorted.
    pub fn query_languages(&self) -> Vec<String> {
        let mut langs: Vec<String> = self
            .train_queries
            .iter()
            .chain(&self.dev_queries)
            .filter_map(|q| q.language.clone())
            .collect();
        langs.sort();
        langs.dedup();
        langs
    }

    /// Writes the directory layout described in the module docs.
    pub fn save(&self, dir: &Path, format: CorpusFormat) -> Result<(), DataError> {
        std::fs::create_dir_all(dir)?;
        let meta = CorpusMeta {
            id: self.id.clone(),
            provenance: self.provenance.clone(),
        };
        let f = BufWriter::new(File::create(dir.join("corpus.json"))?);
        serde_json::to_writer_pretty(f, &meta).map_err(DataError::json)?;
        let ext = format.extension();
        save_documents(&self.documents, &dir.join(format!("documents.{ext}")), format)?;
        save_queries(&self.train_queries, &dir.join(format!("train_queries.{ext}")), format)?;
        save_queries(&self.dev_queries, &dir.join(format!("dev_queries.{ext}")), format)?;
        Ok(())
    }
}

/// Loads a corpus directory, or a single documents file (in which case the
/// corpus has no queries and is named after the file stem).
pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Corpus, DataError> {
    let corpus = if path.is_dir() {
        let meta_path = path.join("corpus.json");
        let meta: CorpusMeta = serde_json::from_reader(BufReader::new(open(&meta_path)?))
            .map_err(|e| DataError::parse(&meta_path, 0, e))?;
        let ext = format.extension();
        let queries = |name: &str| -> Result<Vec<Query>, DataError> {
            let p = path.join(format!("{name}.{ext}"));
            if p.exists() {
                load_queries(&p, format)
            } else {
                Ok(Vec::new())
            }
        };
        Corpus {
            id: meta.id,
            documents: load_documents(&path.join(format!("documents.{ext}")), format)?,
            train_queries: queries("train_queries")?,
            dev_queries: queries("dev_queries")?,
            provenance: meta.provenance,
        }
    } else {
        Corpus {
            id: path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
            documents: load_documents(path, format)?,
            ..Corpus::default()
        }
    };
    corpus.validate()?;
    Ok(corpus)
}

fn open(path: &Path) -> Result<File, DataError> {
    File::open(path).map_err(|e| DataError::Open {
        path: path.to_path_buf(),
        source: e,
    })
}

fn records(path: &Path) -> Result<Vec<(usize, String)>, DataError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(open(path)?).lines().enumerate() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

fn tsv_fields(path: &Path, lineno: usize, line: &str) -> Result<(DocId, String, Option<String>), DataError> {
    let mut parts = line.split('\t');
    let (Some(id), Some(text)) = (parts.next(), parts.next()) else {
        return Err(DataError::parse(path, lineno, "expected docid<TAB>text[<TAB>lang]"));
    };
    let lang = parts.next().filter(|l| !l.is_empty()).map(str::to_string);
    if parts.next().is_some() {
        return Err(DataError::parse(path, lineno, "too many fields"));
    }
    let docid = id
        .trim()
        .parse()
        .map_err(|e| DataError::parse(path, lineno, format!("bad docid {id:?}: {e}")))?;
    Ok((docid, text.to_string(), lang))
}

pub fn load_documents(path: &Path, format: CorpusFormat) -> Result<Vec<Document>, DataError> {
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    for (lineno, line) in records(path)? {
        let doc = match format {
            CorpusFormat::Jsonl => {
                serde_json::from_str::<Document>(&line).map_err(|e| DataError::parse(path, lineno, e))?
            }
            CorpusFormat::Tsv => {
                let (docid, text, language) = tsv_fields(path, lineno, &line)?;
                Document { docid, text, language }
            }
        };
        if !seen.insert(doc.docid) {
            return Err(DataError::DuplicateDocid(doc.docid));
        }
        docs.push(doc);
    }
    Ok(docs)
}

pub fn load_queries(path: &Path, format: CorpusFormat) -> Result<Vec<Query>, DataError> {
    records(path)?
        .into_iter()
        .map(|(lineno, line)| {
            let (docid, text, lang) = match format {
                CorpusFormat::Jsonl => {
                    let r: QueryRecord = serde_json::from_str(&line).map_err(|e| DataError::parse(path, lineno, e))?;
                    (r.docid, r.text, r.lang)
                }
                CorpusFormat::Tsv => tsv_fields(path, lineno, &line)?,
            };
            Ok(Query::labeled(docid, text, lang))
        })
        .collect()
}

fn check_tsv_text(text: &str) -> Result<(), DataError> {
    if text.contains(['\t', '\n', '\r']) {
        return Err(DataError::Unrepresentable(format!("{text:?} contains a tab or newline")));
    }
    Ok(())
}

fn write_row<W: Write>(w: &mut W, docid: DocId, text: &str, lang: Option<&str>, format: CorpusFormat) -> Result<(), DataError> {
    match format {
        CorpusFormat::Jsonl => {
            let r = QueryRecord {
                docid,
                text: text.to_string(),
                lang: lang.map(str::to_string),
            };
            serde_json::to_writer(&mut *w, &r).map_err(DataError::json)?;
        }
        CorpusFormat::Tsv => {
            check_tsv_text(text)?;
            write!(w, "{docid}\t{text}")?;
            if let Some(l) = lang {
                write!(w, "\t{l}")?;
            }
        }
    }
    w.write_all(b"\n")?;
    Ok(())
}

pub fn save_documents(docs: &[Document], path: &Path, format: CorpusFormat) -> Result<(), DataError> {
    let mut w = BufWriter::new(File::create(path)?);
    for d in docs {
        write_row(&mut w, d.docid, &d.text, d.language.as_deref(), format)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_queries(queries: &[Query], path: &Path, format: CorpusFormat) -> Result<(), DataError> {
    let mut w = BufWriter::new(File::create(path)?);
    for q in queries {
        write_row(&mut w, q.docid, &q.text, q.language.as_deref(), format)?;
    }
    w.flush()?;
    Ok(())
}
