//! Vocabulary and tokenizer, docid codec and trie, prompt template, and the
//! document/query records shared by every pipeline stage.

mod docid;
mod prompt;
mod vocab;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use docid::{decode_docid, encode_docid, width_for, DocId, DocidTrie, NodeId};
pub use prompt::build_prompt;
pub use vocab::{
    digit_token, language_token, token_digit, TokenId, Vocabulary, BOS, BYTE_BASE, DIGIT_BASE, EOS, FIRST_FREE,
    PAD, PROMPT_GENERATE, PROMPT_QUESTION, SPECIALS, UNK,
};

#[derive(Debug, Error)]
pub enum TextError {
    #[error("docid {docid} does not fit in {width} digits")]
    DocidCapacity { docid: DocId, width: usize },
    #[error("duplicate docid {0}")]
    DuplicateDocid(DocId),
    #[error("token sequence {0:?} is not a docid")]
    InvalidDocid(Vec<TokenId>),
    #[error("language {0:?} is not registered in the vocabulary")]
    UnknownLanguage(String),
    #[error("vocabulary: {0}")]
    Vocabulary(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub docid: DocId,
    pub text: String,
    #[serde(rename = "lang", default, skip_serializing_if = "Option::is_none")]
    pub language: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueryOrigin {
    Labeled,
    Generated,
}

/// A query tied to the document it is relevant to.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub docid: DocId,
    pub text: String,
    #[serde(rename = "lang", default, skip_serializing_if = "Option::is_none")]
    pub language: Option<String>,
    #[serde(default = "labeled")]
    pub origin: QueryOrigin,
}

fn labeled() -> QueryOrigin {
    QueryOrigin::Labeled
}

impl Query {
    pub fn labeled(docid: DocId, text: impl Into<String>, language: Option<String>) -> Self {
        Self {
            docid,
            text: text.into(),
            language,
            origin: QueryOrigin::Labeled,
        }
    }

    pub fn generated(docid: DocId, text: impl Into<String>, language: Option<String>) -> Self {
        Self {
            docid,
            text: text.into(),
            language,
            origin: QueryOrigin::Generated,
        }
    }
}
