//! Synthetic corpora with a controllable gap between document text and
//! query text.
//!
//! Documents are sentences of shared filler words, each sentence carrying one
//! keyword that occurs nowhere else in the corpus. A query is a short window
//! of one sentence around its keyword in which filler words are swapped for
//! query-only function words with probability `mismatch_strength`. With
//! query languages configured, every query token is further mapped through a
//! per-language bijection onto words that never occur in documents.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, DataError};
use crate::seeds::stage_seed;
use crate::text::{DocId, Document, Query};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub num_docs: usize,
    pub doc_len_sentences: usize,
    pub sentence_len_tokens: usize,
    pub query_len_tokens: usize,
    /// Number of distinct filler words shared by all documents.
    pub vocab_size: usize,
    /// Number of query-only function words.
    pub function_words: usize,
    /// Query languages; empty means monolingual queries.
    pub languages: Vec<String>,
    pub label_fraction: f64,
    /// Labeled training queries per labeled document and language. Sentences
    /// are covered round-robin.
    pub train_queries_per_doc: usize,
    pub mismatch_strength: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_docs: 100,
            doc_len_sentences: 3,
            sentence_len_tokens: 16,
            query_len_tokens: 6,
            vocab_size: 200,
            function_words: 8,
            languages: Vec::new(),
            label_fraction: 1.0,
            train_queries_per_doc: 3,
            mismatch_strength: 0.8,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    /// The reference configuration used for acceptance experiments.
    pub fn reference() -> Self {
        Self::default()
    }

    /// Reference configuration with two synthetic query languages.
    pub fn reference_cross_lingual() -> Self {
        Self {
            languages: vec!["xa".into(), "xb".into()],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: &str| Err(DataError::Spec(m.to_string()));
        if self.num_docs == 0
            || self.doc_len_sentences == 0
            || self.sentence_len_tokens == 0
            || self.query_len_tokens == 0
            || self.vocab_size == 0
        {
            return bad("counts and lengths must be positive");
        }
        if !(0.0..=1.0).contains(&self.label_fraction) {
            return bad("label_fraction must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.mismatch_strength) {
            return bad("mismatch_strength must lie in [0, 1]");
        }
        if self.mismatch_strength > 0.0 && self.function_words == 0 {
            return bad("mismatch needs at least one function word");
        }
        let mut seen = HashSet::new();
        if self.languages.iter().any(|l| l.is_empty() || l.contains(char::is_whitespace) || !seen.insert(l)) {
            return bad("languages must be distinct non-empty tags without whitespace");
        }
        Ok(())
    }
}

const ONSETS: [&str; 14] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];
const CODAS: [&str; 4] = ["", "", "n", "r"];

/// Draws `count` distinct pseudo-words of `syllables` syllables not in `taken`.
fn pseudo_words(rng: &mut ChaCha8Rng, count: usize, syllables: usize, taken: &mut HashSet<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(count);
    let mut syl = syllables;
    let mut misses = 0;
    while out.len() < count {
        let w: String = (0..syl)
            .map(|_| {
                format!(
                    "{}{}{}",
                    ONSETS.choose(rng).unwrap(),
                    VOWELS.choose(rng).unwrap(),
                    CODAS.choose(rng).unwrap()
                )
            })
            .collect();
        if taken.insert(w.clone()) {
            out.push(w);
            misses = 0;
        } else {
            misses += 1;
            if misses > 64 {
                syl += 1;
                misses = 0;
            }
        }
    }
    out
}

struct Sentence {
    tokens: Vec<usize>,
    keyword_pos: usize,
}

/// Deterministic corpus generation; the corpus is a pure function of `spec`.
pub fn generate_synthetic_corpus(spec: &SyntheticSpec) -> Result<Corpus, DataError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(stage_seed(spec.seed, "synth"));
    let mut taken = HashSet::new();

    // word table: fillers, then keywords, then function words
    let fillers = pseudo_words(&mut rng, spec.vocab_size, 2, &mut taken);
    let num_keywords = spec.num_docs * spec.doc_len_sentences;
    let keywords = pseudo_words(&mut rng, num_keywords, 3, &mut taken);
    let functions = pseudo_words(&mut rng, spec.function_words, 1, &mut taken);
    let words: Vec<String> = fillers.iter().chain(&keywords).chain(&functions).cloned().collect();
    let function_base = spec.vocab_size + num_keywords;

    // per-language bijections over the whole word table
    let translations: BTreeMap<&str, Vec<String>> = spec
        .languages
        .iter()
        .map(|l| (l.as_str(), pseudo_words(&mut rng, words.len(), 2, &mut taken)))
        .collect();

    let mut docs_sentences: Vec<Vec<Sentence>> = Vec::with_capacity(spec.num_docs);
    let mut documents = Vec::with_capacity(spec.num_docs);
    for d in 0..spec.num_docs {
        let sentences: Vec<Sentence> = (0..spec.doc_len_sentences)
            .map(|s| {
                let keyword_pos = rng.gen_range(0..spec.sentence_len_tokens);
                let tokens = (0..spec.sentence_len_tokens)
                    .map(|i| {
                        if i == keyword_pos {
                            spec.vocab_size + d * spec.doc_len_sentences + s
                        } else {
                            rng.gen_range(0..spec.vocab_size)
                        }
                    })
                    .collect();
                Sentence { tokens, keyword_pos }
            })
            .collect();
        let text = sentences
            .iter()
            .flat_map(|s| s.tokens.iter().map(|&t| words[t].as_str()))
            .collect::<Vec<_>>()
            .join(" ");
        documents.push(Document {
            docid: d as DocId,
            text,
            language: None,
        });
        docs_sentences.push(sentences);
    }

    let make_query = |rng: &mut ChaCha8Rng, d: usize, s: usize, lang: Option<&str>| -> String {
        let sent = &docs_sentences[d][s];
        let len = spec.query_len_tokens.min(sent.tokens.len());
        let lo = sent.keyword_pos.saturating_sub(len - 1);
        let hi = sent.keyword_pos.min(sent.tokens.len() - len);
        let start = rng.gen_range(lo..=hi);
        let ids: Vec<usize> = (start..start + len)
            .map(|i| {
                if i != sent.keyword_pos && rng.gen_bool(spec.mismatch_strength) {
                    function_base + rng.gen_range(0..spec.function_words)
                } else {
                    sent.tokens[i]
                }
            })
            .collect();
        let table = lang.map_or(&words, |l| &translations[l]);
        ids.iter().map(|&t| table[t].as_str()).collect::<Vec<_>>().join(" ")
    };

    let langs: Vec<Option<&str>> = if spec.languages.is_empty() {
        vec![None]
    } else {
        spec.languages.iter().map(|l| Some(l.as_str())).collect()
    };

    let mut dev_queries = Vec::with_capacity(spec.num_docs);
    let mut dev_text: HashMap<(usize, Option<&str>), String> = HashMap::new();
    for d in 0..spec.num_docs {
        let s = rng.gen_range(0..spec.doc_len_sentences);
        let lang = langs[d % langs.len()];
        let text = make_query(&mut rng, d, s, lang);
        dev_text.insert((d, lang), text.clone());
        dev_queries.push(Query::labeled(d as DocId, text, lang.map(str::to_string)));
    }

    let mut labeled_docs: Vec<usize> = (0..spec.num_docs).collect();
    labeled_docs.shuffle(&mut rng);
    labeled_docs.truncate((spec.label_fraction * spec.num_docs as f64).round() as usize);
    labeled_docs.sort_unstable();
    let mut train_queries = Vec::new();
    for &d in &labeled_docs {
        for &lang in &langs {
            let first = rng.gen_range(0..spec.doc_len_sentences);
            for j in 0..spec.train_queries_per_doc {
                let s = (first + j) % spec.doc_len_sentences;
                let mut text = make_query(&mut rng, d, s, lang);
                let mut tries = 0;
                while dev_text.get(&(d, lang)) == Some(&text) && tries < 16 {
                    text = make_query(&mut rng, d, s, lang);
                    tries += 1;
                }
                if dev_text.get(&(d, lang)) != Some(&text) {
                    train_queries.push(Query::labeled(d as DocId, text, lang.map(str::to_string)));
                }
            }
        }
    }

    let mut provenance = BTreeMap::new();
    provenance.insert("generator".to_string(), "synthetic".to_string());
    provenance.insert(
        "spec".to_string(),
        serde_json::to_string(spec).map_err(DataError::json)?,
    );
    let corpus = Corpus {
        id: format!(
            "synth-n{}-m{}-s{}{}",
            spec.num_docs,
            spec.mismatch_strength,
            spec.seed,
            if spec.languages.is_empty() {
                String::new()
            } else {
                format!("-{}", spec.languages.join("+"))
            }
        ),
        documents,
        train_queries,
        dev_queries,
        provenance,
    };
    corpus.validate()?;
    Ok(corpus)
}
