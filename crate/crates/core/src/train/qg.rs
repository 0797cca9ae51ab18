//! Query-generator training and the offline query-generation job.

use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{qg_source_text, train, EncodingLimits, TrainError, TrainRunConfig, TrainTrace, TrainingExample};
use crate::eval::DevSet;
use crate::model::{sample_top_k, ModelConfig, Seq2SeqModel};
use crate::seeds::{cell_seed, stage_seed};
use crate::text::{Document, Query, Vocabulary};

/// Trains a fresh model on doc→query pairs from [`super::build_qg_dataset`].
pub fn train_qg_model(
    pairs: &[TrainingExample],
    model_config: ModelConfig,
    run: &TrainRunConfig,
) -> Result<(Seq2SeqModel, TrainTrace), TrainError> {
    if pairs.is_empty() {
        return Err(TrainError::EmptyInput("query-generation pairs"));
    }
    let mut model = Seq2SeqModel::new(model_config, stage_seed(run.seed, "init"))?;
    let trace = train(&mut model, pairs, run, None::<&DevSet>)?;
    Ok((model, trace))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GenerationConfig {
    /// Queries per (document, language) cell.
    pub n: usize,
    /// Top-k sampling cutoff.
    pub k: usize,
    /// Target languages; `None` generates in the query generator's default
    /// (monolingual) mode.
    pub languages: Vec<Option<String>>,
    pub seed: u64,
}

impl GenerationConfig {
    pub fn monolingual(n: usize, k: usize, seed: u64) -> Self {
        Self {
            n,
            k,
            languages: vec![None],
            seed,
        }
    }
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self::monolingual(10, 10, 0)
    }
}

/// Samples `n` queries per document and language with top-k sampling.
///
/// Each attempt in a cell uses its own seed derived from
/// `(seed, docid, language index, attempt)`. Exact duplicates are redrawn,
/// up to `5 * n` attempts, after which duplicates are accepted. Empty
/// generations are discarded, so a cell can come back short.
pub fn generate_query_set(
    qg: &Seq2SeqModel,
    vocab: &Vocabulary,
    corpus: &[Document],
    config: &GenerationConfig,
    limits: &EncodingLimits,
) -> Result<Vec<Query>, TrainError> {
    if config.n == 0 || config.k == 0 {
        return Err(TrainError::Config("n and k must be positive".into()));
    }
    let languages = if config.languages.is_empty() {
        vec![None]
    } else {
        config.languages.clone()
    };
    let max_len = (limits.query_len.saturating_sub(1)).min(qg.config().max_tgt_len - 1).max(1);
    let mut docs: Vec<&Document> = corpus.iter().collect();
    docs.sort_by_key(|d| d.docid);
    let mut out = Vec::new();
    for doc in docs {
        for (li, lang) in languages.iter().enumerate() {
            let src_text = qg_source_text(vocab, &doc.text, lang.as_deref())?;
            let encoded = qg.encode_source(&vocab.tokenize(&src_text, limits.qg_src_len))?;
            let mut seen = HashSet::new();
            let mut unique = Vec::new();
            let mut repeats = Vec::new();
            for attempt in 0..(5 * config.n) as u64 {
                if unique.len() == config.n {
                    break;
                }
                let mut rng = ChaCha8Rng::seed_from_u64(cell_seed(config.seed, &[doc.docid as u64, li as u64, attempt]));
                let tokens = sample_top_k(&encoded, config.k, max_len, &mut rng)?;
                let text = vocab.detokenize(&tokens);
                if text.trim().is_empty() {
                    continue;
                }
                if seen.insert(text.clone()) {
                    unique.push(text);
                } else {
                    repeats.push(text);
                }
            }
            let missing = config.n - unique.len();
            unique.extend(repeats.into_iter().take(missing));
            out.extend(unique.into_iter().map(|t| Query::generated(doc.docid, t, lang.clone())));
        }
    }
    Ok(out)
}
