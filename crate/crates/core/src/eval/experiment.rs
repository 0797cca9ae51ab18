//! End-to-end stages on a corpus: document indexing, supervised indexing,
//! query generation, generated-query indexing, and the sweep over the number
//! of generated queries per document.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{bm25_search, doctquery_expand, evaluate_model, DevSet, EvalError, EvalQuery, EvalReport, InvertedIndex, ReportMeta};
use crate::data::{Corpus, RunConfig, TrainSection};
use crate::model::{ModelConfig, Seq2SeqModel};
use crate::seeds::stage_seed;
use crate::text::{width_for, DocidTrie, Query, Vocabulary};
use crate::train::{
    build_dsi_dataset, build_dsi_qg_dataset, build_dsi_s_dataset, build_qg_dataset, generate_query_set, train,
    train_qg_model, EncodingLimits, GenerationConfig, TrainError, TrainTrace,
};

/// A corpus together with everything derived from it that the stages share.
#[derive(Clone, Debug)]
pub struct Workspace {
    pub corpus: Corpus,
    pub vocab: Vocabulary,
    pub trie: DocidTrie,
    pub limits: EncodingLimits,
    pub dev_queries: Vec<EvalQuery>,
}

impl Workspace {
    /// Builds the vocabulary from all corpus text, documents and queries alike.
    pub fn new(corpus: Corpus, config: &RunConfig) -> Result<Self, EvalError> {
        let languages = corpus.query_languages();
        let texts = corpus
            .documents
            .iter()
            .map(|d| d.text.as_str())
            .chain(corpus.train_queries.iter().map(|q| q.text.as_str()))
            .chain(corpus.dev_queries.iter().map(|q| q.text.as_str()));
        let vocab = Vocabulary::build(&languages, texts);
        Self::with_vocab(corpus, vocab, config)
    }

    pub fn with_vocab(corpus: Corpus, vocab: Vocabulary, config: &RunConfig) -> Result<Self, EvalError> {
        if corpus.documents.is_empty() {
            return Err(EvalError::Format("corpus has no documents".into()));
        }
        let width = width_for(corpus.max_docid());
        let trie = DocidTrie::build(corpus.docids(), width)?;
        let limits = config.limits(width);
        let dev_queries = EvalQuery::from_queries(&vocab, &corpus.dev_queries, limits.truncate_len);
        Ok(Self {
            corpus,
            vocab,
            trie,
            limits,
            dev_queries,
        })
    }

    /// Shape for document/query → docid models.
    pub fn docid_model_config(&self, config: &RunConfig) -> ModelConfig {
        config
            .model
            .to_config(self.vocab.len(), self.limits.truncate_len, self.limits.docid_width + 1)
    }

    /// Shape for the doc → query generator.
    pub fn qg_model_config(&self, config: &RunConfig) -> ModelConfig {
        config
            .model
            .to_config(self.vocab.len(), self.limits.qg_src_len, self.limits.query_len)
    }

    pub fn dev_set(&self, config: &RunConfig) -> DevSet {
        DevSet {
            trie: self.trie.clone(),
            queries: self.dev_queries.clone(),
            beam_width: config.eval.beam_width,
        }
    }

    /// Training queries prepared for retrieval, e.g. to check memorization.
    pub fn eval_queries(&self, queries: &[Query]) -> Vec<EvalQuery> {
        EvalQuery::from_queries(&self.vocab, queries, self.limits.truncate_len)
    }

    pub fn meta(&self, model_id: &str, n: Option<usize>, seed: u64) -> ReportMeta {
        ReportMeta {
            model_id: model_id.to_string(),
            corpus_id: self.corpus.id.clone(),
            n,
            seed,
        }
    }
}

/// A trained model, its loss/metric trace and its dev-set report.
#[derive(Clone, Debug)]
pub struct StageResult {
    pub model: Seq2SeqModel,
    pub trace: TrainTrace,
    pub report: EvalReport,
}

fn fit_and_evaluate(
    ws: &Workspace,
    config: &RunConfig,
    dataset: &[crate::train::TrainingExample],
    section: &TrainSection,
    dev: &DevSet,
    model_id: &str,
    n: Option<usize>,
    seed: u64,
) -> Result<StageResult, EvalError> {
    let mut model = Seq2SeqModel::new(ws.docid_model_config(config), stage_seed(seed, "init"))?;
    let trace = train(&mut model, dataset, &section.with_seed(seed), Some(dev)).map_err(train_err)?;
    let report = evaluate_model(&model, &ws.trie, &ws.dev_queries, config.eval.beam_width, ws.meta(model_id, n, seed))?;
    Ok(StageResult { model, trace, report })
}

fn train_err(e: TrainError) -> EvalError {
    match e {
        TrainError::Eval(inner) => *inner,
        other => EvalError::Format(other.to_string()),
    }
}

/// Document text → docid indexing.
pub fn run_dsi(ws: &Workspace, config: &RunConfig, seed: u64) -> Result<StageResult, EvalError> {
    let data = build_dsi_dataset(&ws.corpus.documents, &ws.vocab, &ws.limits).map_err(train_err)?;
    fit_and_evaluate(ws, config, &data, &config.train_dsi, &ws.dev_set(config), "dsi", None, seed)
}

/// Document indexing plus labeled training queries.
pub fn run_dsi_s(ws: &Workspace, config: &RunConfig, seed: u64) -> Result<StageResult, EvalError> {
    let data = build_dsi_s_dataset(&ws.corpus.documents, &ws.corpus.train_queries, &ws.vocab, &ws.limits)
        .map_err(train_err)?;
    fit_and_evaluate(ws, config, &data, &config.train_dsi, &ws.dev_set(config), "dsi-s", None, seed)
}

/// Trains the query generator on the corpus's labeled training queries.
pub fn run_qg(ws: &Workspace, config: &RunConfig, seed: u64) -> Result<(Seq2SeqModel, TrainTrace), EvalError> {
    let pairs = build_qg_dataset(&ws.corpus.documents, &ws.corpus.train_queries, &ws.vocab, &ws.limits)
        .map_err(train_err)?;
    train_qg_model(&pairs, ws.qg_model_config(config), &config.train_qg.with_seed(seed)).map_err(train_err)
}

/// Languages to generate in: every query language of the corpus, or the
/// monolingual default.
pub fn generation_languages(ws: &Workspace) -> Vec<Option<String>> {
    let langs = ws.corpus.query_languages();
    if langs.is_empty() {
        vec![None]
    } else {
        langs.into_iter().map(Some).collect()
    }
}

pub fn generate(ws: &Workspace, qg: &Seq2SeqModel, n: usize, k: usize, seed: u64) -> Result<Vec<Query>, EvalError> {
    let config = GenerationConfig {
        n,
        k,
        languages: generation_languages(ws),
        seed,
    };
    generate_query_set(qg, &ws.vocab, &ws.corpus.documents, &config, &ws.limits).map_err(train_err)
}

/// Indexing from generated queries only (plus documents when the ablation
/// flag is set). With a positive hold-out fraction, that share of generated
/// queries is withheld from training and used as the dev set for the trace
/// and early stopping; the report is always on the corpus dev queries.
pub fn run_dsi_qg(
    ws: &Workspace,
    config: &RunConfig,
    generated: &[Query],
    n: Option<usize>,
    seed: u64,
) -> Result<StageResult, EvalError> {
    let frac = config.eval.holdout_fraction;
    let (train_q, dev) = if frac > 0.0 {
        let mut shuffled = generated.to_vec();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(stage_seed(seed, "holdout")));
        let cut = ((shuffled.len() as f64) * frac).round() as usize;
        let held = shuffled.split_off(shuffled.len() - cut.min(shuffled.len().saturating_sub(1)));
        let dev = DevSet {
            trie: ws.trie.clone(),
            queries: ws.eval_queries(&held),
            beam_width: config.eval.beam_width,
        };
        (shuffled, dev)
    } else {
        (generated.to_vec(), ws.dev_set(config))
    };
    let docs = config.dsi_qg_with_documents.then_some(ws.corpus.documents.as_slice());
    let data = build_dsi_qg_dataset(&train_q, docs, &ws.vocab, &ws.limits).map_err(train_err)?;
    fit_and_evaluate(ws, config, &data, &config.train_dsi_qg, &dev, "dsi-qg", n, seed)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub hits_at_1: f64,
    pub hits_at_10: f64,
    pub num_generated: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Learning-curve trace per `n`, in `rows` order.
    pub traces: Vec<TrainTrace>,
}

impl SweepResult {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<(), EvalError> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.rows {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// One generated-query index per `n`, all sharing `seed`.
pub fn sweep_n(
    ws: &Workspace,
    qg: &Seq2SeqModel,
    n_values: &[usize],
    config: &RunConfig,
    seed: u64,
) -> Result<SweepResult, EvalError> {
    if n_values.is_empty() {
        return Err(EvalError::Format("n_values is empty".into()));
    }
    let mut rows = Vec::new();
    let mut traces = Vec::new();
    for &n in n_values {
        let generated = generate(ws, qg, n, config.genq.k, stage_seed(seed, "genq"))?;
        let result = run_dsi_qg(ws, config, &generated, Some(n), seed)?;
        rows.push(SweepRow {
            n,
            hits_at_1: result.report.hits_at_1,
            hits_at_10: result.report.hits_at_10,
            num_generated: generated.len(),
        });
        traces.push(result.trace);
    }
    Ok(SweepResult { rows, traces })
}

/// BM25 over `docs`, evaluated on the workspace dev queries.
pub fn evaluate_bm25(
    ws: &Workspace,
    config: &RunConfig,
    docs: &[crate::text::Document],
    model_id: &str,
) -> Result<EvalReport, EvalError> {
    let index = InvertedIndex::build(docs)?;
    let rankings: Vec<_> = ws
        .corpus
        .dev_queries
        .iter()
        .zip(&ws.dev_queries)
        .map(|(q, eq)| bm25_search(&q.text, &index, config.bm25, config.eval.beam_width).with_query_id(eq.id))
        .collect();
    EvalReport::from_rankings(&ws.dev_queries, &rankings, ws.meta(model_id, None, config.seed))
}

/// BM25 over documents expanded with generated queries.
pub fn evaluate_doctquery(
    ws: &Workspace,
    config: &RunConfig,
    generated: &[Query],
) -> Result<EvalReport, EvalError> {
    let expanded = doctquery_expand(&ws.corpus.documents, generated)?;
    evaluate_bm25(ws, config, &expanded, "doctquery-bm25")
}
