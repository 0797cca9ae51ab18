//! Greedy decoding, trie-constrained beam search over docids, and top-k
//! sampling. All three are driven through [`NextTokenLogProbs`] so they can run
//! against the transformer or against a hand-written distribution.

use std::cmp::Ordering;

use rand::Rng;

use super::{ModelError, Seq2SeqModel};
use crate::eval::RankedList;
use crate::text::{DocId, DocidTrie, NodeId, TokenId, EOS};

/// Next-token log-probabilities given what has been generated so far.
pub trait NextTokenLogProbs {
    /// One log-probability vector per prefix. Prefixes exclude BOS.
    fn next_log_probs(&self, prefixes: &[Vec<TokenId>]) -> Result<Vec<Vec<f64>>, ModelError>;
}

/// Encoder output for one source sequence, reusable across decoding steps.
pub struct EncodedSource<'m> {
    model: &'m Seq2SeqModel,
    rows: Vec<f32>,
    len: usize,
}

impl Seq2SeqModel {
    /// Runs the encoder in evaluation mode. An empty source is replaced by `[EOS]`.
    pub fn encode_source(&self, src: &[TokenId]) -> Result<EncodedSource<'_>, ModelError> {
        let src = if src.is_empty() { vec![EOS] } else { src.to_vec() };
        let mut fw = self.forward(None);
        let memory = fw.encode(&[src])?;
        Ok(EncodedSource {
            model: self,
            rows: fw.tape.value(memory.var).to_vec(),
            len: memory.len,
        })
    }

    pub fn beam_search_docids(
        &self,
        query: &[TokenId],
        trie: &DocidTrie,
        options: BeamOptions,
    ) -> Result<RankedList, ModelError> {
        beam_search_docids(&self.encode_source(query)?, trie, options)
    }

    pub fn sample_top_k<R: Rng + ?Sized>(
        &self,
        prompt: &[TokenId],
        k: usize,
        max_len: usize,
        rng: &mut R,
    ) -> Result<Vec<TokenId>, ModelError> {
        let max_len = max_len.min(self.config().max_tgt_len - 1);
        sample_top_k(&self.encode_source(prompt)?, k, max_len, rng)
    }

    pub fn greedy(&self, prompt: &[TokenId], max_len: usize) -> Result<Vec<TokenId>, ModelError> {
        let max_len = max_len.min(self.config().max_tgt_len - 1);
        greedy(&self.encode_source(prompt)?, max_len)
    }
}

impl NextTokenLogProbs for EncodedSource<'_> {
    fn next_log_probs(&self, prefixes: &[Vec<TokenId>]) -> Result<Vec<Vec<f64>>, ModelError> {
        if prefixes.is_empty() {
            return Ok(Vec::new());
        }
        let mut fw = self.model.forward(None);
        let memory = fw.repeat_memory(&self.rows, self.len, prefixes.len())?;
        let dec_in: Vec<Vec<TokenId>> = prefixes
            .iter()
            .map(|p| {
                let mut v = Vec::with_capacity(p.len() + 1);
                v.push(crate::text::BOS);
                v.extend_from_slice(p);
                v
            })
            .collect();
        let (logits, len) = fw.decode(&memory, &dec_in)?;
        let vocab = self.model.config().vocab_size;
        let values = fw.tape.value(logits);
        Ok(prefixes
            .iter()
            .enumerate()
            .map(|(b, p)| {
                let row = &values[(b * len + p.len()) * vocab..][..vocab];
                log_softmax(row)
            })
            .collect())
    }
}

pub fn log_softmax(logits: &[f32]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let lse = logits.iter().map(|&x| (x as f64 - max).exp()).sum::<f64>().ln() + max;
    logits.iter().map(|&x| x as f64 - lse).collect()
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    values.map(|v| (v - max).exp()).sum::<f64>().ln() + max
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BeamOptions {
    pub width: usize,
    /// Rescale next-token probabilities over the trie-allowed tokens. When
    /// off, disallowed mass is simply dropped.
    pub renormalize: bool,
}

impl BeamOptions {
    pub fn new(width: usize) -> Self {
        Self {
            width,
            renormalize: true,
        }
    }
}

impl Default for BeamOptions {
    fn default() -> Self {
        Self::new(10)
    }
}

/// A partial docid on the beam.
#[derive(Clone, Debug, PartialEq)]
pub struct BeamHypothesis {
    pub prefix: Vec<TokenId>,
    pub log_prob: f64,
    pub finished: bool,
    node: NodeId,
}

fn by_score_then_prefix(a: &BeamHypothesis, b: &BeamHypothesis) -> Ordering {
    b.log_prob
        .partial_cmp(&a.log_prob)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.prefix.cmp(&b.prefix))
}

/// Beam search restricted to trie paths. Every returned docid is in the trie;
/// scores are full-sequence probabilities, sorted descending with ties broken
/// by ascending docid.
pub fn beam_search_docids<D: NextTokenLogProbs + ?Sized>(
    dist: &D,
    trie: &DocidTrie,
    options: BeamOptions,
) -> Result<RankedList, ModelError> {
    if options.width == 0 {
        return Err(ModelError::Decode("beam width must be positive".into()));
    }
    if trie.is_empty() {
        return Err(ModelError::Decode("docid trie is empty".into()));
    }
    let mut beam = vec![BeamHypothesis {
        prefix: Vec::new(),
        log_prob: 0.0,
        finished: false,
        node: DocidTrie::ROOT,
    }];
    let mut finished: Vec<BeamHypothesis> = Vec::new();
    while !beam.is_empty() {
        let prefixes: Vec<Vec<TokenId>> = beam.iter().map(|h| h.prefix.clone()).collect();
        let dists = dist.next_log_probs(&prefixes)?;
        let mut candidates = Vec::new();
        for (hyp, lp) in beam.iter().zip(&dists) {
            let allowed: Vec<(TokenId, NodeId)> = trie.children(hyp.node).collect();
            let norm = if options.renormalize {
                log_sum_exp(allowed.iter().map(|&(t, _)| lp[t as usize]))
            } else {
                0.0
            };
            for (tok, child) in allowed {
                let step = if norm == f64::NEG_INFINITY {
                    // every allowed token underflowed; treat them as equally likely
                    -(trie.children(hyp.node).count() as f64).ln()
                } else {
                    lp[tok as usize] - norm
                };
                let mut prefix = hyp.prefix.clone();
                prefix.push(tok);
                candidates.push(BeamHypothesis {
                    prefix,
                    log_prob: hyp.log_prob + step,
                    finished: trie.terminal(child).is_some(),
                    node: child,
                });
            }
        }
        candidates.sort_by(by_score_then_prefix);
        candidates.truncate(options.width);
        let (done, open): (Vec<_>, Vec<_>) = candidates.into_iter().partition(|h| h.finished);
        finished.extend(done);
        beam = open;
    }
    finished.sort_by(by_score_then_prefix);
    finished.truncate(options.width);
    let entries = finished
        .iter()
        .map(|h| {
            let docid: DocId = trie.terminal(h.node).expect("finished hypotheses end on a terminal");
            (docid, h.log_prob.exp())
        })
        .collect();
    Ok(RankedList::from_sorted(entries))
}

/// The `k` most likely tokens (ties to the lower id) with their probability
/// mass rescaled to sum to one.
pub fn top_k_distribution(log_probs: &[f64], k: usize) -> Vec<(TokenId, f64)> {
    let mut order: Vec<usize> = (0..log_probs.len()).collect();
    order.sort_by(|&a, &b| {
        log_probs[b]
            .partial_cmp(&log_probs[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    order.truncate(k.max(1));
    let norm = log_sum_exp(order.iter().map(|&i| log_probs[i]));
    order
        .into_iter()
        .map(|i| (i as TokenId, (log_probs[i] - norm).exp()))
        .collect()
}

/// Draws one token from a renormalized top-k distribution.
pub fn draw<R: Rng + ?Sized>(support: &[(TokenId, f64)], rng: &mut R) -> TokenId {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for &(t, p) in support {
        acc += p;
        if u < acc {
            return t;
        }
    }
    support.last().expect("non-empty support").0
}

/// Top-k sampling until EOS or `max_len` tokens. The EOS is not returned.
pub fn sample_top_k<D: NextTokenLogProbs + ?Sized, R: Rng + ?Sized>(
    dist: &D,
    k: usize,
    max_len: usize,
    rng: &mut R,
) -> Result<Vec<TokenId>, ModelError> {
    sample_top_k_traced(dist, k, max_len, rng, None)
}

/// As [`sample_top_k`], optionally recording the allowed set at every step.
pub fn sample_top_k_traced<D: NextTokenLogProbs + ?Sized, R: Rng + ?Sized>(
    dist: &D,
    k: usize,
    max_len: usize,
    rng: &mut R,
    mut supports: Option<&mut Vec<Vec<TokenId>>>,
) -> Result<Vec<TokenId>, ModelError> {
    if k == 0 {
        return Err(ModelError::Decode("k must be positive".into()));
    }
    let mut out: Vec<TokenId> = Vec::new();
    while out.len() < max_len {
        let lp = dist.next_log_probs(std::slice::from_ref(&out))?.remove(0);
        let support = top_k_distribution(&lp, k);
        let tok = draw(&support, rng);
        debug_assert!(support.iter().any(|&(t, _)| t == tok));
        if let Some(s) = supports.as_deref_mut() {
            s.push(support.iter().map(|&(t, _)| t).collect());
        }
        if tok == EOS {
            break;
        }
        out.push(tok);
    }
    Ok(out)
}

/// Argmax decoding until EOS or `max_len` tokens.
pub fn greedy<D: NextTokenLogProbs + ?Sized>(dist: &D, max_len: usize) -> Result<Vec<TokenId>, ModelError> {
    let mut out: Vec<TokenId> = Vec::new();
    while out.len() < max_len {
        let lp = dist.next_log_probs(std::slice::from_ref(&out))?.remove(0);
        let (best, _) = lp
            .iter()
            .enumerate()
            .fold((0usize, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        if best as TokenId == EOS {
            break;
        }
        out.push(best as TokenId);
    }
    Ok(out)
}
