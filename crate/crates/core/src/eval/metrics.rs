use super::RankedList;
use crate::text::DocId;

/// Whether `gold` appears among the first `k` entries. An empty ranking is a miss.
pub fn hits_at_k(ranked: &RankedList, gold: DocId, k: usize) -> bool {
    ranked.entries().iter().take(k).any(|e| e.docid == gold)
}

/// Multi-gold variant: a hit if any of `golds` is in the top `k`.
pub fn hits_at_k_any(ranked: &RankedList, golds: &[DocId], k: usize) -> bool {
    ranked.entries().iter().take(k).any(|e| golds.contains(&e.docid))
}

/// Mean Hits@k over (ranking, gold set) pairs; `None` when there are no pairs.
pub fn mean_hits_at_k<'a>(pairs: impl IntoIterator<Item = (&'a RankedList, &'a [DocId])>, k: usize) -> Option<f64> {
    let (mut hits, mut total) = (0usize, 0usize);
    for (ranked, golds) in pairs {
        hits += hits_at_k_any(ranked, golds, k) as usize;
        total += 1;
    }
    (total > 0).then(|| hits as f64 / total as f64)
}
