//! Fixed-width decimal docid strings and the trie used to constrain decoding.

use std::collections::BTreeMap;

use super::vocab::{digit_token, token_digit, TokenId, EOS};
use super::TextError;

pub type DocId = u32;

/// Number of decimal digits needed to write every docid up to `max_docid`.
pub fn width_for(max_docid: DocId) -> usize {
    max_docid.checked_ilog10().map_or(1, |l| l as usize + 1)
}

/// Encodes `docid` as `width` zero-padded digit tokens followed by EOS.
pub fn encode_docid(docid: DocId, width: usize) -> Result<Vec<TokenId>, TextError> {
    if width == 0 || width > 9 || docid as u64 >= 10u64.pow(width as u32) {
        return Err(TextError::DocidCapacity { docid, width });
    }
    let digits = format!("{docid:0width$}");
    let mut out: Vec<TokenId> = digits.bytes().map(|b| digit_token(b - b'0')).collect();
    out.push(EOS);
    Ok(out)
}

/// Inverse of [`encode_docid`]. A trailing EOS is optional.
pub fn decode_docid(tokens: &[TokenId]) -> Result<DocId, TextError> {
    let body = match tokens.split_last() {
        Some((&EOS, rest)) => rest,
        _ => tokens,
    };
    if body.is_empty() || body.len() > 9 {
        return Err(TextError::InvalidDocid(tokens.to_vec()));
    }
    body.iter().try_fold(0u32, |acc, &t| {
        token_digit(t)
            .map(|d| acc * 10 + d as u32)
            .ok_or_else(|| TextError::InvalidDocid(tokens.to_vec()))
    })
}

pub type NodeId = usize;

#[derive(Clone, Debug, Default)]
struct TrieNode {
    children: BTreeMap<TokenId, NodeId>,
    docid: Option<DocId>,
}

/// Prefix tree over the encoded docids of a corpus.
///
/// Edges are docid tokens including the final EOS, so terminal nodes are
/// exactly the nodes reached by an EOS edge and never have children.
#[derive(Clone, Debug)]
pub struct DocidTrie {
    nodes: Vec<TrieNode>,
    width: usize,
    count: usize,
}

impl DocidTrie {
    pub const ROOT: NodeId = 0;

    pub fn build(docids: impl IntoIterator<Item = DocId>, width: usize) -> Result<Self, TextError> {
        let mut trie = Self {
            nodes: vec![TrieNode::default()],
            width,
            count: 0,
        };
        for docid in docids {
            let path = encode_docid(docid, width)?;
            let mut node = Self::ROOT;
            for &tok in &path {
                let next = trie.nodes.len();
                node = *trie.nodes[node].children.entry(tok).or_insert(next);
                if node == next {
                    trie.nodes.push(TrieNode::default());
                }
            }
            if trie.nodes[node].docid.replace(docid).is_some() {
                return Err(TextError::DuplicateDocid(docid));
            }
            trie.count += 1;
        }
        Ok(trie)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Number of docids stored.
    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn child(&self, node: NodeId, token: TokenId) -> Option<NodeId> {
        self.nodes[node].children.get(&token).copied()
    }

    /// Outgoing edges of `node` in ascending token order.
    pub fn children(&self, node: NodeId) -> impl Iterator<Item = (TokenId, NodeId)> + '_ {
        self.nodes[node].children.iter().map(|(&t, &n)| (t, n))
    }

    pub fn terminal(&self, node: NodeId) -> Option<DocId> {
        self.nodes[node].docid
    }

    pub fn walk(&self, prefix: &[TokenId]) -> Option<NodeId> {
        prefix.iter().try_fold(Self::ROOT, |n, &t| self.child(n, t))
    }

    /// Tokens that extend `prefix` towards some valid docid; empty when the
    /// prefix is not in the trie or is already complete.
    pub fn allowed_next(&self, prefix: &[TokenId]) -> Vec<TokenId> {
        self.walk(prefix)
            .map(|n| self.nodes[n].children.keys().copied().collect())
            .unwrap_or_default()
    }

    pub fn contains(&self, docid: DocId) -> bool {
        encode_docid(docid, self.width)
            .ok()
            .and_then(|p| self.walk(&p))
            .and_then(|n| self.terminal(n))
            == Some(docid)
    }

    /// All stored docids in ascending order.
    pub fn docids(&self) -> Vec<DocId> {
        let mut out = Vec::with_capacity(self.count);
        let mut stack = vec![Self::ROOT];
        while let Some(n) = stack.pop() {
            if let Some(d) = self.nodes[n].docid {
                out.push(d);
            }
            stack.extend(self.nodes[n].children.values().rev());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn d(c: char) -> TokenId {
        digit_token(c.to_digit(10).unwrap() as u8)
    }

    #[test]
    fn zero_padded_with_eos() {
        assert_eq!(encode_docid(7, 3).unwrap(), vec![d('0'), d('0'), d('7'), EOS]);
        assert_eq!(encode_docid(0, 1).unwrap(), vec![d('0'), EOS]);
    }

    #[test]
    fn capacity_error() {
        assert!(matches!(
            encode_docid(1000, 3),
            Err(TextError::DocidCapacity { docid: 1000, width: 3 })
        ));
    }

    #[test]
    fn width_for_counts_digits() {
        assert_eq!(width_for(0), 1);
        assert_eq!(width_for(9), 1);
        assert_eq!(width_for(10), 2);
        assert_eq!(width_for(99), 2);
        assert_eq!(width_for(100), 3);
    }

    #[test]
    fn round_trip_all_width_four() {
        for x in 0..10_000 {
            assert_eq!(decode_docid(&encode_docid(x, 4).unwrap()).unwrap(), x);
        }
    }

    #[test]
    fn allowed_next_examples() {
        let t = DocidTrie::build([0, 1], 1).unwrap();
        assert_eq!(t.allowed_next(&[]), vec![d('0'), d('1')]);

        let t = DocidTrie::build([0, 1, 10], 2).unwrap();
        assert_eq!(t.allowed_next(&[d('1')]), vec![d('0')]);
        assert_eq!(t.allowed_next(&[d('1'), d('0')]), vec![EOS]);
        assert!(t.allowed_next(&[d('1'), d('0'), EOS]).is_empty());
        assert!(t.allowed_next(&[d('2')]).is_empty());
    }

    #[test]
    fn duplicate_docid_rejected() {
        assert!(matches!(DocidTrie::build([3, 4, 3], 2), Err(TextError::DuplicateDocid(3))));
    }

    #[test]
    fn membership_matches_hash_set() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ids: HashSet<DocId> = (0..1000).map(|_| rng.gen_range(0..10_000)).collect();
        let t = DocidTrie::build(ids.iter().copied(), 4).unwrap();
        assert_eq!(t.len(), ids.len());
        for x in 0..10_000 {
            assert_eq!(t.contains(x), ids.contains(&x), "docid {x}");
        }
        let mut sorted: Vec<_> = ids.into_iter().collect();
        sorted.sort_unstable();
        assert_eq!(t.docids(), sorted);
    }

    proptest! {
        #[test]
        fn codec_is_bijective(x in 0u32..1_000_000, extra in 0usize..3) {
            let w = width_for(x) + extra;
            prop_assert_eq!(decode_docid(&encode_docid(x, w).unwrap()).unwrap(), x);
        }

        #[test]
        fn trie_is_prefix_free_and_non_dead_ended(ids in prop::collection::btree_set(0u32..1000, 1..60)) {
            let t = DocidTrie::build(ids.iter().copied(), 3).unwrap();
            for &x in &ids {
                let path = encode_docid(x, 3).unwrap();
                for cut in 0..path.len() {
                    prop_assert!(!t.allowed_next(&path[..cut]).is_empty());
                }
                let end = t.walk(&path).unwrap();
                prop_assert_eq!(t.terminal(end), Some(x));
                prop_assert_eq!(t.children(end).count(), 0);
            }
        }
    }
}
