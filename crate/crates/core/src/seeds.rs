//! Hierarchical seeding: a master seed fans out into independent stage seeds
//! so that any stage can be rerun on its own and reproduce bit-for-bit.

/// One round of splitmix64.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed for a named stage under `master`, e.g. `stage_seed(7, "train-qg")`.
pub fn stage_seed(master: u64, label: &str) -> u64 {
    // FNV-1a over the label, then mixed with the master seed
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    splitmix64(master ^ splitmix64(h))
}

/// Seed for an indexed cell, e.g. `(docid, language, attempt)` in query generation.
pub fn cell_seed(base: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix64(base), |acc, &p| splitmix64(acc ^ p))
}
