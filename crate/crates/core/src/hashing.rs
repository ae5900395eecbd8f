use sha2::{Digest, Sha256};

/// Hex SHA-256 of `parts` joined with unit separators.
pub fn content_hash<S: AsRef<[u8]>>(parts: &[S]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_ref());
        h.update([0x1f]);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// First 16 hex digits of [`content_hash`].
pub fn short_hash<S: AsRef<[u8]>>(parts: &[S]) -> String {
    content_hash(parts)[..16].to_string()
}

/// SplitMix64 step: decorrelated child seeds from a parent seed and a tag.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
