//! Seed derivation and content fingerprints.

use sha2::{Digest, Sha256};

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable sub-seed for job `(a, b)` under `master`. Independent of the order
/// in which jobs run.
pub fn derive_seed(master: u64, a: u64, b: u64) -> u64 {
    let h = mix(master.wrapping_add(GOLDEN));
    let h = mix(h ^ a.wrapping_mul(GOLDEN).wrapping_add(1));
    mix(h ^ b.wrapping_mul(GOLDEN).wrapping_add(2))
}

/// First 16 hex digits of the SHA-256 of `text`.
pub fn fingerprint(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}
