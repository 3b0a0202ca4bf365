use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

/// A deterministic random stream owned by one logical actor.
pub type Stream = ChaCha20Rng;

/// Derive the stream for `(seed, label)`.
///
/// The ChaCha key is the SHA-256 digest of the little-endian seed followed by
/// the label bytes, so equal inputs give equal streams and distinct labels
/// give unrelated keys. Labels look like `"env/agent/3"` or `"fl/round/12"`.
pub fn rng_stream(seed: u64, label: &str) -> Stream {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(label.as_bytes());
    let key: [u8; 32] = hasher.finalize().into();
    ChaCha20Rng::from_seed(key)
}
