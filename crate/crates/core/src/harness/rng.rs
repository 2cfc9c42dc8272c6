//! Named random streams.
//!
//! Each stream is a ChaCha8 generator keyed by a SHA-256 digest of
//! `(seed, scope, name)`. Streams never share state, so adding an agent or
//! drawing more from one stream leaves every other stream untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Environment draws are shared by every agent under the same seed.
pub const ENVIRONMENT: &str = "environment";
pub const REWARD: &str = "reward";
pub const BELIEF: &str = "belief";
pub const ACTION: &str = "action";

pub fn derive_stream(seed: u64, scope: &str, name: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(b"blasts/stream/v1");
    hasher.update(seed.to_le_bytes());
    for part in [scope, name] {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part.as_bytes());
    }
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}
