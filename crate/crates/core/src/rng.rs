//! Random number sources.
//!
//! With `IPC_SEED` set to a decimal `u64`, every generator is a ChaCha20
//! stream derived from that seed and a role tag, so runs are reproducible.
//! Without it, generators are seeded from the operating system.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const SEED_ENV: &str = "IPC_SEED";

pub type Rng = ChaCha20Rng;

/// The seed from `IPC_SEED`, if set.
pub fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse::<u64>()
            .map(Some)
            .map_err(|_| Error::Config(format!("{SEED_ENV} must be a decimal u64, got {s:?}"))),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(Error::Config(format!("{SEED_ENV}: {e}"))),
    }
}

/// Deterministic generator for `(seed, tag)`; distinct tags give independent streams.
pub fn derive(seed: u64, tag: &str) -> Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(tag.as_bytes());
    let digest: [u8; 32] = h.finalize().into();
    Rng::from_seed(digest)
}

/// A generator for `tag`: derived from `seed` when given, else from OS entropy.
pub fn make(seed: Option<u64>, tag: &str) -> Rng {
    match seed {
        Some(s) => derive(s, tag),
        None => Rng::from_entropy(),
    }
}

/// [`make`] with the seed taken from `IPC_SEED`.
pub fn from_env(tag: &str) -> Result<Rng> {
    Ok(make(env_seed()?, tag))
}
