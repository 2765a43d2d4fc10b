//! Privacy amplification by 2-universal hashing.

use crate::bits::BitString;
use crate::budget::RateModel;
use crate::error::{Error, Result};
use crate::hashfam::{hash, HashParams};

/// `floor(N (rate - leak)) - ceil(2 log2(1/eps_pa))`, floored at zero.
pub fn pa_output_length(n: usize, rate: f64, leak: f64, eps_pa: f64) -> usize {
    let margin = (2.0 * (1.0 / eps_pa).log2()).ceil();
    let raw = (n as f64 * (rate - leak)).floor() - margin;
    if raw <= 0.0 {
        0
    } else {
        (raw as usize).min(n.saturating_sub(1))
    }
}

/// Output length for a round with observed CHSH value `s_obs` under `model`.
/// Error correction travels encrypted, so nothing is subtracted for it here.
pub fn round_output_length(n: usize, model: &dyn RateModel, s_obs: f64, eps_pa: f64) -> usize {
    pa_output_length(n, model.rate(s_obs).clamp(0.0, 1.0), 0.0, eps_pa)
}

/// `trunc(key * seed, out_len)` over GF(2^N), `N = |key|`.
pub fn privacy_amplify(key: &BitString, seed: &BitString, out_len: usize) -> Result<BitString> {
    if out_len == 0 || out_len >= key.len() {
        return Err(Error::InvalidParameter(format!(
            "output length {out_len} must lie in 1..{}",
            key.len()
        )));
    }
    hash(key, seed, &HashParams::with_degree(key.len(), out_len)?)
}
