//! Insider-proof private channel: one-time pad with a 2-universal hash of the
//! session key under a fresh public seed.
//!
//! To send `a` (l bits) with a fresh key `k` (n bits, `n > 2l`), Alice draws a
//! uniform seed `r` after `a` is fixed and broadcasts `(c, r)` where
//! `c = a ^ trunc(k · r, l)`. Bob recovers `a = c ^ trunc(k · r, l)`. Even if
//! `a` was chosen by someone who knows `k`, the public pair `(c, r)` is within
//! `eps = sqrt(2^(2l - n))` of uniform.

mod pool;

use std::fmt;

use rand::RngCore;

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::hashfam::{hash, HashParams};
use crate::wire::ChannelPayload;

pub use pool::{KeyOrigin, KeyPool, POOL_MAGIC};

/// Channel security parameter, kept as its base-2 logarithm so that values
/// far below `f64::MIN_POSITIVE` stay meaningful.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct Epsilon {
    log2: f64,
}

impl Epsilon {
    pub fn from_log2(log2: f64) -> Self {
        Epsilon { log2 }
    }

    pub fn log2(&self) -> f64 {
        self.log2
    }

    /// `2^log2`; underflows to 0 below about `2^-1074`.
    pub fn value(&self) -> f64 {
        self.log2.exp2()
    }
}

impl fmt::Display for Epsilon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.log2.fract() == 0.0 {
            write!(f, "2^{}", self.log2 as i64)
        } else {
            write!(f, "2^{}", self.log2)
        }
    }
}

/// `sqrt(2^(2l - n))` for `n > 2l >= 2`.
pub fn channel_epsilon(n: usize, l: usize) -> Result<Epsilon> {
    if l == 0 || n <= 2 * l {
        return Err(Error::InsecureParameters { n, l });
    }
    Ok(Epsilon::from_log2(l as f64 - n as f64 / 2.0))
}

/// Smallest `n` with `sqrt(2^(2l - n)) <= eps_target`, i.e. `2l + ceil(2 log2(1/eps))`.
pub fn required_key_length(l: usize, eps_target: f64) -> Result<usize> {
    if !(eps_target > 0.0 && eps_target < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "target epsilon must lie in (0, 1), got {eps_target}"
        )));
    }
    required_key_length_log2(l, eps_target.log2())
}

/// [`required_key_length`] with the target given as `log2(eps)`, which must be negative.
pub fn required_key_length_log2(l: usize, log2_eps: f64) -> Result<usize> {
    if !(log2_eps < 0.0) || !log2_eps.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "log2 of target epsilon must be negative and finite, got {log2_eps}"
        )));
    }
    if l == 0 {
        return Err(Error::InvalidParameter("message length must be positive".into()));
    }
    let margin = (-2.0 * log2_eps).ceil() as usize;
    Ok(2 * l + margin.max(1))
}

/// Key and message lengths for one channel use.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChannelParams {
    hash: HashParams,
}

impl ChannelParams {
    pub fn new(n: usize, l: usize) -> Result<Self> {
        if l == 0 || n <= 2 * l {
            return Err(Error::InsecureParameters { n, l });
        }
        Ok(ChannelParams {
            hash: HashParams::with_degree(n, l)?,
        })
    }

    /// Parameters for an `l`-bit message with `n - 2l = margin`.
    pub fn with_margin(l: usize, margin: usize) -> Result<Self> {
        Self::new(2 * l + margin, l)
    }

    pub fn n(&self) -> usize {
        self.hash.n()
    }

    pub fn l(&self) -> usize {
        self.hash.out_len()
    }

    pub fn epsilon(&self) -> Epsilon {
        channel_epsilon(self.n(), self.l()).expect("validated at construction")
    }

    pub fn hash_params(&self) -> &HashParams {
        &self.hash
    }
}

/// The public record `(c, r)` of one channel use.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChannelTranscript {
    pub c: BitString,
    pub r: BitString,
}

impl ChannelTranscript {
    pub fn to_payload(&self) -> ChannelPayload {
        ChannelPayload {
            n_bits: self.r.len() as u32,
            l_bits: self.c.len() as u32,
            r: self.r.to_bytes_le(),
            c: self.c.to_bytes_le(),
        }
    }

    pub fn from_payload(p: &ChannelPayload) -> Result<Self> {
        Ok(ChannelTranscript {
            c: BitString::from_bytes_le(p.l_bits as usize, &p.c)?,
            r: BitString::from_bytes_le(p.n_bits as usize, &p.r)?,
        })
    }

    /// A transcript of the right shape with uniformly random contents, for
    /// rounds where no real message is sent.
    pub fn random<R: RngCore + ?Sized>(params: &ChannelParams, rng: &mut R) -> Self {
        ChannelTranscript {
            r: BitString::random(params.n(), rng),
            c: BitString::random(params.l(), rng),
        }
    }
}

fn params_for(a_len: usize, k: &BitString) -> Result<ChannelParams> {
    ChannelParams::new(k.len(), a_len)
}

/// Encrypts `a` under the fresh key `k`, drawing the seed from `rng`.
/// The seed is drawn inside this call, so it is always chosen after `a`.
pub fn encrypt<R: RngCore + ?Sized>(
    a: &BitString,
    k: &BitString,
    rng: &mut R,
) -> Result<ChannelTranscript> {
    let params = params_for(a.len(), k)?;
    let r = BitString::random(params.n(), rng);
    seal(a, k, r, &params)
}

/// Encryption with a caller-chosen seed. Only for fixtures and tests: the
/// security argument needs `r` uniform and independent of `a` and `k`.
pub fn encrypt_with_seed(a: &BitString, k: &BitString, r: &BitString) -> Result<ChannelTranscript> {
    let params = params_for(a.len(), k)?;
    seal(a, k, r.clone(), &params)
}

fn seal(a: &BitString, k: &BitString, r: BitString, params: &ChannelParams) -> Result<ChannelTranscript> {
    let pad = hash(k, &r, params.hash_params())?;
    let c = a.xor(&pad)?;
    Ok(ChannelTranscript { c, r })
}

/// `c ^ trunc(k · r, l)`.
pub fn decrypt(t: &ChannelTranscript, k: &BitString) -> Result<BitString> {
    let params = params_for(t.c.len(), k)?;
    if t.r.len() != k.len() {
        return Err(Error::SizeMismatch {
            expected: k.len(),
            found: t.r.len(),
        });
    }
    let pad = hash(k, &t.r, params.hash_params())?;
    t.c.xor(&pad)
}
