//! Error correction: an LDPC syndrome plus a 2-universal verification tag,
//! sent through the private channel so that nothing about the key leaks.

use rand::RngCore;

use crate::bits::BitString;
use crate::budget::{binary_entropy, MAX_CHSH};
use crate::error::{Error, Result};
use crate::hashfam::{hash, HashParams};
use crate::qkdsim::config::{wilson_upper, Layout, SimConfig, EC_STATS_BITS};
use crate::qkdsim::ldpc::Ldpc;

/// Conservative error rate for sizing the syndrome: the upper Wilson bound
/// on `errors / samples`.
pub fn design_error_rate(errors: usize, samples: usize, z: f64) -> f64 {
    wilson_upper(errors, samples, z).min(0.5)
}

/// Syndrome size class for design error rate `q`: `ceil(eta N h(q))` bits,
/// rounded up to the class step and capped at the largest class.
pub fn syndrome_class(layout: &Layout, cfg: &SimConfig, q: f64) -> usize {
    let h = binary_entropy(q.clamp(0.0, 0.5)).expect("q in range");
    let bits = (cfg.ec_efficiency * layout.n_sifted as f64 * h).ceil() as usize;
    bits.div_ceil(layout.syndrome_step).clamp(1, layout.max_class)
}

/// Error rate the decoder assumes for a class: the `q` whose design size
/// equals the class size.
pub fn decoder_prior(layout: &Layout, cfg: &SimConfig, class: usize) -> f64 {
    let target = (class * layout.syndrome_step) as f64 / (cfg.ec_efficiency * layout.n_sifted as f64);
    if target >= 1.0 {
        return 0.5;
    }
    let (mut lo, mut hi) = (0.0f64, 0.5f64);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if binary_entropy(mid).expect("in range") < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `trunc(key * seed, tag_bits)` over GF(2^N).
pub fn verification_tag(key: &BitString, seed: &BitString, tag_bits: usize) -> Result<BitString> {
    hash(key, seed, &HashParams::with_degree(key.len(), tag_bits)?)
}

pub fn quantize_q(q: f64) -> u16 {
    (q.clamp(0.0, 1.0) * 65535.0).round() as u16
}

pub fn dequantize_q(v: u16) -> f64 {
    v as f64 / 65535.0
}

/// Maps `[0, 2 sqrt 2]` onto 16 bits; values outside are clamped.
pub fn quantize_s(s: f64) -> u16 {
    (s.clamp(0.0, MAX_CHSH) / MAX_CHSH * 65535.0).round() as u16
}

pub fn dequantize_s(v: u16) -> f64 {
    v as f64 / 65535.0 * MAX_CHSH
}

/// Contents of Bob's error-correction message.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EcBundle {
    pub syndrome: BitString,
    pub q16: u16,
    pub s16: u16,
    pub tag: BitString,
}

impl EcBundle {
    /// `syndrome | q16 | s16 | tag`, integers little-endian.
    pub fn to_bits(&self) -> BitString {
        let stats = BitString::from_u64(EC_STATS_BITS, self.q16 as u64 | (self.s16 as u64) << 16)
            .expect("fits");
        self.syndrome.concat(&stats).concat(&self.tag)
    }

    pub fn from_bits(bits: &BitString, syndrome_bits: usize, tag_bits: usize) -> Result<Self> {
        let want = syndrome_bits + EC_STATS_BITS + tag_bits;
        if bits.len() != want {
            return Err(Error::SizeMismatch {
                expected: want,
                found: bits.len(),
            });
        }
        let stats = bits.slice(syndrome_bits, EC_STATS_BITS).to_u64();
        Ok(EcBundle {
            syndrome: bits.slice(0, syndrome_bits),
            q16: stats as u16,
            s16: (stats >> 16) as u16,
            tag: bits.slice(syndrome_bits + EC_STATS_BITS, tag_bits),
        })
    }
}

/// Alice's side of error correction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EcOutcome {
    /// Decoder output, if it converged.
    pub corrected: Option<BitString>,
    /// Whether the corrected key matches Bob's tag.
    pub verified: bool,
}

/// Decodes Alice's raw key towards Bob's and checks the tag.
pub fn reconcile(
    alice_raw: &BitString,
    code: &Ldpc,
    syndrome_b: &BitString,
    tag_b: &BitString,
    tag_seed: &BitString,
    prior: f64,
    max_iterations: usize,
) -> Result<EcOutcome> {
    let corrected = code.decode(alice_raw, syndrome_b, prior, max_iterations);
    let verified = match &corrected {
        Some(k) => &verification_tag(k, tag_seed, tag_b.len())? == tag_b,
        None => false,
    };
    Ok(EcOutcome { corrected, verified })
}

/// Both sides of error correction in one call: Bob's syndrome and tag for a
/// design error rate `q_design`, then Alice's decoding and verification.
pub fn error_correct<R: RngCore + ?Sized>(
    alice_raw: &BitString,
    bob_raw: &BitString,
    q_design: f64,
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<EcOutcome> {
    if alice_raw.len() != bob_raw.len() || alice_raw.len() != cfg.n_sifted {
        return Err(Error::SizeMismatch {
            expected: cfg.n_sifted,
            found: alice_raw.len().max(bob_raw.len()),
        });
    }
    let layout = cfg.layout();
    let class = syndrome_class(&layout, cfg, q_design);
    let code = Ldpc::new(cfg.n_sifted, class * layout.syndrome_step, rng.next_u64());
    let tag_seed = BitString::random(cfg.n_sifted, rng);
    let syndrome = code.syndrome(bob_raw);
    let tag = verification_tag(bob_raw, &tag_seed, layout.tag_bits)?;
    reconcile(
        alice_raw,
        &code,
        &syndrome,
        &tag,
        &tag_seed,
        decoder_prior(&layout, cfg, class),
        cfg.ec_max_iterations,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundle_round_trip() {
        let mut rng = rand::thread_rng();
        let b = EcBundle {
            syndrome: BitString::random(128, &mut rng),
            q16: 1234,
            s16: 65000,
            tag: BitString::random(32, &mut rng),
        };
        assert_eq!(EcBundle::from_bits(&b.to_bits(), 128, 32).unwrap(), b);
    }

    #[test]
    fn quantization() {
        assert_eq!(quantize_s(10.0), 65535);
        assert!((dequantize_s(quantize_s(2.5)) - 2.5).abs() < 1e-4);
        assert_eq!(dequantize_q(quantize_q(0.0)), 0.0);
        for k in 0..=120 {
            let q = k as f64 / 120.0;
            assert_eq!((dequantize_q(quantize_q(q)) * 120.0).round() as usize, k);
        }
    }

    #[test]
    fn prior_inverts_class_size() {
        let cfg = SimConfig::default();
        let layout = cfg.layout();
        for q in [0.01, 0.03, 0.08] {
            let c = syndrome_class(&layout, &cfg, q);
            let p = decoder_prior(&layout, &cfg, c);
            assert!(p >= q - 1e-9 && p < q + 0.02, "q={q} p={p}");
        }
    }
}
