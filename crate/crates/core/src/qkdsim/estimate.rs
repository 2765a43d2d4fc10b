//! Sifting and parameter estimation.

use rand::seq::index;
use rand::RngCore;

use crate::qkdsim::device::Basis;

/// Measurement positions sorted into key and CHSH pools.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Sifted {
    /// Positions with matching settings, in order.
    pub key: Vec<usize>,
    /// Positions whose setting pair enters the CHSH combination.
    pub chsh: Vec<usize>,
}

/// Whether settings `x`, `y` form one of the four CHSH pairs
/// ({0, 1} against {2, 3}, either way round).
pub fn chsh_pair(x: Basis, y: Basis) -> bool {
    (x < 2) != (y < 2)
}

pub fn sift(alice: &[Basis], bob: &[Basis]) -> Sifted {
    let mut s = Sifted::default();
    for (i, (&x, &y)) in alice.iter().zip(bob).enumerate() {
        if x == y {
            s.key.push(i);
        } else if chsh_pair(x, y) {
            s.chsh.push(i);
        }
    }
    s
}

/// `ceil(c0 * log2 n)`.
pub fn pe_sample_size(n: usize, c0: f64) -> usize {
    (c0 * (n as f64).log2()).ceil() as usize
}

/// Hoeffding failure probability `2 exp(-2 m t^2)` for an `m`-sample
/// estimate with deviation `t`.
pub fn hoeffding_epsilon(m: usize, t: f64) -> f64 {
    2.0 * (-2.0 * m as f64 * t * t).exp()
}

/// Publicly announced sample positions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PeIndices {
    /// Indices into the first `N + m` sifted key positions.
    pub key: Vec<u32>,
    /// Raw measurement positions from the CHSH pool.
    pub chsh: Vec<u32>,
}

impl PeIndices {
    /// Draws `m` of `key_len` sifted positions and `m_chsh` of the CHSH pool.
    /// Both lists come out sorted.
    pub fn choose<R: RngCore + ?Sized>(
        key_len: usize,
        chsh_pool: &[usize],
        m: usize,
        m_chsh: usize,
        rng: &mut R,
    ) -> Self {
        let mut key: Vec<u32> = index::sample(rng, key_len, m)
            .into_iter()
            .map(|i| i as u32)
            .collect();
        key.sort_unstable();
        let mut chsh: Vec<u32> = index::sample(rng, chsh_pool.len(), m_chsh)
            .into_iter()
            .map(|i| chsh_pool[i] as u32)
            .collect();
        chsh.sort_unstable();
        PeIndices { key, chsh }
    }

    /// Random lists of the same shape, for rounds without a real estimate.
    pub fn random<R: RngCore + ?Sized>(m: usize, m_chsh: usize, rng: &mut R) -> Self {
        PeIndices {
            key: (0..m).map(|_| rng.next_u32()).collect(),
            chsh: (0..m_chsh).map(|_| rng.next_u32()).collect(),
        }
    }

    /// Whether the lists are strictly increasing, in range, and (for the CHSH
    /// list) drawn from `chsh_pool`.
    pub fn valid_for(&self, key_len: usize, chsh_pool: &[usize]) -> bool {
        let increasing = |v: &[u32]| v.windows(2).all(|w| w[0] < w[1]);
        increasing(&self.key)
            && increasing(&self.chsh)
            && self.key.iter().all(|&i| (i as usize) < key_len)
            && self
                .chsh
                .iter()
                .all(|&i| chsh_pool.binary_search(&(i as usize)).is_ok())
    }
}

/// Raw positions of the key left after removing the sample from the first
/// `key_len` sifted positions.
pub fn remaining_key_positions(sifted_key: &[usize], key_len: usize, sample: &[u32]) -> Vec<usize> {
    let mut drop = vec![false; key_len];
    for &i in sample {
        drop[i as usize] = true;
    }
    sifted_key[..key_len]
        .iter()
        .zip(drop)
        .filter(|(_, d)| !d)
        .map(|(&p, _)| p)
        .collect()
}

/// One CHSH sample: both settings and both outcomes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChshSample {
    pub alice_basis: Basis,
    pub bob_basis: Basis,
    pub alice: bool,
    pub bob: bool,
}

/// `S = E(0,2) - E(0,3) + E(1,2) + E(1,3)`, pooling both orientations of each
/// pair. `None` if some pair has no samples.
pub fn chsh_value(samples: &[ChshSample]) -> Option<f64> {
    // [pair index] = (sum of +-1 products, count); pair = 2*low + (high - 2)
    let mut acc = [(0i64, 0u64); 4];
    for s in samples {
        if !chsh_pair(s.alice_basis, s.bob_basis) {
            continue;
        }
        let (lo, hi) = if s.alice_basis < 2 {
            (s.alice_basis, s.bob_basis)
        } else {
            (s.bob_basis, s.alice_basis)
        };
        let slot = &mut acc[(2 * lo + hi - 2) as usize];
        slot.0 += if s.alice == s.bob { 1 } else { -1 };
        slot.1 += 1;
    }
    if acc.iter().any(|&(_, n)| n == 0) {
        return None;
    }
    let e = |i: usize| acc[i].0 as f64 / acc[i].1 as f64;
    Some(e(0) - e(1) + e(2) + e(3))
}

/// Result of parameter estimation.
#[derive(Clone, Debug, PartialEq)]
pub struct Estimate {
    pub errors: usize,
    pub samples: usize,
    pub q_obs: f64,
    pub s_obs: Option<f64>,
    /// Hoeffding failure probability of the error-rate estimate at margin `t`.
    pub eps_pe_achieved: f64,
}

pub fn parameter_estimate(
    alice_key: &[bool],
    bob_key: &[bool],
    chsh: &[ChshSample],
    margin: f64,
) -> Estimate {
    assert_eq!(alice_key.len(), bob_key.len());
    let errors = alice_key.iter().zip(bob_key).filter(|(a, b)| a != b).count();
    let samples = alice_key.len();
    Estimate {
        errors,
        samples,
        q_obs: if samples == 0 {
            0.0
        } else {
            errors as f64 / samples as f64
        },
        s_obs: chsh_value(chsh),
        eps_pe_achieved: hoeffding_epsilon(samples, margin),
    }
}
