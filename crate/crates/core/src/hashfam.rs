//! The hash family `f_r(k) = trunc(k · r, l)` over GF(2^n) and exact
//! enumeration oracles for its collision and uniformity properties.
//!
//! The enumeration functions return exact rationals. For fixed `r` the map
//! `k -> trunc(k · r, l)` is GF(2)-linear, which the counting engine uses to
//! avoid field multiplications in its inner loops.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::One;
use rayon::prelude::*;

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::gf2n::{field_for_degree, gf_mul, truncate, FieldSpec};

/// Largest `n` for which seed-space enumeration is attempted.
pub const ENUMERATION_LIMIT: usize = 20;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HashParams {
    field: FieldSpec,
    out_len: usize,
}

impl HashParams {
    pub fn new(field: FieldSpec, out_len: usize) -> Result<Self> {
        let n = field.degree();
        if out_len == 0 || out_len >= n {
            return Err(Error::InvalidParameter(format!(
                "hash output length must satisfy 1 <= l < n, got l = {out_len}, n = {n}"
            )));
        }
        Ok(HashParams { field, out_len })
    }

    /// Parameters over the default field of degree `n`.
    pub fn with_degree(n: usize, out_len: usize) -> Result<Self> {
        Self::new(field_for_degree(n)?, out_len)
    }

    pub fn n(&self) -> usize {
        self.field.degree()
    }

    pub fn out_len(&self) -> usize {
        self.out_len
    }

    pub fn field(&self) -> &FieldSpec {
        &self.field
    }

    fn require_enumerable(&self) -> Result<()> {
        if self.n() > ENUMERATION_LIMIT {
            return Err(Error::EnumerationInfeasible {
                n: self.n(),
                limit: ENUMERATION_LIMIT,
            });
        }
        Ok(())
    }

    /// `trunc(x^j · r, l)` for `j < n`: the images of the unit vectors under
    /// the linear map `k -> trunc(k · r, l)`. Requires `n <= 32`.
    pub(crate) fn columns(&self, r: u64) -> Vec<u64> {
        let mask = low_mask(self.out_len);
        let mut v = r;
        let mut cols = Vec::with_capacity(self.n());
        for _ in 0..self.n() {
            cols.push(v & mask);
            v = self.field.mul_x_small(v);
        }
        cols
    }
}

pub(crate) fn low_mask(bits: usize) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

/// `trunc(k · r, l)`. Symmetric in `k` and `r`.
pub fn hash(k: &BitString, r: &BitString, params: &HashParams) -> Result<BitString> {
    let product = gf_mul(k, r, &params.field)?;
    truncate(&product, params.out_len)
}

fn check_len(x: &BitString, n: usize) -> Result<()> {
    if x.len() != n {
        return Err(Error::SizeMismatch {
            expected: n,
            found: x.len(),
        });
    }
    Ok(())
}

fn pow2(e: usize) -> BigInt {
    BigInt::one() << e
}

/// `#{r : f_r(x1) = f_r(x2)} / 2^n`, by enumerating every seed.
pub fn collision_probability_exhaustive(
    x1: &BitString,
    x2: &BitString,
    params: &HashParams,
) -> Result<BigRational> {
    params.require_enumerable()?;
    let n = params.n();
    check_len(x1, n)?;
    check_len(x2, n)?;
    // f_r(x1) = f_r(x2) iff trunc((x1 ^ x2) · r) = 0.
    let diff = x1.xor(x2)?.to_u64();
    let mask = low_mask(params.out_len);
    let hits = (0..1u64 << n)
        .filter(|&r| params.field.mul_small(diff, r) & mask == 0)
        .count();
    Ok(BigRational::new(BigInt::from(hits), pow2(n)))
}

/// Evaluates `message_fn` on every `k` in `{0,1}^n`, checking output lengths.
pub fn tabulate<F>(message_fn: F, n: usize, out_len: usize) -> Result<Vec<u32>>
where
    F: Fn(&BitString) -> BitString,
{
    if n > ENUMERATION_LIMIT {
        return Err(Error::EnumerationInfeasible {
            n,
            limit: ENUMERATION_LIMIT,
        });
    }
    (0..1u64 << n)
        .map(|k| {
            let m = message_fn(&BitString::from_u64(n, k)?);
            check_len(&m, out_len)?;
            Ok(m.to_u64() as u32)
        })
        .collect()
}

/// Exact total-variation distance between `(f_r(k) ^ m(k), r)` for uniform
/// independent `k, r` and the uniform distribution on `{0,1}^l x {0,1}^n`.
pub fn distance_from_uniform_exhaustive<F>(message_fn: F, params: &HashParams) -> Result<BigRational>
where
    F: Fn(&BitString) -> BitString,
{
    params.require_enumerable()?;
    let table = tabulate(message_fn, params.n(), params.out_len)?;
    distance_from_uniform_table(&table, params)
}

/// [`distance_from_uniform_exhaustive`] with the message function given as a
/// table indexed by `k`.
pub fn distance_from_uniform_table(messages: &[u32], params: &HashParams) -> Result<BigRational> {
    params.require_enumerable()?;
    let n = params.n();
    let l = params.out_len;
    check_table(messages, n, l)?;
    let width = 1usize << l;
    let target = 1i64 << n;
    let total = SeedCounts::new(params, messages, l).fold(|cnt| {
        // cnt[(a << l) | y] = #{k : m(k) = a, f_r(k) = y}; ciphertext is a ^ y.
        let mut per_c = vec![0i64; width];
        for a in 0..width {
            for y in 0..width {
                per_c[a ^ y] += cnt[(a << l) | y];
            }
        }
        per_c
            .iter()
            .map(|&c| ((c << l) - target).unsigned_abs() as u128)
            .sum()
    });
    Ok(BigRational::new(BigInt::from(total), pow2(2 * n + l + 1)))
}

fn check_table(table: &[u32], n: usize, bits: usize) -> Result<()> {
    if table.len() != 1usize << n {
        return Err(Error::SizeMismatch {
            expected: 1 << n,
            found: table.len(),
        });
    }
    if let Some(bad) = table.iter().find(|&&v| (v as u64) >> bits != 0) {
        return Err(Error::InvalidParameter(format!(
            "table value {bad:#x} exceeds {bits} bits"
        )));
    }
    Ok(())
}

/// Whether `tv <= sqrt(2^(2l - n))`, compared exactly by squaring.
pub fn within_channel_bound(tv: &BigRational, n: usize, l: usize) -> bool {
    let e = 2 * l as i64 - n as i64;
    let bound = if e >= 0 {
        BigRational::from_integer(pow2(e as usize))
    } else {
        BigRational::new(BigInt::one(), pow2((-e) as usize))
    };
    tv * tv <= bound
}

/// Counting engine: for every seed `r`, the joint counts
/// `cnt[(a << l) | y] = #{k : label(k) = a, f_r(k) = y}`.
pub(crate) struct SeedCounts<'a> {
    params: &'a HashParams,
    labels: &'a [u32],
    label_bits: usize,
}

impl<'a> SeedCounts<'a> {
    pub(crate) fn new(params: &'a HashParams, labels: &'a [u32], label_bits: usize) -> Self {
        SeedCounts {
            params,
            labels,
            label_bits,
        }
    }

    fn use_spectral(&self) -> bool {
        let n = self.params.n() as u32;
        let l = self.params.out_len as u32;
        let lb = self.label_bits as u32;
        if n + lb > 24 {
            return false;
        }
        let direct = (1u128 << n) * ((1u128 << n) + (1u128 << (lb + l)));
        let spectral = (1u128 << lb) * n as u128 * (1u128 << n)
            + (1u128 << n) * ((l as u128 + 2) * (1u128 << (lb + l)) + (1u128 << l));
        spectral < direct
    }

    /// Sums `per_seed(cnt)` over all seeds. The result does not depend on
    /// how the seed space is split across threads.
    pub(crate) fn fold<F>(&self, per_seed: F) -> u128
    where
        F: Fn(&[i64]) -> u128 + Sync,
    {
        if self.use_spectral() {
            self.fold_spectral(&per_seed)
        } else {
            self.fold_direct(&per_seed)
        }
    }

    fn chunks(&self) -> impl ParallelIterator<Item = std::ops::Range<u64>> {
        let seeds = 1usize << self.params.n();
        let chunk = (seeds / 64).max(1);
        (0..seeds.div_ceil(chunk))
            .into_par_iter()
            .map(move |c| (c * chunk) as u64..((c + 1) * chunk).min(seeds) as u64)
    }

    fn fold_direct<F>(&self, per_seed: &F) -> u128
    where
        F: Fn(&[i64]) -> u128 + Sync,
    {
        let n = self.params.n();
        let l = self.params.out_len;
        let size = 1usize << (self.label_bits + l);
        self.chunks()
            .map(|range| {
                let mut cnt = vec![0i64; size];
                let mut acc = 0u128;
                for r in range {
                    cnt.fill(0);
                    let cols = self.params.columns(r);
                    let mut k = 0usize;
                    let mut y = 0u64;
                    cnt[(self.labels[0] as usize) << l] += 1;
                    for i in 1..1usize << n {
                        let j = i.trailing_zeros() as usize;
                        k ^= 1 << j;
                        y ^= cols[j];
                        cnt[((self.labels[k] as usize) << l) | y as usize] += 1;
                    }
                    acc += per_seed(&cnt);
                }
                acc
            })
            .sum()
    }

    /// Uses `cnt(a, y) = 2^-l sum_s (-1)^(s.y) W_a(M_r^T s)`, where `W_a` is the
    /// Walsh-Hadamard transform of the indicator of `label = a` and `M_r` the
    /// `l x n` matrix of the hash for seed `r`.
    fn fold_spectral<F>(&self, per_seed: &F) -> u128
    where
        F: Fn(&[i64]) -> u128 + Sync,
    {
        let n = self.params.n();
        let l = self.params.out_len;
        let labels_count = 1usize << self.label_bits;
        let width = 1usize << l;

        // spectra[w * labels_count + a] = W_a(w)
        let mut spectra = vec![0i32; (1usize << n) * labels_count];
        let mut ind = vec![0i32; 1usize << n];
        for a in 0..labels_count {
            for (k, v) in ind.iter_mut().enumerate() {
                *v = (self.labels[k] as usize == a) as i32;
            }
            walsh_hadamard(&mut ind);
            for (w, &v) in ind.iter().enumerate() {
                spectra[w * labels_count + a] = v;
            }
        }

        self.chunks()
            .map(|range| {
                let mut cnt = vec![0i64; labels_count * width];
                let mut ws = vec![0usize; width];
                let mut acc = 0u128;
                for r in range {
                    let cols = self.params.columns(r);
                    // rows[i] = set of j with bit i of cols[j]: the transpose.
                    let rows: Vec<usize> = (0..l)
                        .map(|i| {
                            cols.iter()
                                .enumerate()
                                .filter(|(_, &c)| (c >> i) & 1 == 1)
                                .fold(0usize, |m, (j, _)| m | 1 << j)
                        })
                        .collect();
                    for s in 1..width {
                        ws[s] = ws[s & (s - 1)] ^ rows[s.trailing_zeros() as usize];
                    }
                    for (s, &w) in ws.iter().enumerate() {
                        let row = &spectra[w * labels_count..(w + 1) * labels_count];
                        for (a, &v) in row.iter().enumerate() {
                            cnt[a * width + s] = v as i64;
                        }
                    }
                    for block in cnt.chunks_mut(width) {
                        walsh_hadamard(block);
                        for v in block.iter_mut() {
                            debug_assert_eq!(*v % width as i64, 0);
                            *v >>= l;
                        }
                    }
                    acc += per_seed(&cnt);
                }
                acc
            })
            .sum()
    }
}

/// In-place unnormalized Walsh-Hadamard transform; length must be a power of two.
pub(crate) fn walsh_hadamard<T>(v: &mut [T])
where
    T: Copy + std::ops::Add<Output = T> + std::ops::Sub<Output = T>,
{
    let len = v.len();
    debug_assert!(len.is_power_of_two());
    let mut h = 1;
    while h < len {
        for block in v.chunks_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                let (a, b) = (*x, *y);
                *x = a + b;
                *y = a - b;
            }
        }
        h *= 2;
    }
}
