//! Arithmetic in GF(2^n) in polynomial basis.
//!
//! Elements are [`BitString`]s of exactly `n` bits; bit `i` is the coefficient
//! of `x^i`. Multiplication is a carry-less product followed by reduction
//! modulo a fixed irreducible polynomial of degree `n`. Any `n >= 2` works;
//! limbs are 64-bit words.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::bits::{words_for, BitString};
use crate::error::{Error, Result};

/// Degrees with a built-in modulus. Entries are the exponents of the
/// non-leading terms; every entry is re-checked by `is_irreducible` in tests.
const STANDARD_MODULI: &[(usize, &[usize])] = &[
    (2, &[1, 0]),
    (3, &[1, 0]),
    (4, &[1, 0]),
    (5, &[2, 0]),
    (6, &[1, 0]),
    (7, &[1, 0]),
    (8, &[4, 3, 1, 0]),
    (9, &[1, 0]),
    (10, &[3, 0]),
    (11, &[2, 0]),
    (12, &[3, 0]),
    (13, &[4, 3, 1, 0]),
    (14, &[5, 0]),
    (15, &[1, 0]),
    (16, &[5, 3, 1, 0]),
    (32, &[7, 3, 2, 0]),
    (64, &[4, 3, 1, 0]),
    (128, &[7, 2, 1, 0]),
    (256, &[10, 5, 2, 0]),
    (276, &[63, 0]),
    (512, &[8, 5, 2, 0]),
    (1024, &[19, 6, 1, 0]),
    (2048, &[19, 14, 13, 0]),
    (4096, &[27, 15, 1, 0]),
];

/// Largest degree for which the `u64` fast path ([`FieldSpec::mul_small`]) applies.
pub const SMALL_FIELD_MAX: usize = 32;

#[derive(Clone, Debug)]
enum Reduction {
    /// Fold the high half back using the (low-degree) tail terms.
    Fold(Vec<usize>),
    /// Plain long division, one bit at a time.
    Bitwise,
}

/// A polynomial modulus together with the strategy used to reduce by it.
#[derive(Clone, Debug)]
struct Reducer {
    degree: usize,
    modulus: Vec<u64>,
    strategy: Reduction,
}

impl Reducer {
    fn new(modulus: &[u64]) -> Self {
        let degree = poly_degree(modulus).expect("nonzero modulus");
        let tail: Vec<usize> = (0..degree)
            .filter(|&i| (modulus[i / 64] >> (i % 64)) & 1 == 1)
            .collect();
        let tail_degree = tail.last().copied().unwrap_or(0);
        let strategy = if degree >= 2 && tail_degree <= degree / 2 {
            Reduction::Fold(tail)
        } else {
            Reduction::Bitwise
        };
        Reducer {
            degree,
            modulus: modulus.to_vec(),
            strategy,
        }
    }

    /// Reduces a polynomial of any degree; returns `words_for(degree)` words.
    fn reduce(&self, mut p: Vec<u64>) -> Vec<u64> {
        let n = self.degree;
        match &self.strategy {
            Reduction::Fold(tail) => loop {
                let hi = shr_bits(&p, n);
                if hi.iter().all(|&w| w == 0) {
                    break;
                }
                mask_low_bits(&mut p, n);
                for &t in tail {
                    xor_shifted(&mut p, &hi, t);
                }
            },
            Reduction::Bitwise => {
                if let Some(top) = poly_degree(&p) {
                    for i in (n..=top).rev() {
                        if (p[i / 64] >> (i % 64)) & 1 == 1 {
                            xor_shifted(&mut p, &self.modulus, i - n);
                        }
                    }
                }
            }
        }
        p.resize(words_for(n), 0);
        mask_low_bits(&mut p, n);
        p
    }

    fn mul(&self, a: &[u64], b: &[u64]) -> Vec<u64> {
        self.reduce(poly_mul(a, b))
    }

    fn square(&self, a: &[u64]) -> Vec<u64> {
        self.reduce(poly_square(a))
    }
}

/// An irreducible polynomial of degree `n` defining GF(2^n).
#[derive(Clone, Debug)]
pub struct FieldSpec {
    degree: usize,
    modulus: BitString,
    reducer: Reducer,
}

impl PartialEq for FieldSpec {
    fn eq(&self, other: &Self) -> bool {
        self.modulus == other.modulus
    }
}

impl Eq for FieldSpec {}

impl FieldSpec {
    /// Builds a field from a modulus of `degree + 1` bits with the top bit set.
    /// The modulus must be irreducible; degree 1 is rejected.
    pub fn new(modulus: BitString) -> Result<Self> {
        let degree = modulus.highest_set_bit().unwrap_or(0);
        if modulus.len() != degree + 1 {
            return Err(Error::InvalidParameter(format!(
                "modulus of {} bits must have its top bit set",
                modulus.len()
            )));
        }
        if degree < 2 {
            return Err(Error::InvalidParameter(
                "field degree must be at least 2".into(),
            ));
        }
        if !modulus.bit(0) {
            return Err(Error::InvalidParameter(
                "modulus must have constant coefficient 1".into(),
            ));
        }
        if !is_irreducible(&modulus)? {
            return Err(Error::InvalidParameter(format!(
                "modulus 0x{} is reducible",
                modulus.to_hex()
            )));
        }
        Ok(Self::from_verified(modulus))
    }

    fn from_verified(modulus: BitString) -> Self {
        let degree = modulus.len() - 1;
        let reducer = Reducer::new(modulus.words());
        FieldSpec {
            degree,
            modulus,
            reducer,
        }
    }

    fn from_exponents(degree: usize, tail: &[usize]) -> Self {
        let mut m = BitString::zeros(degree + 1);
        m.set_bit(degree, true);
        for &e in tail {
            m.set_bit(e, true);
        }
        Self::from_verified(m)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// The modulus as a `degree + 1`-bit string.
    pub fn modulus(&self) -> &BitString {
        &self.modulus
    }

    /// Exponents of the modulus terms, highest first (e.g. `[8, 4, 3, 1, 0]`).
    pub fn exponents(&self) -> Vec<usize> {
        (0..=self.degree).rev().filter(|&i| self.modulus.bit(i)).collect()
    }

    fn check(&self, a: &BitString) -> Result<()> {
        if a.len() != self.degree {
            return Err(Error::SizeMismatch {
                expected: self.degree,
                found: a.len(),
            });
        }
        Ok(())
    }

    pub fn mul(&self, a: &BitString, b: &BitString) -> Result<BitString> {
        self.check(a)?;
        self.check(b)?;
        let words = self.reducer.mul(a.words(), b.words());
        Ok(BitString::from_words(self.degree, words))
    }

    pub fn one(&self) -> BitString {
        let mut e = BitString::zeros(self.degree);
        e.set_bit(0, true);
        e
    }

    /// Product of two elements given as integers. Requires `degree <= 32`.
    pub fn mul_small(&self, a: u64, b: u64) -> u64 {
        debug_assert!(self.degree <= SMALL_FIELD_MAX);
        let n = self.degree;
        let m = self.modulus.to_u64();
        let p = clmul64(a, b) as u64;
        let mut p = p;
        for i in (n..2 * n - 1).rev() {
            if (p >> i) & 1 == 1 {
                p ^= m << (i - n);
            }
        }
        p
    }

    /// `v * x` for an element given as an integer. Requires `degree <= 63`.
    pub fn mul_x_small(&self, v: u64) -> u64 {
        let n = self.degree;
        let shifted = v << 1;
        if (shifted >> n) & 1 == 1 {
            shifted ^ self.modulus.to_u64()
        } else {
            shifted
        }
    }
}

/// Product in GF(2^n). Both operands must have exactly `field.degree()` bits.
pub fn gf_mul(a: &BitString, b: &BitString, field: &FieldSpec) -> Result<BitString> {
    field.mul(a, b)
}

/// The `l` low-order bits of `x`, for `1 <= l <= |x|`.
pub fn truncate(x: &BitString, l: usize) -> Result<BitString> {
    if l == 0 || l > x.len() {
        return Err(Error::InvalidParameter(format!(
            "truncation length {l} outside 1..={}",
            x.len()
        )));
    }
    Ok(x.low_bits(l))
}

/// Rabin's test: `f` of degree `n` is irreducible over GF(2) iff
/// `x^(2^n) = x (mod f)` and `gcd(x^(2^(n/p)) - x, f) = 1` for each prime `p | n`.
pub fn is_irreducible(poly: &BitString) -> Result<bool> {
    let n = match poly.highest_set_bit() {
        Some(d) if d >= 1 => d,
        _ => {
            return Err(Error::InvalidParameter(
                "irreducibility needs a polynomial of degree >= 1".into(),
            ))
        }
    };
    if n == 1 {
        return Ok(true);
    }
    let f: Vec<u64> = poly.words()[..words_for(n + 1)].to_vec();
    if f[0] & 1 == 0 {
        // divisible by x
        return Ok(false);
    }
    let red = Reducer::new(&f);
    let mut x = vec![0u64; words_for(n)];
    x[0] = 2;
    let primes = prime_factors(n);
    let checkpoints: Vec<usize> = primes.iter().map(|p| n / p).collect();

    // Factors of degree <= SMALL_FACTOR_CHECK show up in gcd(x^(2^i) - x, f)
    // for small i; most reducible candidates are rejected here cheaply.
    const SMALL_FACTOR_CHECK: usize = 20;
    let mut acc = x.clone();
    for i in 1..=n {
        acc = red.square(&acc);
        if checkpoints.contains(&i) || (i <= SMALL_FACTOR_CHECK && 2 * i <= n) {
            let mut g = acc.clone();
            g[0] ^= 2;
            let d = poly_gcd(f.clone(), g);
            if poly_degree(&d) != Some(0) {
                return Ok(false);
            }
        }
    }
    Ok(acc == x)
}

/// The built-in modulus for degree `n`.
pub fn standard_field(n: usize) -> Result<FieldSpec> {
    STANDARD_MODULI
        .iter()
        .find(|(d, _)| *d == n)
        .map(|(d, tail)| FieldSpec::from_exponents(*d, tail))
        .ok_or(Error::UnsupportedDegree(n))
}

/// Degrees covered by [`standard_field`].
pub fn standard_degrees() -> impl Iterator<Item = usize> {
    STANDARD_MODULI.iter().map(|(d, _)| *d)
}

/// A field of any degree `n >= 2`: the built-in modulus when one exists,
/// otherwise the first irreducible trinomial `x^n + x^k + 1` (smallest `k`),
/// then pentanomial `x^n + x^a + x^b + x^c + 1` (lexicographically smallest
/// `(a, b, c)`), restricted to tails of degree at most `n / 2`.
/// Results are cached; the choice is deterministic.
pub fn field_for_degree(n: usize) -> Result<FieldSpec> {
    if let Ok(f) = standard_field(n) {
        return Ok(f);
    }
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<FieldSpec>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(f) = cache.lock().unwrap().get(&n) {
        return Ok((**f).clone());
    }
    let f = search_field(n)?;
    cache.lock().unwrap().insert(n, Arc::new(f.clone()));
    Ok(f)
}

/// Lowest-weight irreducible modulus of degree `n` in the search order of
/// [`field_for_degree`].
pub fn search_field(n: usize) -> Result<FieldSpec> {
    if n < 2 {
        return Err(Error::InvalidParameter(
            "field degree must be at least 2".into(),
        ));
    }
    let half = (n / 2).max(1);
    let try_tail = |tail: &[usize]| -> Option<FieldSpec> {
        let f = FieldSpec::from_exponents(n, tail);
        match is_irreducible(&f.modulus) {
            Ok(true) => Some(f),
            _ => None,
        }
    };
    // Swan: no trinomial of degree divisible by 8 is irreducible.
    if n % 8 != 0 {
        for k in 1..=half {
            if let Some(f) = try_tail(&[k, 0]) {
                return Ok(f);
            }
        }
    }
    for a in 3..=half {
        for b in 2..a {
            for c in 1..b {
                if let Some(f) = try_tail(&[a, b, c, 0]) {
                    return Ok(f);
                }
            }
        }
    }
    Err(Error::UnsupportedDegree(n))
}

fn prime_factors(mut n: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut p = 2;
    while p * p <= n {
        if n % p == 0 {
            out.push(p);
            while n % p == 0 {
                n /= p;
            }
        }
        p += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

// ---- raw polynomial helpers on little-endian u64 limbs ----

/// Carry-less 64x64 -> 128 bit product using a 4-bit window.
pub(crate) fn clmul64(a: u64, b: u64) -> u128 {
    let mut table = [0u128; 16];
    let a = a as u128;
    for i in 1..16usize {
        table[i] = if i & 1 == 1 {
            table[i - 1] ^ a
        } else {
            table[i >> 1] << 1
        };
    }
    let mut acc = 0u128;
    for nib in (0..16).rev() {
        acc = (acc << 4) ^ table[((b >> (4 * nib)) & 0xf) as usize];
    }
    acc
}

pub(crate) fn poly_mul(a: &[u64], b: &[u64]) -> Vec<u64> {
    let mut out = vec![0u64; a.len() + b.len()];
    for (i, &x) in a.iter().enumerate() {
        if x == 0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            if y == 0 {
                continue;
            }
            let p = clmul64(x, y);
            out[i + j] ^= p as u64;
            out[i + j + 1] ^= (p >> 64) as u64;
        }
    }
    out
}

fn spread_byte(b: u8) -> u16 {
    let mut out = 0u16;
    for i in 0..8 {
        out |= (((b >> i) & 1) as u16) << (2 * i);
    }
    out
}

fn poly_square(a: &[u64]) -> Vec<u64> {
    static SPREAD: OnceLock<[u16; 256]> = OnceLock::new();
    let table = SPREAD.get_or_init(|| {
        let mut t = [0u16; 256];
        for (i, e) in t.iter_mut().enumerate() {
            *e = spread_byte(i as u8);
        }
        t
    });
    let mut out = vec![0u64; 2 * a.len()];
    for (i, &w) in a.iter().enumerate() {
        let bytes = w.to_le_bytes();
        let mut lo = 0u64;
        let mut hi = 0u64;
        for k in 0..4 {
            lo |= (table[bytes[k] as usize] as u64) << (16 * k);
            hi |= (table[bytes[k + 4] as usize] as u64) << (16 * k);
        }
        out[2 * i] = lo;
        out[2 * i + 1] = hi;
    }
    out
}

pub(crate) fn poly_degree(p: &[u64]) -> Option<usize> {
    p.iter()
        .enumerate()
        .rev()
        .find(|(_, &w)| w != 0)
        .map(|(i, &w)| i * 64 + 63 - w.leading_zeros() as usize)
}

/// `dst ^= src << shift`, silently dropping bits past the end of `dst`.
pub(crate) fn xor_shifted(dst: &mut [u64], src: &[u64], shift: usize) {
    let ws = shift / 64;
    let bs = shift % 64;
    for (i, &w) in src.iter().enumerate() {
        if w == 0 {
            continue;
        }
        let j = i + ws;
        if j < dst.len() {
            dst[j] ^= w << bs;
        }
        if bs != 0 && j + 1 < dst.len() {
            dst[j + 1] ^= w >> (64 - bs);
        }
    }
}

fn shr_bits(p: &[u64], shift: usize) -> Vec<u64> {
    let ws = shift / 64;
    let bs = shift % 64;
    if ws >= p.len() {
        return vec![0];
    }
    let mut out = vec![0u64; p.len() - ws];
    for i in 0..out.len() {
        let lo = p[i + ws] >> bs;
        let hi = if bs != 0 && i + ws + 1 < p.len() {
            p[i + ws + 1] << (64 - bs)
        } else {
            0
        };
        out[i] = lo | hi;
    }
    out
}

fn mask_low_bits(p: &mut [u64], bits: usize) {
    let full = bits / 64;
    let rem = bits % 64;
    for (i, w) in p.iter_mut().enumerate() {
        if i > full || (i == full && rem == 0) {
            *w = 0;
        } else if i == full {
            *w &= (1u64 << rem) - 1;
        }
    }
}

fn poly_rem(mut a: Vec<u64>, m: &[u64]) -> Vec<u64> {
    let dm = poly_degree(m).expect("nonzero divisor");
    while let Some(da) = poly_degree(&a) {
        if da < dm {
            break;
        }
        xor_shifted(&mut a, m, da - dm);
    }
    a
}

fn poly_gcd(mut a: Vec<u64>, mut b: Vec<u64>) -> Vec<u64> {
    while poly_degree(&b).is_some() {
        let r = poly_rem(a, &b);
        a = b;
        b = r;
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn el(n: usize, v: u64) -> BitString {
        BitString::from_u64(n, v).unwrap()
    }

    #[test]
    fn aes_field_vectors() {
        let f = standard_field(8).unwrap();
        assert_eq!(f.exponents(), vec![8, 4, 3, 1, 0]);
        assert_eq!(gf_mul(&el(8, 0x02), &el(8, 0x80), &f).unwrap(), el(8, 0x1b));
        assert_eq!(gf_mul(&el(8, 0x53), &el(8, 0xca), &f).unwrap(), el(8, 0x01));
        for a in 0..256 {
            assert_eq!(gf_mul(&el(8, a), &f.one(), &f).unwrap(), el(8, a));
        }
    }

    #[test]
    fn small_standard_fields() {
        assert_eq!(standard_field(4).unwrap().exponents(), vec![4, 1, 0]);
        assert_eq!(standard_field(2).unwrap().exponents(), vec![2, 1, 0]);
        assert!(matches!(standard_field(17), Err(Error::UnsupportedDegree(17))));
        assert!(matches!(standard_field(1), Err(Error::UnsupportedDegree(1))));
    }

    #[test]
    fn size_mismatch_is_reported() {
        let f = standard_field(8).unwrap();
        let err = gf_mul(&el(8, 1), &el(9, 1), &f).unwrap_err();
        assert!(matches!(err, Error::SizeMismatch { expected: 8, found: 9 }));
    }

    #[test]
    fn truncate_examples() {
        assert_eq!(truncate(&el(4, 0b1111), 2).unwrap(), el(2, 0b11));
        assert_eq!(truncate(&el(4, 0b1010), 4).unwrap(), el(4, 0b1010));
        assert_eq!(truncate(&el(4, 0b1010), 1).unwrap(), el(1, 0));
        assert!(truncate(&el(4, 1), 0).is_err());
        assert!(truncate(&el(4, 1), 5).is_err());
    }

    #[test]
    fn irreducibility_examples() {
        assert!(!is_irreducible(&el(3, 0b101)).unwrap());
        assert!(is_irreducible(&el(3, 0b111)).unwrap());
        assert!(is_irreducible(&el(5, 0b10011)).unwrap());
        assert!(is_irreducible(&el(2, 0b10)).unwrap());
        assert!(is_irreducible(&el(1, 0b1)).is_err());
    }

    #[test]
    fn rejects_bad_moduli() {
        assert!(FieldSpec::new(el(5, 0b10101)).is_err()); // x^4+x^2+1 = (x^2+x+1)^2
        assert!(FieldSpec::new(el(2, 0b11)).is_err()); // degree 1
        assert!(FieldSpec::new(el(5, 0b10010)).is_err()); // no constant term
        assert!(FieldSpec::new(el(5, 0b10011)).is_ok());
    }

    #[test]
    fn small_path_matches_general_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [2usize, 5, 8, 13, 16, 32] {
            let f = field_for_degree(n).unwrap();
            let mask = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
            for _ in 0..200 {
                let a = rng.gen::<u64>() & mask;
                let b = rng.gen::<u64>() & mask;
                let general = f.mul(&el(n, a), &el(n, b)).unwrap().to_u64();
                assert_eq!(f.mul_small(a, b), general);
                assert_eq!(f.mul_x_small(a), f.mul(&el(n, a), &el(n, 2)).unwrap().to_u64());
            }
        }
    }

    #[test]
    fn searched_fields_are_irreducible_and_deterministic() {
        for n in [17usize, 24, 100, 333] {
            let f = field_for_degree(n).unwrap();
            assert_eq!(f.degree(), n);
            assert!(is_irreducible(f.modulus()).unwrap());
            assert_eq!(search_field(n).unwrap(), f);
        }
    }
}
