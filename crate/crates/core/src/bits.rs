//! Fixed-length bit strings backed by 64-bit limbs.
//!
//! Bit `i` is the coefficient of `x^i` when a string is read as a polynomial
//! over GF(2). Limb `j` holds bits `64j..64j+63`, least significant first.
//! Bits above `len` are always zero.
//!
//! Byte serialization is little-endian (byte 0 holds bits 0..7). Hex
//! serialization is the human-facing form: lowercase, most significant nibble
//! first, zero-padded to `ceil(len / 4)` digits.

use std::fmt;

use rand::RngCore;
use zeroize::{Zeroize, ZeroizeOnDrop};

use crate::error::{Error, Result};

#[derive(Clone, PartialEq, Eq, Hash, Zeroize, ZeroizeOnDrop)]
pub struct BitString {
    len: usize,
    words: Vec<u64>,
}

pub(crate) fn words_for(bits: usize) -> usize {
    bits.div_ceil(64)
}

impl BitString {
    pub fn zeros(len: usize) -> Self {
        BitString {
            len,
            words: vec![0; words_for(len)],
        }
    }

    /// Builds a string from the low `len` bits of `value`; higher bits must be zero.
    pub fn from_u64(len: usize, value: u64) -> Result<Self> {
        if len < 64 && value >> len != 0 {
            return Err(Error::InvalidParameter(format!(
                "value {value:#x} does not fit in {len} bits"
            )));
        }
        let mut s = Self::zeros(len);
        if len > 0 {
            s.words[0] = value;
        }
        Ok(s)
    }

    pub(crate) fn from_words(len: usize, mut words: Vec<u64>) -> Self {
        words.resize(words_for(len), 0);
        let mut s = BitString { len, words };
        s.clear_tail();
        s
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let mut s = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b {
                s.words[i / 64] |= 1 << (i % 64);
            }
        }
        s
    }

    pub fn random<R: RngCore + ?Sized>(len: usize, rng: &mut R) -> Self {
        let mut words = vec![0u64; words_for(len)];
        for w in words.iter_mut() {
            *w = rng.next_u64();
        }
        Self::from_words(len, words)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub(crate) fn words(&self) -> &[u64] {
        &self.words
    }

    fn clear_tail(&mut self) {
        let rem = self.len % 64;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    pub fn bit(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    pub fn set_bit(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        let mask = 1u64 << (i % 64);
        if value {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.bit(i))
    }

    pub fn to_bools(&self) -> Vec<bool> {
        self.iter().collect()
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Index of the highest set bit, or `None` for the zero string.
    pub fn highest_set_bit(&self) -> Option<usize> {
        self.words
            .iter()
            .enumerate()
            .rev()
            .find(|(_, &w)| w != 0)
            .map(|(i, &w)| i * 64 + 63 - w.leading_zeros() as usize)
    }

    /// Low 64 bits as an integer. Only meaningful for strings of at most 64 bits.
    pub fn to_u64(&self) -> u64 {
        self.words.first().copied().unwrap_or(0)
    }

    pub fn xor(&self, other: &BitString) -> Result<BitString> {
        if self.len != other.len {
            return Err(Error::SizeMismatch {
                expected: self.len,
                found: other.len,
            });
        }
        let words = self
            .words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| a ^ b)
            .collect();
        Ok(BitString {
            len: self.len,
            words,
        })
    }

    /// The `l` low-order bits.
    pub fn low_bits(&self, l: usize) -> BitString {
        let l = l.min(self.len);
        let words = self.words[..words_for(l)].to_vec();
        Self::from_words(l, words)
    }

    /// Bits `start..start + len` as a new string.
    pub fn slice(&self, start: usize, len: usize) -> BitString {
        assert!(start + len <= self.len, "slice out of range");
        let mut out = BitString::zeros(len);
        let shift = start % 64;
        let base = start / 64;
        for j in 0..out.words.len() {
            let lo = self.words.get(base + j).copied().unwrap_or(0) >> shift;
            let hi = if shift == 0 {
                0
            } else {
                self.words.get(base + j + 1).copied().unwrap_or(0) << (64 - shift)
            };
            out.words[j] = lo | hi;
        }
        out.clear_tail();
        out
    }

    /// Widens (zero-extends) or narrows to `len` bits. Narrowing drops high bits.
    pub fn resized(&self, len: usize) -> BitString {
        Self::from_words(len, self.words.clone())
    }

    pub fn concat(&self, other: &BitString) -> BitString {
        let mut out = self.resized(self.len + other.len);
        for (i, b) in other.iter().enumerate() {
            if b {
                out.set_bit(self.len + i, true);
            }
        }
        out
    }

    /// Little-endian bytes: byte 0 holds bits 0..7. Length `ceil(len / 8)`.
    pub fn to_bytes_le(&self) -> Vec<u8> {
        let nbytes = self.len.div_ceil(8);
        self.words
            .iter()
            .flat_map(|w| w.to_le_bytes())
            .take(nbytes)
            .collect()
    }

    /// Inverse of [`to_bytes_le`](Self::to_bytes_le). Rejects set bits above `len`.
    pub fn from_bytes_le(len: usize, bytes: &[u8]) -> Result<Self> {
        let nbytes = len.div_ceil(8);
        if bytes.len() != nbytes {
            return Err(Error::SizeMismatch {
                expected: nbytes,
                found: bytes.len(),
            });
        }
        let mut words = vec![0u64; words_for(len)];
        for (i, &b) in bytes.iter().enumerate() {
            words[i / 8] |= (b as u64) << (8 * (i % 8));
        }
        let s = BitString { len, words };
        let mut check = s.clone();
        check.clear_tail();
        if check != s {
            return Err(Error::Parse(format!(
                "bits set above position {len} in byte serialization"
            )));
        }
        Ok(s)
    }

    pub fn to_hex(&self) -> String {
        let digits = self.len.div_ceil(4);
        let mut out = String::with_capacity(digits);
        for d in (0..digits).rev() {
            let mut nib = 0u8;
            for b in 0..4 {
                let i = 4 * d + b;
                if i < self.len && self.bit(i) {
                    nib |= 1 << b;
                }
            }
            out.push(char::from_digit(nib as u32, 16).unwrap());
        }
        out
    }

    /// Parses hex (most significant nibble first). Fewer digits than
    /// `ceil(len / 4)` are accepted as if zero-padded; the value must fit in `len` bits.
    pub fn from_hex(len: usize, hex: &str) -> Result<Self> {
        let hex = hex.trim();
        let hex = hex.strip_prefix("0x").unwrap_or(hex);
        let mut s = Self::zeros(len);
        for (d, c) in hex.chars().rev().enumerate() {
            let nib = c
                .to_digit(16)
                .ok_or_else(|| Error::Parse(format!("invalid hex digit {c:?}")))?;
            for b in 0..4 {
                if nib >> b & 1 == 1 {
                    let i = 4 * d + b;
                    if i >= len {
                        return Err(Error::Parse(format!(
                            "hex value {hex} does not fit in {len} bits"
                        )));
                    }
                    s.set_bit(i, true);
                }
            }
        }
        Ok(s)
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitString({}; 0x{})", self.len, self.to_hex())
    }
}

impl fmt::LowerHex for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}
