//! Consumable store of shared secret key bits.
//!
//! File format:
//!
//! ```text
//! IPCPOOL v1 <total_bits> <consumed_bits>
//! <hex of the little-endian byte serialization, byte 0 first, 64 digits per line>
//! ```
//!
//! Consumed bits are overwritten with zeros. A file-backed pool rewrites its
//! file (write to a temporary, then rename) before any dispensed bits are
//! returned, so a crash can lose key but never reuse it.
//!
//! A pool is single-writer: `dispense` takes `&mut self`, and two processes
//! must not share one pool file.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::RngCore;

use crate::bits::BitString;
use crate::error::{Error, Result};

pub const POOL_MAGIC: &str = "IPCPOOL";
const POOL_VERSION: &str = "v1";

/// Where a stretch of pool material came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KeyOrigin {
    Initial,
    Round(u64),
}

#[derive(Debug)]
pub struct KeyPool {
    material: BitString,
    consumed: usize,
    segments: Vec<(usize, KeyOrigin)>,
    path: Option<PathBuf>,
}

impl KeyPool {
    /// An in-memory pool holding `bits` as initial key.
    pub fn new(bits: BitString) -> Self {
        KeyPool {
            material: bits,
            consumed: 0,
            segments: vec![(0, KeyOrigin::Initial)],
            path: None,
        }
    }

    pub fn generate<R: RngCore + ?Sized>(total_bits: usize, rng: &mut R) -> Self {
        Self::new(BitString::random(total_bits, rng))
    }

    /// Writes `bits` to a new pool file and returns the pool backed by it.
    pub fn create(path: impl AsRef<Path>, bits: BitString) -> Result<Self> {
        let mut pool = Self::new(bits);
        pool.path = Some(path.as_ref().to_path_buf());
        pool.save()?;
        Ok(pool)
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let mut pool = Self::parse(&text)?;
        pool.path = Some(path.to_path_buf());
        Ok(pool)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty key pool file".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 4 || fields[0] != POOL_MAGIC || fields[1] != POOL_VERSION {
            return Err(Error::Parse(format!("bad key pool header {header:?}")));
        }
        let total: usize = fields[2]
            .parse()
            .map_err(|_| Error::Parse(format!("bad total bit count {:?}", fields[2])))?;
        let consumed: usize = fields[3]
            .parse()
            .map_err(|_| Error::Parse(format!("bad consumed bit count {:?}", fields[3])))?;
        if consumed > total {
            return Err(Error::Parse(format!(
                "consumed count {consumed} exceeds total {total}"
            )));
        }
        let hex: String = lines.flat_map(|l| l.chars()).filter(|c| !c.is_whitespace()).collect();
        if hex.len() != 2 * total.div_ceil(8) {
            return Err(Error::Parse(format!(
                "key material has {} hex digits, expected {}",
                hex.len(),
                2 * total.div_ceil(8)
            )));
        }
        let bytes = (0..hex.len() / 2)
            .map(|i| u8::from_str_radix(&hex[2 * i..2 * i + 2], 16))
            .collect::<std::result::Result<Vec<u8>, _>>()
            .map_err(|_| Error::Parse("invalid hex in key material".into()))?;
        let material = BitString::from_bytes_le(total, &bytes)?;
        Ok(KeyPool {
            material,
            consumed,
            segments: vec![(0, KeyOrigin::Initial)],
            path: None,
        })
    }

    pub fn serialize(&self) -> String {
        let mut out = format!(
            "{POOL_MAGIC} {POOL_VERSION} {} {}\n",
            self.material.len(),
            self.consumed
        );
        let hex: String = self
            .material
            .to_bytes_le()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        for chunk in hex.as_bytes().chunks(64) {
            out.push_str(std::str::from_utf8(chunk).expect("hex is ascii"));
            out.push('\n');
        }
        out
    }

    /// Rewrites the backing file, if any.
    pub fn save(&self) -> Result<()> {
        match &self.path {
            Some(p) => write_atomic(p, &self.serialize()),
            None => Ok(()),
        }
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn total_bits(&self) -> usize {
        self.material.len()
    }

    pub fn consumed(&self) -> usize {
        self.consumed
    }

    pub fn available(&self) -> usize {
        self.material.len() - self.consumed
    }

    /// Copy of the bits not yet dispensed, next bit first.
    pub fn unconsumed(&self) -> BitString {
        self.material.slice(self.consumed, self.available())
    }

    /// Origin of the bit at `offset`.
    pub fn origin_at(&self, offset: usize) -> Option<KeyOrigin> {
        if offset >= self.material.len() {
            return None;
        }
        self.segments
            .iter()
            .rev()
            .find(|(start, _)| *start <= offset)
            .map(|(_, o)| *o)
    }

    /// Hands out the next `n` unconsumed bits. The new offset is persisted
    /// before the bits are returned; on failure nothing is consumed.
    pub fn dispense(&mut self, n: usize) -> Result<BitString> {
        if n > self.available() {
            return Err(Error::PoolExhausted {
                requested: n,
                available: self.available(),
            });
        }
        let start = self.consumed;
        let out = self.material.slice(start, n);
        let mut next = self.material.clone();
        for i in start..start + n {
            next.set_bit(i, false);
        }
        let previous = std::mem::replace(&mut self.material, next);
        self.consumed += n;
        if let Err(e) = self.save() {
            self.material = previous;
            self.consumed = start;
            return Err(e);
        }
        Ok(out)
    }

    /// Appends freshly agreed key to the end of the pool.
    pub fn deposit(&mut self, bits: &BitString, origin: KeyOrigin) -> Result<()> {
        if bits.is_empty() {
            return Ok(());
        }
        self.segments.push((self.material.len(), origin));
        self.material = self.material.concat(bits);
        self.save()
    }
}

fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty());
    let mut tmp = match dir {
        Some(d) => tempfile::NamedTempFile::new_in(d)?,
        None => tempfile::NamedTempFile::new_in(".")?,
    };
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}
