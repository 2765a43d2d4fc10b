//! Framed binary wire protocol.
//!
//! ```text
//! +---------+---------+------+----------------+-----------------+
//! | "IPC1"  | version | type | length (u32 BE)| payload         |
//! | 4 bytes | 0x01    | 1 B  | 4 bytes        | `length` bytes  |
//! +---------+---------+------+----------------+-----------------+
//! ```
//!
//! A seed+ciphertext payload (type 0x01) is
//! `n_bits (u32 BE) | l_bits (u32 BE) | r (ceil(n/8) bytes) | c (ceil(l/8) bytes)`
//! with `r` and `c` in little-endian bit order and unused high bits zero.

use std::io::{self, Read, Write};

use thiserror::Error;

pub const MAGIC: [u8; 4] = *b"IPC1";
pub const VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 10;
pub const MAX_PAYLOAD: usize = 1 << 24;

#[derive(Debug, Error)]
pub enum WireError {
    #[error("bad magic {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0:#04x}")]
    BadVersion(u8),
    #[error("unknown frame type {0:#04x}")]
    UnknownType(u8),
    #[error("payload length {0} exceeds the 2^24 byte limit")]
    LengthOverflow(usize),
    #[error("truncated stream: needed {needed} bytes, had {available}")]
    Truncated { needed: usize, available: usize },
    #[error("malformed payload: {0}")]
    BadPayload(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl WireError {
    /// Stable numeric code per error kind.
    pub fn code(&self) -> u8 {
        match self {
            WireError::BadMagic(_) => 1,
            WireError::BadVersion(_) => 2,
            WireError::UnknownType(_) => 3,
            WireError::LengthOverflow(_) => 4,
            WireError::Truncated { .. } => 5,
            WireError::BadPayload(_) => 6,
            WireError::Io(_) => 7,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum FrameType {
    SeedCiphertext = 0x01,
    BasisAnnounce = 0x02,
    QkdControl = 0x03,
    TranscriptLog = 0x04,
}

impl FrameType {
    pub fn from_u8(b: u8) -> Result<Self, WireError> {
        match b {
            0x01 => Ok(FrameType::SeedCiphertext),
            0x02 => Ok(FrameType::BasisAnnounce),
            0x03 => Ok(FrameType::QkdControl),
            0x04 => Ok(FrameType::TranscriptLog),
            other => Err(WireError::UnknownType(other)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub frame_type: FrameType,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(frame_type: FrameType, payload: Vec<u8>) -> Self {
        Frame {
            frame_type,
            payload,
        }
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.payload.len()
    }
}

pub fn frame_encode(f: &Frame) -> Result<Vec<u8>, WireError> {
    if f.payload.len() > MAX_PAYLOAD {
        return Err(WireError::LengthOverflow(f.payload.len()));
    }
    let mut out = Vec::with_capacity(f.encoded_len());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(f.frame_type as u8);
    out.extend_from_slice(&(f.payload.len() as u32).to_be_bytes());
    out.extend_from_slice(&f.payload);
    Ok(out)
}

/// Decodes one frame from the front of `bytes`, returning it and the number
/// of bytes consumed. Header fields are validated as soon as they are
/// available, so a bad magic is reported even on a short buffer.
pub fn frame_decode(bytes: &[u8]) -> Result<(Frame, usize), WireError> {
    let (frame_type, len) = check_header(bytes)?;
    let total = HEADER_LEN + len;
    if bytes.len() < total {
        return Err(WireError::Truncated {
            needed: total,
            available: bytes.len(),
        });
    }
    let frame = Frame {
        frame_type,
        payload: bytes[HEADER_LEN..total].to_vec(),
    };
    Ok((frame, total))
}

/// Validates whatever prefix of a header `bytes` holds; with a full header,
/// returns the frame type and payload length.
fn check_header(bytes: &[u8]) -> Result<(FrameType, usize), WireError> {
    let have = bytes.len();
    let magic_len = have.min(4);
    if bytes[..magic_len] != MAGIC[..magic_len] {
        let mut m = [0u8; 4];
        m[..magic_len].copy_from_slice(&bytes[..magic_len]);
        return Err(WireError::BadMagic(m));
    }
    if have > 4 && bytes[4] != VERSION {
        return Err(WireError::BadVersion(bytes[4]));
    }
    if have > 5 {
        FrameType::from_u8(bytes[5])?;
    }
    if have < HEADER_LEN {
        return Err(WireError::Truncated {
            needed: HEADER_LEN,
            available: have,
        });
    }
    let len = u32::from_be_bytes(bytes[6..10].try_into().unwrap()) as usize;
    if len > MAX_PAYLOAD {
        return Err(WireError::LengthOverflow(len));
    }
    Ok((FrameType::from_u8(bytes[5])?, len))
}

/// Incremental decoder for a byte stream that arrives in arbitrary chunks.
#[derive(Default, Debug)]
pub struct FrameDecoder {
    buf: Vec<u8>,
}

impl FrameDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    /// Next complete frame, `Ok(None)` if more bytes are needed.
    pub fn next_frame(&mut self) -> Result<Option<Frame>, WireError> {
        if self.buf.is_empty() {
            return Ok(None);
        }
        match frame_decode(&self.buf) {
            Ok((frame, used)) => {
                self.buf.drain(..used);
                Ok(Some(frame))
            }
            Err(WireError::Truncated { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }
}

/// Reads one frame. `Ok(None)` on a clean end of stream at a frame boundary;
/// a stream that ends inside a frame is `Truncated`.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<Frame>, WireError> {
    let mut header = [0u8; HEADER_LEN];
    let mut got = 0;
    while got < HEADER_LEN {
        let k = r.read(&mut header[got..])?;
        if k == 0 {
            if got == 0 {
                return Ok(None);
            }
            // A short header always fails; report the most specific error.
            return Err(check_header(&header[..got]).expect_err("short header"));
        }
        got += k;
    }
    let (frame_type, len) = check_header(&header)?;
    let mut payload = vec![0u8; len];
    let mut have = 0;
    while have < len {
        let k = r.read(&mut payload[have..])?;
        if k == 0 {
            return Err(WireError::Truncated {
                needed: HEADER_LEN + len,
                available: HEADER_LEN + have,
            });
        }
        have += k;
    }
    Ok(Some(Frame {
        frame_type,
        payload,
    }))
}

pub fn write_frame<W: Write>(w: &mut W, f: &Frame) -> Result<(), WireError> {
    w.write_all(&frame_encode(f)?)?;
    Ok(())
}

/// Body of a seed+ciphertext frame.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChannelPayload {
    pub n_bits: u32,
    pub l_bits: u32,
    pub r: Vec<u8>,
    pub c: Vec<u8>,
}

fn check_padding(bytes: &[u8], bits: usize, what: &str) -> Result<(), WireError> {
    let rem = bits % 8;
    if rem != 0 {
        if let Some(&last) = bytes.last() {
            if last >> rem != 0 {
                return Err(WireError::BadPayload(format!(
                    "nonzero padding bits in {what}"
                )));
            }
        }
    }
    Ok(())
}

impl ChannelPayload {
    pub fn encode(&self) -> Result<Vec<u8>, WireError> {
        self.validate()?;
        let mut out = Vec::with_capacity(8 + self.r.len() + self.c.len());
        out.extend_from_slice(&self.n_bits.to_be_bytes());
        out.extend_from_slice(&self.l_bits.to_be_bytes());
        out.extend_from_slice(&self.r);
        out.extend_from_slice(&self.c);
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        if bytes.len() < 8 {
            return Err(WireError::BadPayload(
                "channel payload shorter than its 8-byte header".into(),
            ));
        }
        let n_bits = u32::from_be_bytes(bytes[0..4].try_into().unwrap());
        let l_bits = u32::from_be_bytes(bytes[4..8].try_into().unwrap());
        let rl = (n_bits as usize).div_ceil(8);
        let cl = (l_bits as usize).div_ceil(8);
        if bytes.len() != 8 + rl + cl {
            return Err(WireError::BadPayload(format!(
                "channel payload is {} bytes, header implies {}",
                bytes.len(),
                8 + rl + cl
            )));
        }
        let p = ChannelPayload {
            n_bits,
            l_bits,
            r: bytes[8..8 + rl].to_vec(),
            c: bytes[8 + rl..].to_vec(),
        };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<(), WireError> {
        let n = self.n_bits as usize;
        let l = self.l_bits as usize;
        if l == 0 || n <= 2 * l {
            return Err(WireError::BadPayload(format!(
                "need n > 2l with l >= 1, got n = {n}, l = {l}"
            )));
        }
        if self.r.len() != n.div_ceil(8) || self.c.len() != l.div_ceil(8) {
            return Err(WireError::BadPayload("seed/ciphertext length mismatch".into()));
        }
        check_padding(&self.r, n, "seed")?;
        check_padding(&self.c, l, "ciphertext")
    }
}

/// One transcript-log line: `<type-hex> <len> <payload-hex>`.
pub fn log_line(f: &Frame) -> String {
    let mut s = format!("{:02x} {} ", f.frame_type as u8, f.payload.len());
    for b in &f.payload {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

pub fn parse_log_line(line: &str) -> Result<Frame, WireError> {
    let mut parts = line.split_whitespace();
    let ty = parts
        .next()
        .ok_or_else(|| WireError::BadPayload("empty log line".into()))?;
    let ty = u8::from_str_radix(ty, 16)
        .map_err(|_| WireError::BadPayload(format!("bad frame type {ty:?}")))?;
    let frame_type = FrameType::from_u8(ty)?;
    let len: usize = parts
        .next()
        .ok_or_else(|| WireError::BadPayload("missing length".into()))?
        .parse()
        .map_err(|_| WireError::BadPayload("bad length".into()))?;
    let hex = parts.next().unwrap_or("");
    if parts.next().is_some() || hex.len() != 2 * len {
        return Err(WireError::BadPayload(format!(
            "payload hex has {} digits, length field says {len} bytes",
            hex.len()
        )));
    }
    let payload = (0..len)
        .map(|i| u8::from_str_radix(&hex[2 * i..2 * i + 2], 16))
        .collect::<Result<Vec<u8>, _>>()
        .map_err(|_| WireError::BadPayload("bad payload hex".into()))?;
    Ok(Frame {
        frame_type,
        payload,
    })
}
