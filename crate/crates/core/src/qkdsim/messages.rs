//! Encodings of the public round messages.
//!
//! Control frames start with a subtype byte:
//!
//! | subtype | contents |
//! |---|---|
//! | `0x00` hello | config digest (32 bytes) |
//! | `0x01` round start | round number, u32 |
//! | `0x02` PE indices | key count u32, CHSH count u32, then the indices, u32 each |
//! | `0x03` EC public data | code seed u64, tag seed (N bits) |
//! | `0x04` PA seed | N bits |
//! | `0x05` close | empty |
//!
//! Basis frames carry a u32 count followed by 2-bit settings, four per byte,
//! low bits first. Integers are big-endian; bit strings are packed as in
//! seed+ciphertext payloads.

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::qkdsim::device::{Basis, BASIS_COUNT};
use crate::qkdsim::estimate::PeIndices;
use crate::wire::{ChannelPayload, Frame, FrameType};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Control {
    Hello([u8; 32]),
    RoundStart(u32),
    PeIndices(PeIndices),
    EcPublic { code_seed: u64, tag_seed: BitString },
    PaSeed(BitString),
    Close,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Session(msg.into())
}

fn u32_at(p: &[u8], at: usize) -> Result<u32> {
    p.get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| bad("control frame truncated"))
}

impl Control {
    pub fn to_frame(&self) -> Frame {
        let mut p = Vec::new();
        match self {
            Control::Hello(d) => {
                p.push(0x00);
                p.extend_from_slice(d);
            }
            Control::RoundStart(r) => {
                p.push(0x01);
                p.extend_from_slice(&r.to_be_bytes());
            }
            Control::PeIndices(ix) => {
                p.push(0x02);
                p.extend_from_slice(&(ix.key.len() as u32).to_be_bytes());
                p.extend_from_slice(&(ix.chsh.len() as u32).to_be_bytes());
                for i in ix.key.iter().chain(&ix.chsh) {
                    p.extend_from_slice(&i.to_be_bytes());
                }
            }
            Control::EcPublic { code_seed, tag_seed } => {
                p.push(0x03);
                p.extend_from_slice(&code_seed.to_be_bytes());
                p.extend_from_slice(&tag_seed.to_bytes_le());
            }
            Control::PaSeed(s) => {
                p.push(0x04);
                p.extend_from_slice(&s.to_bytes_le());
            }
            Control::Close => p.push(0x05),
        }
        Frame::new(FrameType::QkdControl, p)
    }

    /// Parses a control frame; `seed_bits` is the length of the tag and PA seeds.
    pub fn from_frame(f: &Frame, seed_bits: usize) -> Result<Self> {
        if f.frame_type != FrameType::QkdControl {
            return Err(bad(format!("expected control frame, got {:?}", f.frame_type)));
        }
        let p = &f.payload;
        let body = p.get(1..).ok_or_else(|| bad("empty control frame"))?;
        let exact = |len: usize| {
            if body.len() == len {
                Ok(())
            } else {
                Err(bad(format!(
                    "control subtype {:#04x}: {} payload bytes, expected {len}",
                    p[0],
                    body.len()
                )))
            }
        };
        Ok(match p[0] {
            0x00 => {
                exact(32)?;
                Control::Hello(body.try_into().unwrap())
            }
            0x01 => {
                exact(4)?;
                Control::RoundStart(u32_at(body, 0)?)
            }
            0x02 => {
                let nk = u32_at(body, 0)? as usize;
                let nc = u32_at(body, 4)? as usize;
                exact(8 + 4 * (nk.saturating_add(nc)))?;
                let all: Vec<u32> = (0..nk + nc)
                    .map(|i| u32_at(body, 8 + 4 * i))
                    .collect::<Result<_>>()?;
                Control::PeIndices(PeIndices {
                    key: all[..nk].to_vec(),
                    chsh: all[nk..].to_vec(),
                })
            }
            0x03 => {
                exact(8 + seed_bits.div_ceil(8))?;
                Control::EcPublic {
                    code_seed: u64::from_be_bytes(body[..8].try_into().unwrap()),
                    tag_seed: BitString::from_bytes_le(seed_bits, &body[8..])?,
                }
            }
            0x04 => {
                exact(seed_bits.div_ceil(8))?;
                Control::PaSeed(BitString::from_bytes_le(seed_bits, body)?)
            }
            0x05 => {
                exact(0)?;
                Control::Close
            }
            t => return Err(bad(format!("unknown control subtype {t:#04x}"))),
        })
    }
}

pub fn basis_frame(bases: &[Basis]) -> Frame {
    let mut p = Vec::with_capacity(4 + bases.len().div_ceil(4));
    p.extend_from_slice(&(bases.len() as u32).to_be_bytes());
    for chunk in bases.chunks(4) {
        p.push(
            chunk
                .iter()
                .enumerate()
                .fold(0u8, |b, (i, &x)| b | (x & 3) << (2 * i)),
        );
    }
    Frame::new(FrameType::BasisAnnounce, p)
}

pub fn parse_basis_frame(f: &Frame, expected: usize) -> Result<Vec<Basis>> {
    if f.frame_type != FrameType::BasisAnnounce {
        return Err(bad(format!("expected basis frame, got {:?}", f.frame_type)));
    }
    let count = u32_at(&f.payload, 0)? as usize;
    if count != expected || f.payload.len() != 4 + count.div_ceil(4) {
        return Err(bad(format!(
            "basis frame announces {count} settings in {} bytes, expected {expected}",
            f.payload.len()
        )));
    }
    let bases: Vec<Basis> = (0..count)
        .map(|i| (f.payload[4 + i / 4] >> (2 * (i % 4))) & 3)
        .collect();
    debug_assert!(bases.iter().all(|&b| b < BASIS_COUNT));
    Ok(bases)
}

pub fn channel_frame(p: &ChannelPayload) -> Result<Frame> {
    Ok(Frame::new(FrameType::SeedCiphertext, p.encode()?))
}

pub fn parse_channel_frame(f: &Frame) -> Result<ChannelPayload> {
    if f.frame_type != FrameType::SeedCiphertext {
        return Err(bad(format!("expected seed+ciphertext frame, got {:?}", f.frame_type)));
    }
    Ok(ChannelPayload::decode(&f.payload)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn control_round_trips() {
        let seed = BitString::from_u64(20, 0xabcde).unwrap();
        for c in [
            Control::Hello([7; 32]),
            Control::RoundStart(9),
            Control::PeIndices(PeIndices {
                key: vec![1, 2, 3],
                chsh: vec![10, 20],
            }),
            Control::EcPublic {
                code_seed: 42,
                tag_seed: seed.clone(),
            },
            Control::PaSeed(seed.clone()),
            Control::Close,
        ] {
            assert_eq!(Control::from_frame(&c.to_frame(), 20).unwrap(), c);
        }
        let mut f = Control::RoundStart(1).to_frame();
        f.payload.push(0);
        assert!(Control::from_frame(&f, 20).is_err());
    }

    #[test]
    fn basis_round_trip() {
        let b: Vec<Basis> = (0..11).map(|i| (i * 7 % 4) as u8).collect();
        assert_eq!(parse_basis_frame(&basis_frame(&b), 11).unwrap(), b);
        assert!(parse_basis_frame(&basis_frame(&b), 12).is_err());
    }
}
