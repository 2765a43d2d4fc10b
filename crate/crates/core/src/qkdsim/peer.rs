//! One lab of a two-process session over a byte stream.

use std::io::{Read, Write};

use rand::RngCore;
use sha2::{Digest, Sha256};

use crate::budget::SecurityBudget;
use crate::error::Result;
use crate::ipchannel::KeyPool;
use crate::qkdsim::config::SimConfig;
use crate::qkdsim::device::make_device;
use crate::qkdsim::link::{StreamLink, Tap};
use crate::qkdsim::session::{Party, PartyRound, Role, RoundStatus};
use crate::rng;

/// Pool bits hashed into the shared source seed when no `IPC_SEED` is set.
const SOURCE_SEED_BITS: usize = 256;

/// What one lab knows after a session.
#[derive(Debug)]
pub struct PeerSummary {
    pub role: Role,
    pub rounds: Vec<PartyRound>,
    pub budget: SecurityBudget,
    /// SHA-256 of the concatenated final keys of this session.
    pub key_digest: [u8; 32],
    pub key_bits: usize,
    pub pool_available: usize,
}

impl PeerSummary {
    pub fn successes(&self) -> usize {
        self.rounds.iter().filter(|r| r.status == RoundStatus::Success).count()
    }

    /// True when every round produced key.
    pub fn all_succeeded(&self) -> bool {
        self.successes() == self.rounds.len()
    }

    pub fn key_digest_hex(&self) -> String {
        self.key_digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Seed of the simulated entangled source. It must agree on both ends: with
/// a test seed it is derived like the in-process simulation does; otherwise it
/// comes from the shared pool, so it is secret and needs no extra message.
pub fn source_seed(cfg: &SimConfig, pool: &KeyPool, seed: Option<u64>) -> u64 {
    match seed {
        Some(_) => rng::make(seed, &format!("source/{}", cfg.source_seed)).next_u64(),
        None => {
            let head = pool.unconsumed();
            let head = head.slice(0, head.len().min(SOURCE_SEED_BITS));
            let mut h = Sha256::new();
            h.update(b"peer-source");
            h.update(cfg.source_seed.to_le_bytes());
            h.update(head.to_bytes_le());
            let d = h.finalize();
            u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
        }
    }
}

/// Runs hello, `rounds` rounds and close as `role` over `stream`. Fresh key
/// is appended to `pool` (persisted if the pool is file-backed).
pub fn peer_session<S: Read + Write>(
    role: Role,
    stream: S,
    pool: KeyPool,
    cfg: &SimConfig,
    rounds: u64,
    seed: Option<u64>,
    tap: Option<Tap>,
) -> Result<(PeerSummary, KeyPool)> {
    cfg.validate()?;
    let (device_kind, tag) = match role {
        Role::Alice => (&cfg.device_alice, "alice"),
        Role::Bob => (&cfg.device_bob, "bob"),
    };
    let device = make_device(device_kind, rng::make(seed, &format!("device/{tag}")).next_u64());
    let source = source_seed(cfg, &pool, seed);
    let mut party = Party::new(role, cfg.clone(), pool, device, rng::make(seed, tag), source)?;
    let mut link = StreamLink::new(stream, tap);
    party.run_session(&mut link, rounds)?;

    let mut h = Sha256::new();
    let mut key_bits = 0;
    for r in party.rounds() {
        if let Some(k) = &r.key {
            h.update((k.len() as u64).to_le_bytes());
            h.update(k.to_bytes_le());
            key_bits += k.len();
        }
    }
    let summary = PeerSummary {
        role,
        rounds: party.rounds().to_vec(),
        budget: party.budget()?,
        key_digest: h.finalize().into(),
        key_bits,
        pool_available: party.pool().available(),
    };
    Ok((summary, party.into_pool()))
}
