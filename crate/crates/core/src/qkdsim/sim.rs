//! In-process simulation: both labs on their own threads over a tapped link.

use rand::RngCore;

use crate::bits::BitString;
use crate::budget::SecurityBudget;
use crate::error::{Error, Result};
use crate::ipchannel::KeyPool;
use crate::qkdsim::config::{Layout, SimConfig};
use crate::qkdsim::device::{make_device, Device};
use crate::qkdsim::estimate::sift;
use crate::qkdsim::link::{mem_pair, new_tap};
use crate::qkdsim::messages::{parse_basis_frame, parse_channel_frame, Control};
use crate::qkdsim::session::{Party, PartyRound, Role, RoundStatus};
use crate::rng;
use crate::wire::Frame;

/// Combined view of one round.
#[derive(Clone, Debug)]
pub struct RoundResult {
    pub index: u64,
    /// No key was produced (abort, failed verification or random frames).
    pub aborted: bool,
    pub alice_status: RoundStatus,
    pub bob_status: RoundStatus,
    /// Alice's final key.
    pub new_key: Option<BitString>,
    /// Whether both labs hold the same final key (or neither holds one).
    pub keys_agree: bool,
    pub q_obs: Option<f64>,
    pub s_obs: Option<f64>,
    pub eps_pe_achieved: Option<f64>,
    pub ec_class: Option<usize>,
    pub key_consumed: usize,
    /// Frames of this round as seen on the wire.
    pub transcript: Vec<Frame>,
}

impl RoundResult {
    /// Key produced minus pool key spent.
    pub fn net_key(&self) -> i64 {
        self.new_key.as_ref().map_or(0, |k| k.len() as i64) - self.key_consumed as i64
    }
}

pub struct SimReport {
    pub config: SimConfig,
    pub layout: Layout,
    pub rounds: Vec<RoundResult>,
    /// Every frame in order, hello to close.
    pub transcript: Vec<Frame>,
    pub budget: SecurityBudget,
    pub alice_pool: KeyPool,
    pub bob_pool: KeyPool,
}

impl SimReport {
    pub fn successes(&self) -> usize {
        self.rounds.iter().filter(|r| !r.aborted).count()
    }
}

/// Runs `rounds` rounds with the devices named in the configuration.
/// With `seed`, the run is fully reproducible.
pub fn simulate(cfg: &SimConfig, rounds: u64, seed: Option<u64>) -> Result<SimReport> {
    let dev_seed = |tag: &str| rng::make(seed, tag).next_u64();
    let alice = make_device(&cfg.device_alice, dev_seed("device/alice"));
    let bob = make_device(&cfg.device_bob, dev_seed("device/bob"));
    simulate_with_devices(cfg, rounds, seed, alice, bob)
}

pub fn simulate_with_devices(
    cfg: &SimConfig,
    rounds: u64,
    seed: Option<u64>,
    alice_device: Box<dyn Device>,
    bob_device: Box<dyn Device>,
) -> Result<SimReport> {
    cfg.validate()?;
    let initial = BitString::random(cfg.initial_pool_bits, &mut rng::make(seed, "initial-key"));
    let source_seed = rng::make(seed, &format!("source/{}", cfg.source_seed)).next_u64();
    let mut alice = Party::new(
        Role::Alice,
        cfg.clone(),
        KeyPool::new(initial.clone()),
        alice_device,
        rng::make(seed, "alice"),
        source_seed,
    )?;
    let mut bob = Party::new(
        Role::Bob,
        cfg.clone(),
        KeyPool::new(initial),
        bob_device,
        rng::make(seed, "bob"),
        source_seed,
    )?;
    let tap = new_tap();
    let (mut la, mut lb) = mem_pair(Some(tap.clone()));
    let (ra, rb) = std::thread::scope(|s| {
        let ha = s.spawn(|| alice.run_session(&mut la, rounds));
        let hb = s.spawn(|| bob.run_session(&mut lb, rounds));
        (ha.join(), hb.join())
    });
    let ra = ra.map_err(|_| Error::Session("alice thread panicked".into()))?;
    let rb = rb.map_err(|_| Error::Session("bob thread panicked".into()))?;
    ra.and(rb)?;

    let transcript = tap.lock().unwrap().clone();
    let (_, per_round, _) = split_rounds(&transcript);
    let results = alice
        .rounds()
        .iter()
        .zip(bob.rounds())
        .zip(per_round)
        .map(|((a, b), frames)| combine(a, b, frames))
        .collect();
    Ok(SimReport {
        config: cfg.clone(),
        layout: alice.layout().clone(),
        rounds: results,
        transcript,
        budget: alice.budget()?,
        alice_pool: alice.into_pool(),
        bob_pool: bob.into_pool(),
    })
}

fn combine(a: &PartyRound, b: &PartyRound, transcript: Vec<Frame>) -> RoundResult {
    RoundResult {
        index: a.index,
        aborted: a.status != RoundStatus::Success,
        alice_status: a.status,
        bob_status: b.status,
        new_key: a.key.clone(),
        keys_agree: a.key == b.key,
        q_obs: b.q_obs,
        s_obs: b.s_obs,
        eps_pe_achieved: b.estimate.as_ref().map(|e| e.eps_pe_achieved),
        ec_class: a.ec_class.or(b.ec_class),
        key_consumed: a.key_consumed,
        transcript,
    }
}

fn is_control(f: &Frame, subtype: u8) -> bool {
    f.frame_type == crate::wire::FrameType::QkdControl && f.payload.first() == Some(&subtype)
}

/// Splits a session transcript into the frames before round 1, each round's
/// frames, and the closing frames.
pub fn split_rounds(frames: &[Frame]) -> (Vec<Frame>, Vec<Vec<Frame>>, Vec<Frame>) {
    let mut prologue = Vec::new();
    let mut rounds: Vec<Vec<Frame>> = Vec::new();
    let mut epilogue = Vec::new();
    let mut closed = false;
    for f in frames {
        if closed {
            epilogue.push(f.clone());
        } else if is_control(f, 0x05) {
            closed = true;
            epilogue.push(f.clone());
        } else if is_control(f, 0x01) {
            rounds.push(vec![f.clone()]);
        } else if let Some(r) = rounds.last_mut() {
            r.push(f.clone());
        } else {
            prologue.push(f.clone());
        }
    }
    (prologue, rounds, epilogue)
}

/// What an eavesdropper reads out of one round of the naive channel when
/// Alice's device runs the position-keyed leak: entry `i` is the recovered
/// bit `d[i]`, if some sampled position landed on it.
pub fn recover_naive_leak(round: &[Frame], layout: &Layout, leak_len: usize) -> Result<Vec<Option<bool>>> {
    let bad = || Error::Session("round transcript has the wrong shape".into());
    if round.len() < 5 {
        return Err(bad());
    }
    let a = parse_basis_frame(&round[1], layout.n_raw)?;
    let b = parse_basis_frame(&round[2], layout.n_raw)?;
    let pe = match Control::from_frame(&round[3], layout.n_sifted)? {
        Control::PeIndices(p) => p,
        _ => return Err(bad()),
    };
    let c = parse_channel_frame(&round[4])?;
    let c = BitString::from_bytes_le(c.l_bits as usize, &c.c)?;
    let sifted = sift(&a, &b);
    let mut out = vec![None; leak_len];
    let positions = pe
        .key
        .iter()
        .filter_map(|&i| sifted.key.get(i as usize).copied())
        .chain(pe.chsh.iter().map(|&p| p as usize));
    for (j, p) in positions.enumerate() {
        if 8 + j < c.len() {
            out[p % leak_len] = Some(c.bit(8 + j));
        }
    }
    Ok(out)
}
