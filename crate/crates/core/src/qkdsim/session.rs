//! The two lab state machines.
//!
//! Every round exchanges the same nine frames, whatever happens inside:
//!
//! | # | from | frame |
//! |---|---|---|
//! | 1 | A | control: round start |
//! | 2 | A | basis announcement |
//! | 3 | B | basis announcement |
//! | 4 | A | control: PE sample positions |
//! | 5 | A | channel: status of the previous round, PE values |
//! | 6 | B | channel: abort flag and EC size class |
//! | 7 | B | control: EC code seed and tag seed |
//! | 8 | B | channel: EC bundle, padded to the largest class |
//! | 9 | A | control: PA seed |
//!
//! Aborts only change what is inside the encrypted frames, so the transcript
//! reveals nothing about them. Alice learns whether error correction verified;
//! Bob learns it from the status byte at the front of the next round's PE
//! message (or the closing status message), and both commit the round's key
//! to their pools only then.
//!
//! When the pool can no longer cover a worst-case round, both labs switch to
//! sending random frames of the usual shape for the remaining rounds.

use std::collections::VecDeque;
use std::sync::Arc;

use rand::RngCore;

use crate::bits::BitString;
use crate::budget::{ChshRate, RateModel, SecurityBudget};
use crate::error::{Error, Result};
use crate::ipchannel::{decrypt, encrypt, ChannelTranscript, KeyOrigin, KeyPool};
use crate::qkdsim::config::{ChannelVariant, Layout, SimConfig};
use crate::qkdsim::device::{measure_phase, random_bases, Basis, Device, DeviceInput};
use crate::qkdsim::ec::{
    decoder_prior, dequantize_q, dequantize_s, design_error_rate, quantize_q, quantize_s,
    reconcile, syndrome_class, verification_tag, EcBundle,
};
use crate::qkdsim::estimate::{
    parameter_estimate, remaining_key_positions, sift, ChshSample, Estimate, PeIndices, Sifted,
};
use crate::qkdsim::ldpc::Ldpc;
use crate::qkdsim::link::Link;
use crate::qkdsim::messages::{
    basis_frame, channel_frame, parse_basis_frame, parse_channel_frame, Control,
};
use crate::qkdsim::pa::{privacy_amplify, round_output_length};
use crate::rng::{self, Rng};
use crate::wire::ChannelPayload;

const STATUS_OK: u8 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Alice,
    Bob,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Alice => "alice",
            Role::Bob => "bob",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AbortReason {
    /// Too few sifted positions for the round.
    Shortfall,
    /// The announced sample positions were malformed.
    BadIndices,
    HighErrorRate,
    LowChsh,
    /// Some CHSH setting pair had no samples.
    NoChshEstimate,
    /// Privacy amplification would leave nothing.
    NoKeyLength,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RoundStatus {
    Success,
    /// Aborted after parameter estimation. Alice only sees the flag, not the reason.
    Aborted(Option<AbortReason>),
    /// Error correction ran but did not verify.
    EcFailed,
    /// Random frames only; the pool could not cover a round.
    Dos,
    /// Bob's view before Alice's verification status arrives.
    Pending,
}

/// One lab's record of a round.
#[derive(Clone, Debug)]
pub struct PartyRound {
    pub index: u64,
    pub status: RoundStatus,
    /// Final key, present only for [`RoundStatus::Success`].
    pub key: Option<BitString>,
    pub q_obs: Option<f64>,
    pub s_obs: Option<f64>,
    /// Bob's full estimate.
    pub estimate: Option<Estimate>,
    pub ec_class: Option<usize>,
    /// Pool bits spent on the round's channel messages.
    pub key_consumed: usize,
}

impl PartyRound {
    fn new(index: u64) -> Self {
        PartyRound {
            index,
            status: RoundStatus::Dos,
            key: None,
            q_obs: None,
            s_obs: None,
            estimate: None,
            ec_class: None,
            key_consumed: 0,
        }
    }

    pub fn aborted(&self) -> bool {
        !matches!(self.status, RoundStatus::Success | RoundStatus::Pending)
    }
}

struct Pending {
    slot: usize,
    key: Option<BitString>,
}

/// One lab: configuration, pool, device and protocol state.
pub struct Party {
    role: Role,
    cfg: SimConfig,
    layout: Layout,
    pool: KeyPool,
    device: Box<dyn Device>,
    rng: Rng,
    source_seed: u64,
    rate: Arc<dyn RateModel>,
    round: u64,
    pending: Option<Pending>,
    /// Bob: (errors, samples) of recent non-aborted rounds.
    history: VecDeque<(usize, usize)>,
    dos: bool,
    rounds: Vec<PartyRound>,
}

fn session_err(msg: impl Into<String>) -> Error {
    Error::Session(msg.into())
}

/// Encrypts `msg` under `key` and pads seed and ciphertext with random bits
/// up to the fixed frame shape.
fn seal_padded<R: RngCore + ?Sized>(
    msg: &BitString,
    key: &BitString,
    shape: (usize, usize),
    rng: &mut R,
) -> Result<ChannelPayload> {
    let t = encrypt(msg, key, rng)?;
    let (n, l) = shape;
    let padded = ChannelTranscript {
        r: t.r.concat(&BitString::random(n - t.r.len(), rng)),
        c: t.c.concat(&BitString::random(l - t.c.len(), rng)),
    };
    Ok(padded.to_payload())
}

fn random_payload<R: RngCore + ?Sized>(shape: (usize, usize), rng: &mut R) -> ChannelPayload {
    ChannelTranscript {
        r: BitString::random(shape.0, rng),
        c: BitString::random(shape.1, rng),
    }
    .to_payload()
}

fn check_shape(p: &ChannelPayload, shape: (usize, usize)) -> Result<ChannelTranscript> {
    if (p.n_bits as usize, p.l_bits as usize) != shape {
        return Err(session_err(format!(
            "channel frame has shape ({}, {}), expected {shape:?}",
            p.n_bits, p.l_bits
        )));
    }
    ChannelTranscript::from_payload(p)
}

/// Decrypts the leading `(n, l)` part of a padded transcript.
fn open_padded(t: &ChannelTranscript, key: &BitString, l: usize) -> Result<BitString> {
    let inner = ChannelTranscript {
        r: t.r.slice(0, key.len()),
        c: t.c.slice(0, l),
    };
    decrypt(&inner, key)
}

impl Party {
    /// A lab with the given pool and device. `rng` supplies settings, sample
    /// positions and seeds; `source_seed` drives the shared simulated source
    /// and must match the other lab's.
    pub fn new(
        role: Role,
        cfg: SimConfig,
        pool: KeyPool,
        device: Box<dyn Device>,
        rng: Rng,
        source_seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        let layout = cfg.layout();
        Ok(Party {
            role,
            cfg,
            layout,
            pool,
            device,
            rng,
            source_seed,
            rate: Arc::new(ChshRate),
            round: 0,
            pending: None,
            history: VecDeque::new(),
            dos: false,
            rounds: Vec::new(),
        })
    }

    /// Replaces the default CHSH rate model used to size privacy amplification.
    pub fn with_rate_model(mut self, rate: Arc<dyn RateModel>) -> Self {
        self.rate = rate;
        self
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn pool(&self) -> &KeyPool {
        &self.pool
    }

    pub fn into_pool(self) -> KeyPool {
        self.pool
    }

    pub fn rounds(&self) -> &[PartyRound] {
        &self.rounds
    }

    /// Whether the lab has fallen back to random frames.
    pub fn in_dos_mode(&self) -> bool {
        self.dos
    }

    /// Pool bits the PE message consumes.
    pub fn pe_key_bits(&self) -> usize {
        match self.cfg.channel {
            ChannelVariant::InsiderProof => self.layout.n_pe,
            ChannelVariant::NaiveOtp => self.layout.n_raw + 8,
        }
    }

    /// Pool bits a round may need, including the closing status message.
    pub fn worst_case_round_key(&self) -> usize {
        self.layout.worst_case_round_key() - self.layout.n_pe + self.pe_key_bits()
    }

    /// The budget the configuration implies, with finished rounds recorded.
    pub fn budget(&self) -> Result<SecurityBudget> {
        let mut b = self.empty_budget()?;
        for r in &self.rounds {
            b.record_round(r.status == RoundStatus::Success)?;
        }
        Ok(b)
    }

    fn empty_budget(&self) -> Result<SecurityBudget> {
        let eps_channel = (-(self.cfg.channel_margin as f64) / 2.0).exp2();
        let eps_qkd = self.cfg.eps_ec + self.cfg.eps_pe + self.cfg.eps_pa;
        SecurityBudget::new(self.cfg.eps0, eps_channel, eps_qkd, self.cfg.eps_sec)
    }

    /// Hello exchange, `rounds` rounds, then close. Refuses to start if the
    /// budget does not allow `rounds` rounds.
    pub fn run_session(&mut self, link: &mut dyn Link, rounds: u64) -> Result<()> {
        let planned = self.empty_budget()?.planned_rounds();
        if rounds > planned {
            return Err(Error::InvalidBudget(format!(
                "{rounds} rounds requested, the security budget allows {planned}"
            )));
        }
        self.hello(link)?;
        for _ in 0..rounds {
            self.run_round(link)?;
        }
        self.close(link)
    }

    pub fn hello(&mut self, link: &mut dyn Link) -> Result<()> {
        let ours = self.cfg.digest();
        let theirs = match self.role {
            Role::Alice => {
                link.send(Control::Hello(ours).to_frame())?;
                link.recv()?
            }
            Role::Bob => {
                let f = link.recv()?;
                link.send(Control::Hello(ours).to_frame())?;
                f
            }
        };
        match Control::from_frame(&theirs, self.layout.n_sifted)? {
            Control::Hello(d) if d == ours => Ok(()),
            Control::Hello(_) => Err(session_err("peer configuration differs")),
            other => Err(session_err(format!("expected hello, got {other:?}"))),
        }
    }

    pub fn run_round(&mut self, link: &mut dyn Link) -> Result<()> {
        self.round += 1;
        if !self.dos && self.pool.available() < self.worst_case_round_key() {
            self.dos = true;
        }
        match (self.role, self.dos) {
            (Role::Alice, false) => self.alice_round(link),
            (Role::Bob, false) => self.bob_round(link),
            (Role::Alice, true) => self.alice_dos_round(link),
            (Role::Bob, true) => self.bob_dos_round(link),
        }
    }

    fn recv_control(&mut self, link: &mut dyn Link) -> Result<Control> {
        Control::from_frame(&link.recv()?, self.layout.n_sifted)
    }

    fn recv_channel(&mut self, link: &mut dyn Link, shape: (usize, usize)) -> Result<ChannelTranscript> {
        check_shape(&parse_channel_frame(&link.recv()?)?, shape)
    }

    fn expect_round_start(&mut self, link: &mut dyn Link) -> Result<()> {
        match self.recv_control(link)? {
            Control::RoundStart(r) if r as u64 == self.round => Ok(()),
            other => Err(session_err(format!(
                "expected start of round {}, got {other:?}",
                self.round
            ))),
        }
    }

    fn pe_shape(&self) -> (usize, usize) {
        (self.layout.n_pe, self.layout.l_pe)
    }

    fn flag_shape(&self) -> (usize, usize) {
        (self.layout.n_flag, self.layout.l_flag)
    }

    fn ec_shape(&self) -> (usize, usize) {
        (self.layout.n_ec_max, self.layout.l_ec_max)
    }

    fn status_shape(&self) -> (usize, usize) {
        (self.layout.n_status, self.layout.l_status)
    }

    /// Settings exchange and measurement; returns both settings, this lab's
    /// device outputs and the sifted positions.
    fn measure(&mut self, own: &[Basis], other: &[Basis]) -> Result<(Vec<bool>, Sifted)> {
        let (alice_bases, bob_bases) = match self.role {
            Role::Alice => (own, other),
            Role::Bob => (other, own),
        };
        let mut source = rng::derive(self.source_seed, &format!("source/{}", self.round));
        let physical = measure_phase(alice_bases, bob_bases, self.cfg.q_noise, &mut source);
        let mine = match self.role {
            Role::Alice => physical.alice,
            Role::Bob => physical.bob,
        };
        let keys = self.pool.unconsumed();
        let outputs = self.device.outputs(&DeviceInput {
            round: self.round,
            bases: own,
            physical: &mine,
            keys: &keys,
        });
        if outputs.len() != own.len() {
            return Err(session_err(format!(
                "device returned {} outputs for {} settings",
                outputs.len(),
                own.len()
            )));
        }
        Ok((outputs, sift(alice_bases, bob_bases)))
    }

    fn shortfall(&self, sifted: &Sifted) -> bool {
        sifted.key.len() < self.layout.n_sifted + self.layout.m || sifted.chsh.len() < self.layout.m_chsh
    }

    /// PE plaintext: status byte, key-sample values, CHSH-sample values, zero padding.
    fn pe_plaintext(&self, status: u8, values: &[bool]) -> BitString {
        let mut bits = BitString::zeros(self.layout.l_pe);
        for i in 0..8 {
            bits.set_bit(i, (status >> i) & 1 == 1);
        }
        for (j, &v) in values.iter().enumerate() {
            bits.set_bit(8 + j, v);
        }
        bits
    }

    /// Encrypts the PE plaintext under the configured channel. For the naive
    /// variant, `positions` gives the measurement position behind each value.
    fn seal_pe(&mut self, plain: &BitString, positions: &[usize]) -> Result<ChannelPayload> {
        match self.cfg.channel {
            ChannelVariant::InsiderProof => {
                let key = self.pool.dispense(self.layout.n_pe)?;
                seal_padded(plain, &key, self.pe_shape(), &mut self.rng)
            }
            ChannelVariant::NaiveOtp => {
                let window = self.pool.dispense(self.pe_key_bits())?;
                let c = plain.xor(&self.naive_pad(&window, positions))?;
                Ok(ChannelTranscript {
                    r: BitString::zeros(self.layout.n_pe),
                    c,
                }
                .to_payload())
            }
        }
    }

    fn open_pe(&mut self, t: &ChannelTranscript, positions: &[usize]) -> Result<BitString> {
        match self.cfg.channel {
            ChannelVariant::InsiderProof => {
                let key = self.pool.dispense(self.layout.n_pe)?;
                open_padded(t, &key, self.layout.l_pe)
            }
            ChannelVariant::NaiveOtp => {
                let window = self.pool.dispense(self.pe_key_bits())?;
                t.c.xor(&self.naive_pad(&window, positions))
            }
        }
    }

    /// Pad for the naive variant: the status byte uses the window tail, each
    /// value the window bit at its measurement position.
    fn naive_pad(&self, window: &BitString, positions: &[usize]) -> BitString {
        let n_raw = self.layout.n_raw;
        let mut pad = BitString::zeros(self.layout.l_pe);
        for i in 0..8 {
            pad.set_bit(i, window.bit(n_raw + i));
        }
        for (j, &p) in positions.iter().enumerate() {
            pad.set_bit(8 + j, window.bit(p));
        }
        pad
    }

    fn alice_round(&mut self, link: &mut dyn Link) -> Result<()> {
        let mut rec = PartyRound::new(self.round);
        let layout = self.layout.clone();
        link.send(Control::RoundStart(self.round as u32).to_frame())?;
        let own = random_bases(layout.n_raw, &mut self.rng);
        link.send(basis_frame(&own))?;
        let other = parse_basis_frame(&link.recv()?, layout.n_raw)?;
        let (outputs, sifted) = self.measure(&own, &other)?;

        let key_len = layout.n_sifted + layout.m;
        let shortfall = self.shortfall(&sifted);
        let pe = if shortfall {
            PeIndices::random(layout.m, layout.m_chsh, &mut self.rng)
        } else {
            PeIndices::choose(key_len, &sifted.chsh, layout.m, layout.m_chsh, &mut self.rng)
        };
        link.send(Control::PeIndices(pe.clone()).to_frame())?;

        let status = match &self.pending {
            Some(p) if p.key.is_some() => STATUS_OK,
            _ => 0,
        };
        let positions: Vec<usize> = if shortfall {
            vec![]
        } else {
            pe.key
                .iter()
                .map(|&i| sifted.key[i as usize])
                .chain(pe.chsh.iter().map(|&p| p as usize))
                .collect()
        };
        let values: Vec<bool> = positions.iter().map(|&p| outputs[p]).collect();
        let plain = self.pe_plaintext(status, &values);
        let payload = self.seal_pe(&plain, &positions)?;
        link.send(channel_frame(&payload)?)?;
        rec.key_consumed += self.pe_key_bits();
        self.commit_pending()?;

        let flag_t = self.recv_channel(link, self.flag_shape())?;
        let k_flag = self.pool.dispense(layout.n_flag)?;
        rec.key_consumed += layout.n_flag;
        let flag = open_padded(&flag_t, &k_flag, layout.l_flag)?.to_u64() as u8;
        let (code_seed, tag_seed) = match self.recv_control(link)? {
            Control::EcPublic { code_seed, tag_seed } => (code_seed, tag_seed),
            other => return Err(session_err(format!("expected EC public data, got {other:?}"))),
        };
        let ec_t = self.recv_channel(link, self.ec_shape())?;
        let pa_seed = BitString::random(layout.n_sifted, &mut self.rng);
        link.send(Control::PaSeed(pa_seed.clone()).to_frame())?;

        let class = (flag >> 1) as usize;
        if flag & 1 == 1 {
            rec.status = RoundStatus::Aborted(shortfall.then_some(AbortReason::Shortfall));
        } else if class == 0 || class > layout.max_class {
            rec.status = RoundStatus::EcFailed;
        } else {
            let k_ec = self.pool.dispense(layout.n_ec(class))?;
            rec.key_consumed += layout.n_ec(class);
            rec.ec_class = Some(class);
            let bundle = EcBundle::from_bits(
                &open_padded(&ec_t, &k_ec, layout.l_ec(class))?,
                class * layout.syndrome_step,
                layout.tag_bits,
            )?;
            let s_obs = dequantize_s(bundle.s16);
            rec.q_obs = Some(dequantize_q(bundle.q16));
            rec.s_obs = Some(s_obs);
            let key = if shortfall {
                None
            } else {
                let raw_pos = remaining_key_positions(&sifted.key, key_len, &pe.key);
                let raw = BitString::from_bits(&raw_pos.iter().map(|&p| outputs[p]).collect::<Vec<_>>());
                let code = Ldpc::new(layout.n_sifted, class * layout.syndrome_step, code_seed);
                let outcome = reconcile(
                    &raw,
                    &code,
                    &bundle.syndrome,
                    &bundle.tag,
                    &tag_seed,
                    decoder_prior(&layout, &self.cfg, class),
                    self.cfg.ec_max_iterations,
                )?;
                let out_len = round_output_length(layout.n_sifted, self.rate.as_ref(), s_obs, self.cfg.eps_pa);
                match outcome.corrected {
                    Some(k) if outcome.verified && out_len > 0 => {
                        Some(privacy_amplify(&k, &pa_seed, out_len)?)
                    }
                    _ => None,
                }
            };
            rec.status = if key.is_some() {
                RoundStatus::Success
            } else {
                RoundStatus::EcFailed
            };
            rec.key = key.clone();
            self.pending = Some(Pending {
                slot: self.rounds.len(),
                key,
            });
        }
        self.rounds.push(rec);
        Ok(())
    }

    fn bob_round(&mut self, link: &mut dyn Link) -> Result<()> {
        let mut rec = PartyRound::new(self.round);
        let layout = self.layout.clone();
        self.expect_round_start(link)?;
        let other = parse_basis_frame(&link.recv()?, layout.n_raw)?;
        let own = random_bases(layout.n_raw, &mut self.rng);
        link.send(basis_frame(&own))?;
        let (outputs, sifted) = self.measure(&own, &other)?;

        let key_len = layout.n_sifted + layout.m;
        let shortfall = self.shortfall(&sifted);
        let pe = match self.recv_control(link)? {
            Control::PeIndices(p) => p,
            other => return Err(session_err(format!("expected PE positions, got {other:?}"))),
        };
        let valid = !shortfall
            && pe.key.len() == layout.m
            && pe.chsh.len() == layout.m_chsh
            && pe.valid_for(key_len, &sifted.chsh);
        let positions: Vec<usize> = if valid {
            pe.key
                .iter()
                .map(|&i| sifted.key[i as usize])
                .chain(pe.chsh.iter().map(|&p| p as usize))
                .collect()
        } else {
            vec![]
        };
        let pe_t = self.recv_channel(link, self.pe_shape())?;
        let plain = self.open_pe(&pe_t, &positions)?;
        rec.key_consumed += self.pe_key_bits();
        let status = plain.slice(0, 8).to_u64() as u8;
        self.resolve_pending(status == STATUS_OK)?;

        // Estimate and decide.
        let (mut reason, estimate) = if shortfall {
            (Some(AbortReason::Shortfall), None)
        } else if !valid {
            (Some(AbortReason::BadIndices), None)
        } else {
            let alice_key: Vec<bool> = (0..layout.m).map(|j| plain.bit(8 + j)).collect();
            let bob_key: Vec<bool> = positions[..layout.m].iter().map(|&p| outputs[p]).collect();
            let chsh: Vec<ChshSample> = pe
                .chsh
                .iter()
                .enumerate()
                .map(|(j, &p)| ChshSample {
                    alice_basis: other[p as usize],
                    bob_basis: own[p as usize],
                    alice: plain.bit(8 + layout.m + j),
                    bob: outputs[p as usize],
                })
                .collect();
            let est = parameter_estimate(&alice_key, &bob_key, &chsh, self.cfg.pe_margin);
            let reason = if est.q_obs > self.cfg.abort_threshold_q {
                Some(AbortReason::HighErrorRate)
            } else {
                match est.s_obs {
                    None => Some(AbortReason::NoChshEstimate),
                    Some(s) if s < self.cfg.abort_threshold_s => Some(AbortReason::LowChsh),
                    Some(_) => None,
                }
            };
            (reason, Some(est))
        };
        let mut q16 = 0;
        let mut s16 = 0;
        let mut out_len = 0;
        if let Some(est) = &estimate {
            q16 = quantize_q(est.q_obs);
            s16 = quantize_s(est.s_obs.unwrap_or(0.0));
            rec.q_obs = Some(dequantize_q(q16));
            rec.s_obs = Some(dequantize_s(s16));
            if reason.is_none() {
                out_len = round_output_length(
                    layout.n_sifted,
                    self.rate.as_ref(),
                    dequantize_s(s16),
                    self.cfg.eps_pa,
                );
                if out_len == 0 {
                    reason = Some(AbortReason::NoKeyLength);
                }
            }
        }
        let class = match (&estimate, reason) {
            (Some(est), None) => {
                let (mut errors, mut samples) = (est.errors, est.samples);
                for &(e, s) in &self.history {
                    errors += e;
                    samples += s;
                }
                let q_design = design_error_rate(errors, samples, self.cfg.ec_confidence_z);
                Some(syndrome_class(&layout, &self.cfg, q_design))
            }
            _ => None,
        };
        rec.estimate = estimate.clone();

        let flag = match class {
            Some(c) => (c as u8) << 1,
            None => 1,
        };
        let k_flag = self.pool.dispense(layout.n_flag)?;
        rec.key_consumed += layout.n_flag;
        let flag_bits = BitString::from_u64(8, flag as u64)?;
        link.send(channel_frame(&seal_padded(&flag_bits, &k_flag, self.flag_shape(), &mut self.rng)?)?)?;

        let code_seed = self.rng.next_u64();
        let tag_seed = BitString::random(layout.n_sifted, &mut self.rng);
        link.send(
            Control::EcPublic {
                code_seed,
                tag_seed: tag_seed.clone(),
            }
            .to_frame(),
        )?;

        let mut raw = None;
        match class {
            None => {
                let p = random_payload(self.ec_shape(), &mut self.rng);
                link.send(channel_frame(&p)?)?;
            }
            Some(c) => {
                let raw_pos = remaining_key_positions(&sifted.key, key_len, &pe.key);
                let bob_raw = BitString::from_bits(&raw_pos.iter().map(|&p| outputs[p]).collect::<Vec<_>>());
                let code = Ldpc::new(layout.n_sifted, c * layout.syndrome_step, code_seed);
                let bundle = EcBundle {
                    syndrome: code.syndrome(&bob_raw),
                    q16,
                    s16,
                    tag: verification_tag(&bob_raw, &tag_seed, layout.tag_bits)?,
                };
                let k_ec = self.pool.dispense(layout.n_ec(c))?;
                rec.key_consumed += layout.n_ec(c);
                rec.ec_class = Some(c);
                let p = seal_padded(&bundle.to_bits(), &k_ec, self.ec_shape(), &mut self.rng)?;
                link.send(channel_frame(&p)?)?;
                let est = estimate.as_ref().expect("class implies estimate");
                self.history.push_back((est.errors, est.samples));
                while self.history.len() > self.cfg.ec_history {
                    self.history.pop_front();
                }
                raw = Some(bob_raw);
            }
        }

        let pa_seed = match self.recv_control(link)? {
            Control::PaSeed(s) => s,
            other => return Err(session_err(format!("expected PA seed, got {other:?}"))),
        };
        match raw {
            None => rec.status = RoundStatus::Aborted(reason),
            Some(bob_raw) => {
                let key = privacy_amplify(&bob_raw, &pa_seed, out_len)?;
                rec.status = RoundStatus::Pending;
                self.pending = Some(Pending {
                    slot: self.rounds.len(),
                    key: Some(key),
                });
            }
        }
        self.rounds.push(rec);
        Ok(())
    }

    /// Alice: deposit the previous round's key once its status has been sent.
    fn commit_pending(&mut self) -> Result<()> {
        if let Some(p) = self.pending.take() {
            if let Some(key) = p.key {
                self.pool.deposit(&key, KeyOrigin::Round(self.rounds[p.slot].index))?;
            }
        }
        Ok(())
    }

    /// Bob: apply Alice's verification status to the pending round.
    fn resolve_pending(&mut self, ok: bool) -> Result<()> {
        if let Some(p) = self.pending.take() {
            let rec = &mut self.rounds[p.slot];
            match p.key {
                Some(key) if ok => {
                    self.pool.deposit(&key, KeyOrigin::Round(rec.index))?;
                    rec.status = RoundStatus::Success;
                    rec.key = Some(key);
                }
                _ => rec.status = RoundStatus::EcFailed,
            }
        }
        Ok(())
    }

    fn alice_dos_round(&mut self, link: &mut dyn Link) -> Result<()> {
        let layout = self.layout.clone();
        link.send(Control::RoundStart(self.round as u32).to_frame())?;
        link.send(basis_frame(&random_bases(layout.n_raw, &mut self.rng)))?;
        parse_basis_frame(&link.recv()?, layout.n_raw)?;
        let pe = PeIndices::random(layout.m, layout.m_chsh, &mut self.rng);
        link.send(Control::PeIndices(pe).to_frame())?;
        link.send(channel_frame(&random_payload(self.pe_shape(), &mut self.rng))?)?;
        self.recv_channel(link, self.flag_shape())?;
        self.recv_control(link)?;
        self.recv_channel(link, self.ec_shape())?;
        let seed = BitString::random(layout.n_sifted, &mut self.rng);
        link.send(Control::PaSeed(seed).to_frame())?;
        self.rounds.push(PartyRound::new(self.round));
        Ok(())
    }

    fn bob_dos_round(&mut self, link: &mut dyn Link) -> Result<()> {
        let layout = self.layout.clone();
        self.expect_round_start(link)?;
        parse_basis_frame(&link.recv()?, layout.n_raw)?;
        link.send(basis_frame(&random_bases(layout.n_raw, &mut self.rng)))?;
        self.recv_control(link)?;
        self.recv_channel(link, self.pe_shape())?;
        link.send(channel_frame(&random_payload(self.flag_shape(), &mut self.rng))?)?;
        let code_seed = self.rng.next_u64();
        let tag_seed = BitString::random(layout.n_sifted, &mut self.rng);
        link.send(Control::EcPublic { code_seed, tag_seed }.to_frame())?;
        link.send(channel_frame(&random_payload(self.ec_shape(), &mut self.rng))?)?;
        self.recv_control(link)?;
        self.rounds.push(PartyRound::new(self.round));
        Ok(())
    }

    /// Close frame plus the final encrypted status message, which settles the
    /// last round.
    pub fn close(&mut self, link: &mut dyn Link) -> Result<()> {
        let layout = self.layout.clone();
        let have_key = self.pool.available() >= layout.n_status;
        match self.role {
            Role::Alice => {
                link.send(Control::Close.to_frame())?;
                let payload = if have_key {
                    let status = match &self.pending {
                        Some(p) if p.key.is_some() => STATUS_OK,
                        _ => 0,
                    };
                    let k = self.pool.dispense(layout.n_status)?;
                    let msg = BitString::from_u64(8, status as u64)?;
                    seal_padded(&msg, &k, self.status_shape(), &mut self.rng)?
                } else {
                    random_payload(self.status_shape(), &mut self.rng)
                };
                link.send(channel_frame(&payload)?)?;
                self.commit_pending()
            }
            Role::Bob => {
                match self.recv_control(link)? {
                    Control::Close => {}
                    other => return Err(session_err(format!("expected close, got {other:?}"))),
                }
                let t = self.recv_channel(link, self.status_shape())?;
                let ok = if have_key {
                    let k = self.pool.dispense(layout.n_status)?;
                    open_padded(&t, &k, layout.l_status)?.to_u64() as u8 == STATUS_OK
                } else {
                    false
                };
                self.resolve_pending(ok)
            }
        }
    }
}
