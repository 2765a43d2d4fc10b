//! Round configuration: a plain-text `key = value` file plus the message
//! sizes derived from it.
//!
//! Blank lines and lines starting with `#` are ignored. Probabilities may be
//! written as decimals or as powers of two (`2^-32`).

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::budget::binary_entropy;
use crate::error::{Error, Result};

/// Which channel carries the parameter-estimation values.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChannelVariant {
    /// Hash-then-pad with a fresh public seed.
    InsiderProof,
    /// Deliberately broken: each reported outcome is padded with the pool bit
    /// at the outcome's measurement position. For demonstrations only.
    NaiveOtp,
}

/// Device behaviour selector for one party.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DeviceKind {
    Honest,
    /// Outputs `d[i mod |d|] ^ K[i]`, where `K` is the pool key the device
    /// expects to pad outcome `i` under the naive channel.
    NaiveLeak(Vec<bool>),
    /// Outputs uniform noise in the listed rounds (1-based), honest otherwise.
    AbortSignaller(Vec<u64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub n_sifted: usize,
    pub q_noise: f64,
    pub abort_threshold_q: f64,
    pub abort_threshold_s: f64,
    pub pe_coefficient: f64,
    pub chsh_coefficient: f64,
    pub pe_margin: f64,
    pub eps0: f64,
    pub eps_sec: f64,
    pub eps_pe: f64,
    pub eps_ec: f64,
    pub eps_pa: f64,
    pub channel_margin: usize,
    pub ec_efficiency: f64,
    pub ec_confidence_z: f64,
    pub ec_history: usize,
    pub ec_max_iterations: usize,
    pub source_seed: u64,
    pub channel: ChannelVariant,
    pub device_alice: DeviceKind,
    pub device_bob: DeviceKind,
    pub initial_pool_bits: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_sifted: 4096,
            q_noise: 0.01,
            abort_threshold_q: 0.11,
            abort_threshold_s: 2.2,
            pe_coefficient: 10.0,
            chsh_coefficient: 10.0,
            pe_margin: 0.05,
            eps0: 1e-9,
            eps_sec: 1e-6,
            eps_pe: 1e-9,
            eps_ec: 2f64.powi(-32),
            eps_pa: 2f64.powi(-32),
            channel_margin: 64,
            ec_efficiency: 1.6,
            ec_confidence_z: 2.0,
            ec_history: 16,
            ec_max_iterations: 60,
            source_seed: 0,
            channel: ChannelVariant::InsiderProof,
            device_alice: DeviceKind::Honest,
            device_bob: DeviceKind::Honest,
            initial_pool_bits: 32768,
        }
    }
}

fn parse_prob(key: &str, v: &str) -> Result<f64> {
    let v = v.trim();
    let x = if let Some(exp) = v.strip_prefix("2^") {
        let e: f64 = exp
            .parse()
            .map_err(|_| Error::Config(format!("{key}: bad exponent in {v:?}")))?;
        e.exp2()
    } else {
        v.parse::<f64>()
            .map_err(|_| Error::Config(format!("{key}: not a number: {v:?}")))?
    };
    if !x.is_finite() {
        return Err(Error::Config(format!("{key}: not finite: {v:?}")));
    }
    Ok(x)
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: not a non-negative integer: {v:?}")))
}

fn parse_bits_hex(key: &str, v: &str) -> Result<Vec<bool>> {
    let v = v.trim();
    if v.is_empty() {
        return Err(Error::Config(format!("{key}: empty leak string")));
    }
    let mut bits = Vec::with_capacity(4 * v.len());
    for c in v.chars().rev() {
        let d = c
            .to_digit(16)
            .ok_or_else(|| Error::Config(format!("{key}: bad hex digit {c:?}")))?;
        for b in 0..4 {
            bits.push((d >> b) & 1 == 1);
        }
    }
    Ok(bits)
}

fn bits_to_hex(bits: &[bool]) -> String {
    bits.chunks(4)
        .rev()
        .map(|ch| {
            let d = ch.iter().enumerate().fold(0u32, |a, (i, &b)| a | (b as u32) << i);
            char::from_digit(d, 16).unwrap()
        })
        .collect()
}

impl DeviceKind {
    pub fn parse(key: &str, v: &str) -> Result<Self> {
        let v = v.trim();
        if v == "honest" {
            return Ok(DeviceKind::Honest);
        }
        if let Some(hex) = v.strip_prefix("naive-leak:") {
            return Ok(DeviceKind::NaiveLeak(parse_bits_hex(key, hex)?));
        }
        if let Some(list) = v.strip_prefix("abort-signaller:") {
            let rounds = list
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| {
                    s.trim()
                        .parse::<u64>()
                        .map_err(|_| Error::Config(format!("{key}: bad round number {s:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            return Ok(DeviceKind::AbortSignaller(rounds));
        }
        Err(Error::Config(format!(
            "{key}: expected honest, naive-leak:<hex> or abort-signaller:<r1,r2,...>, got {v:?}"
        )))
    }
}

impl fmt::Display for DeviceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeviceKind::Honest => write!(f, "honest"),
            DeviceKind::NaiveLeak(d) => write!(f, "naive-leak:{}", bits_to_hex(d)),
            DeviceKind::AbortSignaller(r) => {
                let list: Vec<String> = r.iter().map(|x| x.to_string()).collect();
                write!(f, "abort-signaller:{}", list.join(","))
            }
        }
    }
}

impl SimConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Parses `key = value` lines over the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = SimConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value, got {raw:?}", lineno + 1))
            })?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "n_sifted" => self.n_sifted = parse_usize(key, v)?,
            "q_noise" => self.q_noise = parse_prob(key, v)?,
            "abort_threshold_q" => self.abort_threshold_q = parse_prob(key, v)?,
            "abort_threshold_s" => self.abort_threshold_s = parse_prob(key, v)?,
            "pe_coefficient" => self.pe_coefficient = parse_prob(key, v)?,
            "chsh_coefficient" => self.chsh_coefficient = parse_prob(key, v)?,
            "pe_margin" => self.pe_margin = parse_prob(key, v)?,
            "eps0" => self.eps0 = parse_prob(key, v)?,
            "eps_sec" => self.eps_sec = parse_prob(key, v)?,
            "eps_pe" => self.eps_pe = parse_prob(key, v)?,
            "eps_ec" => self.eps_ec = parse_prob(key, v)?,
            "eps_pa" => self.eps_pa = parse_prob(key, v)?,
            "channel_margin" => self.channel_margin = parse_usize(key, v)?,
            "ec_efficiency" => self.ec_efficiency = parse_prob(key, v)?,
            "ec_confidence_z" => self.ec_confidence_z = parse_prob(key, v)?,
            "ec_history" => self.ec_history = parse_usize(key, v)?,
            "ec_max_iterations" => self.ec_max_iterations = parse_usize(key, v)?,
            "source_seed" => {
                self.source_seed = v
                    .parse()
                    .map_err(|_| Error::Config(format!("{key}: not a u64: {v:?}")))?
            }
            "channel" => {
                self.channel = match v {
                    "insider-proof" => ChannelVariant::InsiderProof,
                    "naive-otp" => ChannelVariant::NaiveOtp,
                    _ => {
                        return Err(Error::Config(format!(
                            "{key}: expected insider-proof or naive-otp, got {v:?}"
                        )))
                    }
                }
            }
            "device_alice" => self.device_alice = DeviceKind::parse(key, v)?,
            "device_bob" => self.device_bob = DeviceKind::parse(key, v)?,
            "initial_pool_bits" => self.initial_pool_bits = parse_usize(key, v)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_sifted < 16 {
            return bad(format!("n_sifted = {} is too small (minimum 16)", self.n_sifted));
        }
        if !(0.0..0.5).contains(&self.q_noise) {
            return bad(format!("q_noise = {} outside [0, 1/2)", self.q_noise));
        }
        if !(0.0..0.5).contains(&self.abort_threshold_q) {
            return bad(format!(
                "abort_threshold_q = {} outside [0, 1/2)",
                self.abort_threshold_q
            ));
        }
        if !(self.abort_threshold_s > 2.0 && self.abort_threshold_s <= crate::budget::MAX_CHSH) {
            return bad(format!(
                "abort_threshold_s = {} outside (2, 2 sqrt 2]",
                self.abort_threshold_s
            ));
        }
        if self.pe_coefficient <= 0.0 || self.chsh_coefficient <= 0.0 {
            return bad("PE subset coefficients must be positive".into());
        }
        for (name, v) in [
            ("eps0", self.eps0),
            ("eps_sec", self.eps_sec),
            ("eps_pe", self.eps_pe),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} = {v} outside [0, 1]"));
            }
        }
        for (name, v) in [("eps_ec", self.eps_ec), ("eps_pa", self.eps_pa)] {
            if !(v > 0.0 && v < 1.0) {
                return bad(format!("{name} = {v} outside (0, 1)"));
            }
        }
        if self.channel_margin == 0 {
            return bad("channel_margin must be positive".into());
        }
        if self.ec_efficiency < 1.0 {
            return bad(format!("ec_efficiency = {} below 1", self.ec_efficiency));
        }
        if self.ec_max_iterations == 0 {
            return bad("ec_max_iterations must be positive".into());
        }
        let layout = Layout::new(self)?;
        if layout.m + layout.m_chsh > self.n_sifted {
            return bad("PE subsets larger than the sifted key".into());
        }
        if layout.pa_margin >= self.n_sifted {
            return bad("privacy amplification margin exceeds the key length".into());
        }
        Ok(())
    }

    /// Canonical `key = value` rendering of every field.
    pub fn canonical(&self) -> String {
        let mut m = BTreeMap::new();
        m.insert("n_sifted", self.n_sifted.to_string());
        m.insert("q_noise", format!("{:e}", self.q_noise));
        m.insert("abort_threshold_q", format!("{:e}", self.abort_threshold_q));
        m.insert("abort_threshold_s", format!("{:e}", self.abort_threshold_s));
        m.insert("pe_coefficient", format!("{:e}", self.pe_coefficient));
        m.insert("chsh_coefficient", format!("{:e}", self.chsh_coefficient));
        m.insert("pe_margin", format!("{:e}", self.pe_margin));
        m.insert("eps0", format!("{:e}", self.eps0));
        m.insert("eps_sec", format!("{:e}", self.eps_sec));
        m.insert("eps_pe", format!("{:e}", self.eps_pe));
        m.insert("eps_ec", format!("{:e}", self.eps_ec));
        m.insert("eps_pa", format!("{:e}", self.eps_pa));
        m.insert("channel_margin", self.channel_margin.to_string());
        m.insert("ec_efficiency", format!("{:e}", self.ec_efficiency));
        m.insert("ec_confidence_z", format!("{:e}", self.ec_confidence_z));
        m.insert("ec_history", self.ec_history.to_string());
        m.insert("ec_max_iterations", self.ec_max_iterations.to_string());
        m.insert("source_seed", self.source_seed.to_string());
        m.insert(
            "channel",
            match self.channel {
                ChannelVariant::InsiderProof => "insider-proof".into(),
                ChannelVariant::NaiveOtp => "naive-otp".into(),
            },
        );
        m.insert("device_alice", self.device_alice.to_string());
        m.insert("device_bob", self.device_bob.to_string());
        m.insert("initial_pool_bits", self.initial_pool_bits.to_string());
        m.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// SHA-256 of [`canonical`](Self::canonical); exchanged at session start.
    /// Device selections are local to each lab and are left out.
    pub fn digest(&self) -> [u8; 32] {
        let shared: String = self
            .canonical()
            .lines()
            .filter(|l| !l.starts_with("device_") && !l.starts_with("initial_pool_bits"))
            .map(|l| format!("{l}\n"))
            .collect();
        Sha256::digest(shared.as_bytes()).into()
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self).expect("validated config")
    }
}

/// Round `x` up to a multiple of `k`.
pub(crate) fn round_up(x: usize, k: usize) -> usize {
    x.div_ceil(k) * k
}

/// Upper end of the Wilson score interval for `k` successes in `n` trials.
pub fn wilson_upper(k: usize, n: usize, z: f64) -> f64 {
    wilson_interval(k, n, z).1
}

/// Wilson score interval for a binomial proportion with `k` hits in `n` trials.
pub fn wilson_interval(k: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let centre = p + z2 / (2.0 * n);
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    let denom = 1.0 + z2 / n;
    let lo = if k == 0 { 0.0 } else { ((centre - half) / denom).max(0.0) };
    let hi = if k as f64 == n { 1.0 } else { ((centre + half) / denom).min(1.0) };
    (lo, hi)
}

/// Every message size in a round, fixed by the configuration alone.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub n_sifted: usize,
    /// Key-subset sample size `ceil(c0 log2 N)`.
    pub m: usize,
    /// CHSH sample size.
    pub m_chsh: usize,
    /// Measurements per round.
    pub n_raw: usize,
    pub l_pe: usize,
    pub n_pe: usize,
    pub l_flag: usize,
    pub n_flag: usize,
    pub tag_bits: usize,
    /// Syndrome length step; EC size class `c` carries `c * syndrome_step` bits.
    pub syndrome_step: usize,
    pub max_class: usize,
    pub l_ec_max: usize,
    pub n_ec_max: usize,
    pub l_status: usize,
    pub n_status: usize,
    pub pa_margin: usize,
    pub channel_margin: usize,
}

/// Fixed-point fields inside the EC bundle: Q and S, 16 bits each.
pub const EC_STATS_BITS: usize = 32;
pub const MAX_CLASS: usize = 127;

impl Layout {
    pub fn new(cfg: &SimConfig) -> Result<Self> {
        let n = cfg.n_sifted;
        let log_n = (n as f64).log2();
        let m = ((cfg.pe_coefficient * log_n).ceil() as usize).max(1);
        let m_chsh = ((cfg.chsh_coefficient * log_n).ceil() as usize).max(4);
        let need = (n + m) as f64;
        let n_raw = (4.0 * need + 8.0 * (3.0 * need).sqrt()).ceil() as usize + 32;
        let margin = cfg.channel_margin;
        let l_pe = round_up(8 + m + m_chsh, 8);
        let tag_bits = (1.0 / cfg.eps_ec).log2().ceil() as usize;
        let pa_margin = (2.0 * (1.0 / cfg.eps_pa).log2()).ceil() as usize;

        // Largest syndrome: design rate at the abort threshold, widened by the
        // confidence bound for a single round's sample.
        let q_cap = wilson_upper(
            (cfg.abort_threshold_q * m as f64).floor() as usize,
            m,
            cfg.ec_confidence_z,
        )
        .min(0.5);
        let s_cap = (cfg.ec_efficiency * n as f64 * binary_entropy(q_cap)?).ceil() as usize;
        let s_cap = s_cap.clamp(64, 2 * n);
        let syndrome_step = round_up(s_cap.div_ceil(MAX_CLASS), 64);
        let max_class = s_cap.div_ceil(syndrome_step);
        let l_ec_max = max_class * syndrome_step + EC_STATS_BITS + tag_bits;
        if tag_bits >= n {
            return Err(Error::Config("verification tag longer than the key".into()));
        }
        Ok(Layout {
            n_sifted: n,
            m,
            m_chsh,
            n_raw,
            l_pe,
            n_pe: 2 * l_pe + margin,
            l_flag: 8,
            n_flag: 16 + margin,
            tag_bits,
            syndrome_step,
            max_class,
            l_ec_max,
            n_ec_max: 2 * l_ec_max + margin,
            l_status: 8,
            n_status: 16 + margin,
            pa_margin,
            channel_margin: margin,
        })
    }

    /// EC message length for size class `c`.
    pub fn l_ec(&self, class: usize) -> usize {
        class * self.syndrome_step + EC_STATS_BITS + self.tag_bits
    }

    pub fn n_ec(&self, class: usize) -> usize {
        2 * self.l_ec(class) + self.channel_margin
    }

    /// Pool bits a round may need in the worst case, including the closing
    /// status message.
    pub fn worst_case_round_key(&self) -> usize {
        self.n_pe + self.n_flag + self.n_ec_max + self.n_status
    }
}
