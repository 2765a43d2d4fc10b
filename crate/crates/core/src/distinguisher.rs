//! Distinguishing advantage between real channel views and the ideal view
//! (the insider's message next to a uniform `(c, r)`), plus a statistical
//! battery for recorded session transcripts.
//!
//! The eavesdropper sees `(c, r)`. `exact_advantage` is the total-variation
//! distance between the joint law of `(a, c, r)` and `law(a) x uniform(c, r)`,
//! computed by enumerating every key and seed.

use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use rand::RngCore;
use sha2::{Digest, Sha256};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::bits::BitString;
use crate::error::{Error, Result};
use crate::hashfam::{low_mask, tabulate, within_channel_bound, HashParams, SeedCounts, ENUMERATION_LIMIT};
use crate::ipchannel::encrypt_with_seed;
use crate::qkdsim::config::wilson_interval;
use crate::qkdsim::split_rounds;
use crate::qkdsim::ChannelVariant;
use crate::wire::{parse_log_line, ChannelPayload, Frame, FrameType};

/// Two-sided z for the empirical confidence intervals (about 99.9%).
pub const EMPIRICAL_Z: f64 = 3.29;
/// Significance level for the transcript battery.
pub const BATTERY_ALPHA: f64 = 0.01;
/// Smallest trial count accepted by [`empirical_advantage`].
pub const MIN_TRIALS: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttackKind {
    /// `a = trunc(d, l)`: ignores the key.
    Constant,
    /// `a = trunc(k, l)`.
    TruncateKey,
    /// `a = trunc(d ^ k, l)`: the pad-cancelling attack on a naive one-time pad.
    XorKey,
    /// A fixed pseudorandom function of `(k, d)` selected by a seed.
    Random(u64),
}

/// An insider's message choice together with the channel it is sent over.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttackSpec {
    pub kind: AttackKind,
    pub variant: ChannelVariant,
}

impl AttackSpec {
    pub fn new(kind: AttackKind, variant: ChannelVariant) -> Self {
        AttackSpec { kind, variant }
    }

    /// Parses `constant`, `truncate-key`, `xor-key` or `random:<seed>`.
    pub fn parse(name: &str, variant: ChannelVariant) -> Result<Self> {
        let kind = match name {
            "constant" => AttackKind::Constant,
            "truncate-key" => AttackKind::TruncateKey,
            "xor-key" => AttackKind::XorKey,
            _ => match name.strip_prefix("random:") {
                Some(seed) => AttackKind::Random(
                    seed.parse()
                        .map_err(|_| Error::Parse(format!("bad random attack seed {seed:?}")))?,
                ),
                None => {
                    return Err(Error::Parse(format!(
                        "unknown attack {name:?} (constant, truncate-key, xor-key, random:<seed>)"
                    )))
                }
            },
        };
        Ok(AttackSpec { kind, variant })
    }

    pub fn name(&self) -> String {
        match self.kind {
            AttackKind::Constant => "constant".into(),
            AttackKind::TruncateKey => "truncate-key".into(),
            AttackKind::XorKey => "xor-key".into(),
            AttackKind::Random(s) => format!("random:{s}"),
        }
    }

    /// The three structured attacks followed by `random_count` seeded random ones.
    pub fn catalogue(random_count: u64, variant: ChannelVariant) -> Vec<AttackSpec> {
        [AttackKind::Constant, AttackKind::TruncateKey, AttackKind::XorKey]
            .into_iter()
            .chain((0..random_count).map(AttackKind::Random))
            .map(|kind| AttackSpec { kind, variant })
            .collect()
    }

    /// The `l`-bit message sent when the shared key is `k` and the private data is `d`.
    pub fn message(&self, k: &BitString, d: &BitString, l: usize) -> BitString {
        match self.kind {
            AttackKind::Constant => d.resized(l),
            AttackKind::TruncateKey => k.resized(l),
            AttackKind::XorKey => {
                let width = l.max(d.len()).max(k.len());
                d.resized(width)
                    .xor(&k.resized(width))
                    .expect("equal widths")
                    .resized(l)
            }
            AttackKind::Random(seed) => random_message(seed, k, d, l),
        }
    }

    /// The ciphertext value an eavesdropper bets on: what `c` would equal if
    /// the pad cancelled out, i.e. `trunc(d, l)`, or all zeros for
    /// `truncate-key`.
    pub fn predicted_leak(&self, d: &BitString, l: usize) -> BitString {
        match self.kind {
            AttackKind::TruncateKey => BitString::zeros(l),
            _ => d.resized(l),
        }
    }
}

impl fmt::Display for AttackSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.name(), variant_name(self.variant))
    }
}

pub fn variant_name(v: ChannelVariant) -> &'static str {
    match v {
        ChannelVariant::InsiderProof => "insider-proof",
        ChannelVariant::NaiveOtp => "naive-otp",
    }
}

fn random_message(seed: u64, k: &BitString, d: &BitString, l: usize) -> BitString {
    let mut out = Vec::with_capacity(l.div_ceil(8));
    let mut block = 0u32;
    while out.len() * 8 < l {
        let mut h = Sha256::new();
        h.update(b"random-attack");
        h.update(seed.to_le_bytes());
        h.update((d.len() as u64).to_le_bytes());
        h.update(d.to_bytes_le());
        h.update((k.len() as u64).to_le_bytes());
        h.update(k.to_bytes_le());
        h.update(block.to_le_bytes());
        out.extend_from_slice(&h.finalize());
        block += 1;
    }
    out.truncate(l.div_ceil(8));
    if l % 8 != 0 {
        let last = out.len() - 1;
        out[last] &= (1u8 << (l % 8)) - 1;
    }
    BitString::from_bytes_le(l, &out).expect("sized to l bits")
}

fn pow2(e: usize) -> BigInt {
    BigInt::one() << e
}

/// Exact TV distance between the real view `(a, c, r)` and `law(a) x uniform(c, r)`
/// for uniform `k, r` in `{0,1}^n`, message length `l` and private data `d`.
pub fn exact_advantage(attack: &AttackSpec, n: usize, l: usize, d: &BitString) -> Result<BigRational> {
    if n > ENUMERATION_LIMIT {
        return Err(Error::EnumerationInfeasible {
            n,
            limit: ENUMERATION_LIMIT,
        });
    }
    if l == 0 || l >= n {
        return Err(Error::InvalidParameter(format!(
            "need 1 <= l < n, got n = {n}, l = {l}"
        )));
    }
    let labels = tabulate(|k| attack.message(k, d, l), n, l)?;
    let width = 1usize << l;
    let mut n_a = vec![0i64; width];
    for &a in &labels {
        n_a[a as usize] += 1;
    }
    match attack.variant {
        ChannelVariant::InsiderProof => {
            // For fixed a, c <-> y = f_r(k) is a bijection, so
            // TV = sum_{r,a,y} |2^l cnt(a,y) - N_a| / 2^(2n+l+1).
            let params = HashParams::with_degree(n, l)?;
            let total = SeedCounts::new(&params, &labels, l).fold(|cnt| {
                let mut s = 0u128;
                for a in 0..width {
                    for y in 0..width {
                        s += ((cnt[(a << l) | y] << l) - n_a[a]).unsigned_abs() as u128;
                    }
                }
                s
            });
            Ok(BigRational::new(BigInt::from(total), pow2(2 * n + l + 1)))
        }
        ChannelVariant::NaiveOtp => {
            // c = a ^ trunc(k, l); r is independent of everything.
            let mask = low_mask(l);
            let mut cnt = vec![0i64; width * width];
            for (k, &a) in labels.iter().enumerate() {
                let c = a as u64 ^ (k as u64 & mask);
                cnt[((a as usize) << l) | c as usize] += 1;
            }
            let mut total = 0u128;
            for a in 0..width {
                for c in 0..width {
                    total += ((cnt[(a << l) | c] << l) - n_a[a]).unsigned_abs() as u128;
                }
            }
            Ok(BigRational::new(BigInt::from(total), pow2(n + l + 1)))
        }
    }
}

/// `sqrt(2^(2l - n))` as a float, for reporting.
pub fn channel_bound(n: usize, l: usize) -> f64 {
    2f64.powf((2.0 * l as f64 - n as f64) / 2.0)
}

/// Monte-Carlo estimate of the single test "does `c` equal the predicted leak?".
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalEstimate {
    pub trials: usize,
    pub hits: usize,
    /// Hit rate and its Wilson interval.
    pub hit_rate: f64,
    pub hit_ci: (f64, f64),
    /// Hit rate minus the ideal-channel rate `2^-l`, with the shifted interval.
    /// A lower bound on the TV distance, not the distance itself.
    pub advantage: f64,
    pub advantage_ci: (f64, f64),
}

impl EmpiricalEstimate {
    pub fn ci_contains(&self, x: f64) -> bool {
        self.advantage_ci.0 <= x && x <= self.advantage_ci.1
    }
}

/// Samples `trials` channel uses with fresh uniform `k` (and `r`) and counts
/// how often the ciphertext equals the attack's predicted leak.
pub fn empirical_advantage<R: RngCore + ?Sized>(
    attack: &AttackSpec,
    n: usize,
    l: usize,
    d: &BitString,
    trials: usize,
    rng: &mut R,
) -> Result<EmpiricalEstimate> {
    if trials < MIN_TRIALS {
        return Err(Error::InvalidParameter(format!(
            "need at least {MIN_TRIALS} trials, got {trials}"
        )));
    }
    if l == 0 || l >= n {
        return Err(Error::InvalidParameter(format!(
            "need 1 <= l < n, got n = {n}, l = {l}"
        )));
    }
    let guess = attack.predicted_leak(d, l);
    let mut hits = 0;
    for _ in 0..trials {
        let k = BitString::random(n, rng);
        let a = attack.message(&k, d, l);
        let c = match attack.variant {
            ChannelVariant::InsiderProof => {
                let r = BitString::random(n, rng);
                encrypt_with_seed(&a, &k, &r)?.c
            }
            ChannelVariant::NaiveOtp => a.xor(&k.resized(l))?,
        };
        if c == guess {
            hits += 1;
        }
    }
    let base = 2f64.powi(-(l.min(1000) as i32));
    let hit_ci = wilson_interval(hits, trials, EMPIRICAL_Z);
    let hit_rate = hits as f64 / trials as f64;
    Ok(EmpiricalEstimate {
        trials,
        hits,
        hit_rate,
        hit_ci,
        advantage: hit_rate - base,
        advantage_ci: (hit_ci.0 - base, hit_ci.1 - base),
    })
}

/// One machine-readable result line.
#[derive(Clone, Debug)]
pub struct AdvantageRow {
    pub attack: String,
    pub variant: ChannelVariant,
    pub n: usize,
    pub l: usize,
    pub exact: Option<BigRational>,
    pub empirical: Option<EmpiricalEstimate>,
    /// Only the insider-proof channel has a bound.
    pub bound: Option<f64>,
    pub passed: bool,
}

impl AdvantageRow {
    pub const HEADER: &'static str =
        "attack\tvariant\tn\tl\texact\texact_f64\tempirical\tci_low\tci_high\tbound\tpass";

    pub fn to_tsv(&self) -> String {
        let exact = self.exact.as_ref();
        let opt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.6e}"));
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.attack,
            variant_name(self.variant),
            self.n,
            self.l,
            exact.map_or("-".to_string(), |e| e.to_string()),
            opt(exact.and_then(|e| e.to_f64())),
            opt(self.empirical.as_ref().map(|e| e.advantage)),
            opt(self.empirical.as_ref().map(|e| e.advantage_ci.0)),
            opt(self.empirical.as_ref().map(|e| e.advantage_ci.1)),
            opt(self.bound),
            if self.passed { "pass" } else { "FAIL" },
        )
    }
}

/// Exact advantage for one configuration, checked against the channel bound
/// (insider-proof) or the full-leak value `1 - 2^-l` (naive pad, `xor-key`).
pub fn exact_row(attack: &AttackSpec, n: usize, l: usize, d: &BitString) -> Result<AdvantageRow> {
    let exact = exact_advantage(attack, n, l, d)?;
    let (bound, passed) = match attack.variant {
        ChannelVariant::InsiderProof => (Some(channel_bound(n, l)), within_channel_bound(&exact, n, l)),
        ChannelVariant::NaiveOtp => {
            let full = BigRational::one() - BigRational::new(BigInt::one(), pow2(l));
            let ok = attack.kind != AttackKind::XorKey || exact == full;
            (None, ok)
        }
    };
    Ok(AdvantageRow {
        attack: attack.name(),
        variant: attack.variant,
        n,
        l,
        exact: Some(exact),
        empirical: None,
        bound,
        passed,
    })
}

/// Private data used by the sweeps: alternating bits `1010...`, low bit zero.
pub fn sweep_data(n: usize) -> BitString {
    BitString::from_bits(&(0..n).map(|i| i % 2 == 1).collect::<Vec<_>>())
}

/// Every attack in `attacks` at every `(n, l)` with `min_n <= n <= max_n`
/// and `2l < n`, on the insider-proof channel.
pub fn bound_sweep(attacks: &[AttackSpec], min_n: usize, max_n: usize) -> Result<Vec<AdvantageRow>> {
    let mut rows = Vec::new();
    for n in min_n.max(3)..=max_n {
        let d = sweep_data(n);
        for l in (1..).take_while(|&l| 2 * l < n) {
            for a in attacks {
                let spec = AttackSpec::new(a.kind, ChannelVariant::InsiderProof);
                rows.push(exact_row(&spec, n, l, &d)?);
            }
        }
    }
    Ok(rows)
}

/// Reads a transcript log: one frame per line, blank lines and `#` comments ignored.
pub fn read_log(text: &str) -> Result<Vec<Frame>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| parse_log_line(l).map_err(|e| Error::Parse(format!("log line {}: {e}", i + 1))))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub statistic: f64,
    pub p_value: Option<f64>,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatteryReport {
    pub rounds: usize,
    pub checks: Vec<CheckResult>,
}

impl BatteryReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("rounds\t{}\ncheck\tstatistic\tp_value\tpass\tdetail\n", self.rounds);
        for c in &self.checks {
            s.push_str(&format!(
                "{}\t{:.4}\t{}\t{}\t{}\n",
                c.name,
                c.statistic,
                c.p_value.map_or("-".to_string(), |p| format!("{p:.4}")),
                if c.passed { "pass" } else { "FAIL" },
                c.detail
            ));
        }
        s
    }
}

pub const CHECK_STRUCTURE: &str = "structure";
pub const CHECK_BYTE_UNIFORMITY: &str = "byte-uniformity";
pub const CHECK_ABORT_HOMOGENEITY: &str = "abort-vs-success";

fn shape(frames: &[Frame]) -> Vec<(FrameType, usize)> {
    frames.iter().map(|f| (f.frame_type, f.payload.len())).collect()
}

/// Byte histogram over the whole bytes of the seeds and ciphertexts in
/// channel frames. A partially used final byte is skipped.
fn channel_byte_counts(frames: &[Frame], counts: &mut [u64; 256]) -> Result<()> {
    for f in frames.iter().filter(|f| f.frame_type == FrameType::SeedCiphertext) {
        let p = ChannelPayload::decode(&f.payload)?;
        let full_r = p.n_bits as usize / 8;
        let full_c = p.l_bits as usize / 8;
        for &b in p.r[..full_r].iter().chain(&p.c[..full_c]) {
            counts[b as usize] += 1;
        }
    }
    Ok(())
}

fn chi_square_sf(stat: f64, df: usize) -> f64 {
    if df == 0 {
        return 1.0;
    }
    let dist = ChiSquared::new(df as f64).expect("positive degrees of freedom");
    dist.sf(stat)
}

/// Runs the transcript checks on a recorded session.
///
/// * structure: every round has the same frame types and lengths (exact);
/// * byte-uniformity: chi-square of channel payload bytes against uniform;
/// * abort-vs-success (only when `aborted_rounds` is given, 1-based): 2 x 256
///   chi-square homogeneity between the two groups of rounds.
pub fn transcript_battery(frames: &[Frame], aborted_rounds: Option<&[usize]>) -> Result<BatteryReport> {
    let (_, rounds, _) = split_rounds(frames);
    if rounds.len() < 2 {
        return Err(Error::Parse(format!(
            "transcript battery needs at least 2 rounds, found {}",
            rounds.len()
        )));
    }
    let mut checks = Vec::new();

    let reference = shape(&rounds[0]);
    let mismatched: Vec<usize> = rounds
        .iter()
        .enumerate()
        .filter(|(_, r)| shape(r) != reference)
        .map(|(i, _)| i + 1)
        .collect();
    checks.push(CheckResult {
        name: CHECK_STRUCTURE,
        statistic: mismatched.len() as f64,
        p_value: None,
        passed: mismatched.is_empty(),
        detail: if mismatched.is_empty() {
            format!("{} frames per round", reference.len())
        } else {
            format!("rounds differing from round 1: {mismatched:?}")
        },
    });

    let mut counts = [0u64; 256];
    channel_byte_counts(frames, &mut counts)?;
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / 256.0;
    let stat: f64 = if total == 0 {
        0.0
    } else {
        counts.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum()
    };
    let p = chi_square_sf(stat, 255);
    checks.push(CheckResult {
        name: CHECK_BYTE_UNIFORMITY,
        statistic: stat,
        p_value: Some(p),
        passed: total > 0 && p > BATTERY_ALPHA,
        detail: format!("{total} bytes"),
    });

    if let Some(aborted) = aborted_rounds {
        let mut groups = [[0u64; 256]; 2];
        for (i, r) in rounds.iter().enumerate() {
            let g = usize::from(aborted.contains(&(i + 1)));
            channel_byte_counts(r, &mut groups[g])?;
        }
        let (stat, df) = homogeneity(&groups);
        let p = chi_square_sf(stat, df);
        let sizes = [groups[0].iter().sum::<u64>(), groups[1].iter().sum::<u64>()];
        checks.push(CheckResult {
            name: CHECK_ABORT_HOMOGENEITY,
            statistic: stat,
            p_value: Some(p),
            passed: sizes[0] > 0 && sizes[1] > 0 && p > BATTERY_ALPHA,
            detail: format!("{} success bytes, {} abort bytes", sizes[0], sizes[1]),
        });
    }

    Ok(BatteryReport {
        rounds: rounds.len(),
        checks,
    })
}

/// Chi-square statistic and degrees of freedom for a 2 x 256 contingency
/// table, dropping empty columns.
fn homogeneity(groups: &[[u64; 256]; 2]) -> (f64, usize) {
    let rows = [groups[0].iter().sum::<u64>() as f64, groups[1].iter().sum::<u64>() as f64];
    let grand = rows[0] + rows[1];
    if rows[0] == 0.0 || rows[1] == 0.0 {
        return (0.0, 0);
    }
    let mut stat = 0.0;
    let mut cols = 0usize;
    for b in 0..256 {
        let col = (groups[0][b] + groups[1][b]) as f64;
        if col == 0.0 {
            continue;
        }
        cols += 1;
        for g in 0..2 {
            let e = rows[g] * col / grand;
            stat += (groups[g][b] as f64 - e).powi(2) / e;
        }
    }
    (stat, cols.saturating_sub(1))
}

/// `1 - 2^-l` as an exact rational.
pub fn full_leak(l: usize) -> BigRational {
    BigRational::one() - BigRational::new(BigInt::one(), pow2(l))
}
