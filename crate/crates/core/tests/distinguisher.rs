use std::collections::HashMap;

use ipc_core::distinguisher::{
    bound_sweep, empirical_advantage, exact_advantage, exact_row, full_leak, read_log,
    sweep_data, transcript_battery, AttackKind, AttackSpec, CHECK_ABORT_HOMOGENEITY,
    CHECK_BYTE_UNIFORMITY, CHECK_STRUCTURE,
};
use ipc_core::gf2n::field_for_degree;
use ipc_core::hashfam::{distance_from_uniform_exhaustive, HashParams};
use ipc_core::qkdsim::{simulate, ChannelVariant, DeviceKind, SimConfig};
use ipc_core::wire::log_line;
use ipc_core::BitString;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn ratio(a: i64, b: i64) -> BigRational {
    BigRational::new(BigInt::from(a), BigInt::from(b))
}

fn schoolbook_mul(a: u64, b: u64, modulus: u64, n: usize) -> u64 {
    let mut acc: u128 = 0;
    for i in 0..n {
        if (b >> i) & 1 == 1 {
            acc ^= (a as u128) << i;
        }
    }
    for i in (n..2 * n).rev() {
        if (acc >> i) & 1 == 1 {
            acc ^= (modulus as u128) << (i - n);
        }
    }
    acc as u64
}

/// Builds the joint law of (a, c, r) over all (k, r) and compares it with
/// law(a) x uniform(c, r) term by term.
fn brute_force_tv(attack: &AttackSpec, n: usize, l: usize, d: &BitString) -> BigRational {
    let modulus = field_for_degree(n).unwrap().modulus().to_u64();
    let mask = (1u64 << l) - 1;
    let mut joint: HashMap<(u64, u64, u64), i64> = HashMap::new();
    let mut marg_a: HashMap<u64, i64> = HashMap::new();
    for k in 0..1u64 << n {
        let kb = BitString::from_u64(n, k).unwrap();
        let a = attack.message(&kb, d, l).to_u64();
        *marg_a.entry(a).or_default() += 1 << n;
        for r in 0..1u64 << n {
            let c = match attack.variant {
                ChannelVariant::InsiderProof => a ^ (schoolbook_mul(k, r, modulus, n) & mask),
                ChannelVariant::NaiveOtp => a ^ (k & mask),
            };
            *joint.entry((a, c, r)).or_default() += 1;
        }
    }
    // Real probabilities have denominator 2^(2n); ideal ones are
    // P(a) 2^-(l+n) = marg_a / 2^(3n+l).
    let scale = 1i64 << (n + l);
    let mut sum = BigRational::zero();
    for (&a, &ma) in &marg_a {
        for c in 0..1u64 << l {
            for r in 0..1u64 << n {
                let real = joint.get(&(a, c, r)).copied().unwrap_or(0) * scale;
                sum += ratio((real - ma).abs(), 1);
            }
        }
    }
    sum / BigRational::from_integer(BigInt::from(2) << (3 * n + l))
}

fn small_catalogue(variant: ChannelVariant) -> Vec<AttackSpec> {
    AttackSpec::catalogue(4, variant)
}

#[test]
fn exact_advantage_matches_brute_force_joint_distribution() {
    for variant in [ChannelVariant::InsiderProof, ChannelVariant::NaiveOtp] {
        for n in [4usize, 5, 6, 7] {
            let d = BitString::from_u64(n, 0b1011 & ((1 << n) - 1)).unwrap();
            for l in 1..=3.min(n - 1) {
                for a in small_catalogue(variant) {
                    let fast = exact_advantage(&a, n, l, &d).unwrap();
                    let slow = brute_force_tv(&a, n, l, &d);
                    assert_eq!(fast, slow, "{a} n={n} l={l}");
                }
            }
        }
    }
}

#[test]
fn constant_message_regression() {
    let a = AttackSpec::new(AttackKind::Constant, ChannelVariant::InsiderProof);
    let d = BitString::from_u64(8, 0).unwrap();
    let tv = exact_advantage(&a, 8, 2, &d).unwrap();
    assert_eq!(tv, ratio(3, 1024));
    let params = HashParams::with_degree(8, 2).unwrap();
    let marginal = distance_from_uniform_exhaustive(|_| BitString::zeros(2), &params).unwrap();
    assert_eq!(tv, marginal);
}

#[test]
fn naive_pad_leaks_everything_under_xor_attack() {
    for l in 1..=4usize {
        for dv in 0..1u64 << l {
            let d = BitString::from_u64(l, dv).unwrap();
            let a = AttackSpec::new(AttackKind::XorKey, ChannelVariant::NaiveOtp);
            assert_eq!(exact_advantage(&a, 9, l, &d).unwrap(), full_leak(l), "l={l} d={dv}");
        }
    }
}

#[test]
fn insider_proof_channel_meets_bound_at_n12_l2() {
    let d = sweep_data(12);
    for a in AttackSpec::catalogue(5, ChannelVariant::InsiderProof) {
        let tv = exact_advantage(&a, 12, 2, &d).unwrap();
        assert!(tv <= ratio(1, 16), "{a}: {tv}");
    }
}

#[test]
fn bound_sweep_up_to_n10() {
    let rows = bound_sweep(&AttackSpec::catalogue(10, ChannelVariant::InsiderProof), 3, 10).unwrap();
    // n = 3..10 has 1+1+2+2+3+3+4+4 = 20 values of l.
    assert_eq!(rows.len(), 20 * 13);
    for r in &rows {
        assert!(r.passed, "{}", r.to_tsv());
        assert!(r.exact.as_ref().unwrap().is_positive() || r.attack != "constant");
    }
}

#[test]
fn exact_rejects_large_n() {
    let a = AttackSpec::new(AttackKind::Constant, ChannelVariant::InsiderProof);
    assert!(exact_advantage(&a, 21, 2, &sweep_data(21)).is_err());
}

#[test]
fn empirical_naive_xor_matches_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for l in 1..=4 {
        let d = BitString::from_u64(l, 0b0101 & ((1 << l) - 1)).unwrap();
        let a = AttackSpec::new(AttackKind::XorKey, ChannelVariant::NaiveOtp);
        let e = empirical_advantage(&a, 16, l, &d, 10_000, &mut rng).unwrap();
        let exact = 1.0 - 2f64.powi(-(l as i32));
        assert!(e.ci_contains(exact), "l={l}: {e:?}");
    }
}

#[test]
fn empirical_insider_proof_at_full_size_is_consistent_with_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let d = sweep_data(276);
    for kind in [AttackKind::XorKey, AttackKind::TruncateKey, AttackKind::Random(3)] {
        let a = AttackSpec::new(kind, ChannelVariant::InsiderProof);
        let e = empirical_advantage(&a, 276, 128, &d, 2000, &mut rng).unwrap();
        assert!(e.ci_contains(0.0), "{a}: {e:?}");
    }
}

#[test]
fn degenerate_attack_hits_at_the_baseline_rate() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = AttackSpec::new(AttackKind::Constant, ChannelVariant::InsiderProof);
    let d = BitString::zeros(64);
    let e = empirical_advantage(&a, 64, 3, &d, 1000, &mut rng).unwrap();
    assert!(e.hit_ci.0 <= 0.125 && 0.125 <= e.hit_ci.1, "{e:?}");
    assert!(empirical_advantage(&a, 64, 3, &d, 999, &mut rng).is_err());
}

#[test]
fn empirical_interval_is_a_lower_bound_on_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for variant in [ChannelVariant::InsiderProof, ChannelVariant::NaiveOtp] {
        for a in small_catalogue(variant) {
            let (n, l) = (10, 3);
            let d = sweep_data(n);
            let exact = to_f64(&exact_advantage(&a, n, l, &d).unwrap());
            let e = empirical_advantage(&a, n, l, &d, 5000, &mut rng).unwrap();
            // A single test never beats the optimal distinguisher.
            assert!(e.advantage_ci.0 <= exact + 1e-12, "{a}: {e:?} vs {exact}");
        }
    }
}

#[test]
fn empirical_interval_contains_exact_when_resolvable() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    // Insider-proof at n = 18, l = 2: exact <= 2^-7, below the interval width.
    let d = sweep_data(18);
    for a in AttackSpec::catalogue(2, ChannelVariant::InsiderProof) {
        let exact = exact_advantage(&a, 18, 2, &d).unwrap();
        assert!(exact <= ratio(1, 128));
        let e = empirical_advantage(&a, 18, 2, &d, 5000, &mut rng).unwrap();
        assert!(e.ci_contains(to_f64(&exact)), "{a}: {e:?} vs {exact}");
    }
    // Naive pad: the hit test is optimal for xor-key.
    let a = AttackSpec::new(AttackKind::XorKey, ChannelVariant::NaiveOtp);
    for l in 1..=4 {
        let d = sweep_data(12);
        let exact = exact_row(&a, 12, l, &d).unwrap();
        assert!(exact.passed);
        let e = empirical_advantage(&a, 12, l, &d, 1000, &mut rng).unwrap();
        assert!(e.ci_contains(to_f64(exact.exact.as_ref().unwrap())));
    }
}

fn to_f64(x: &BigRational) -> f64 {
    num_traits::ToPrimitive::to_f64(x).unwrap()
}

fn battery_config() -> SimConfig {
    SimConfig {
        n_sifted: 1024,
        initial_pool_bits: 32768,
        ..SimConfig::default()
    }
}

fn log_text(frames: &[ipc_core::wire::Frame]) -> String {
    let mut s = String::from("# session log\n");
    for f in frames {
        s.push_str(&log_line(f));
        s.push('\n');
    }
    s
}

#[test]
fn battery_accepts_honest_session_with_hidden_aborts() {
    let aborts: Vec<u64> = (1..=20).filter(|i| i % 2 == 0).collect();
    let cfg = SimConfig {
        device_alice: DeviceKind::AbortSignaller(aborts.clone()),
        ..battery_config()
    };
    let rep = simulate(&cfg, 20, Some(5)).unwrap();
    let aborted: Vec<usize> = rep.rounds.iter().filter(|r| r.aborted).map(|r| r.index as usize).collect();
    assert!(aborted.len() >= 10);
    let frames = read_log(&log_text(&rep.transcript)).unwrap();
    assert_eq!(frames, rep.transcript);
    let report = transcript_battery(&frames, Some(&aborted)).unwrap();
    assert_eq!(report.rounds, 20);
    assert!(report.passed(), "{}", report.to_text());
    assert_eq!(report.check(CHECK_STRUCTURE).unwrap().statistic, 0.0);
    assert!(report.check(CHECK_ABORT_HOMOGENEITY).unwrap().p_value.unwrap() > 0.01);
    assert!(report.check(CHECK_BYTE_UNIFORMITY).unwrap().p_value.unwrap() > 0.01);
}

#[test]
fn battery_flags_corrupted_frame_lengths() {
    let rep = simulate(&battery_config(), 3, Some(6)).unwrap();
    let mut text = String::new();
    let mut corrupted = false;
    let mut round = 0;
    for f in &rep.transcript {
        let mut f = f.clone();
        if f.frame_type == ipc_core::wire::FrameType::QkdControl && f.payload.first() == Some(&0x01) {
            round += 1;
        }
        if round == 2 && !corrupted && f.frame_type == ipc_core::wire::FrameType::BasisAnnounce {
            f.payload.push(0);
            corrupted = true;
        }
        text.push_str(&log_line(&f));
        text.push('\n');
    }
    let report = transcript_battery(&read_log(&text).unwrap(), None).unwrap();
    let s = report.check(CHECK_STRUCTURE).unwrap();
    assert!(!s.passed);
    assert_eq!(s.statistic, 1.0);
    assert!(report.check(CHECK_ABORT_HOMOGENEITY).is_none());
}

#[test]
fn battery_cannot_tell_random_fallback_rounds() {
    // Aborting every round drains the pool, so later rounds are random fallbacks.
    let cfg = SimConfig {
        device_alice: DeviceKind::AbortSignaller((1..=12).collect()),
        initial_pool_bits: battery_config().layout().worst_case_round_key() + 3000,
        ..battery_config()
    };
    let rep = simulate(&cfg, 12, Some(7)).unwrap();
    let fallback: Vec<usize> = rep
        .rounds
        .iter()
        .filter(|r| r.alice_status == ipc_core::qkdsim::RoundStatus::Dos)
        .map(|r| r.index as usize)
        .collect();
    assert!(!fallback.is_empty() && fallback.len() < 12);
    let report = transcript_battery(&rep.transcript, Some(&fallback)).unwrap();
    assert!(report.passed(), "{}", report.to_text());
}

#[test]
fn malformed_logs_are_rejected() {
    assert!(read_log("03 2 00").is_err());
    assert!(read_log("09 0 ").is_err());
    let one_round = simulate(&battery_config(), 1, Some(8)).unwrap();
    assert!(transcript_battery(&one_round.transcript, None).is_err());
}
