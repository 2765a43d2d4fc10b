//! Built-in invariant battery behind `ipc verify`. Each check prints one
//! `pass`/`FAIL` line.

use std::time::Instant;

use ipc_core::budget::{binary_entropy, compose, max_rounds};
use ipc_core::distinguisher::{bound_sweep, exact_advantage, full_leak, AttackKind, AttackSpec};
use ipc_core::gf2n::{field_for_degree, gf_mul, FieldSpec};
use ipc_core::hashfam::{collision_probability_exhaustive, HashParams};
use ipc_core::ipchannel::{channel_epsilon, decrypt, encrypt, required_key_length};
use ipc_core::qkdsim::{simulate, split_rounds, SimConfig};
use ipc_core::wire::{frame_decode, frame_encode, Frame, FrameType};
use ipc_core::{rng, BitString, Result};
use num_bigint::BigInt;
use num_rational::BigRational;
use rand::{Rng, RngCore};

type Check = (&'static str, fn() -> Result<bool>);

pub fn run() -> bool {
    let checks: &[Check] = &[
        ("gf_mul matches shift-and-xor reference (n = 8, 64, 276)", gf_mul_reference),
        ("field fixtures 0x02*0x80 = 0x1b, 0x53*0xca = 0x01", field_fixtures),
        ("2-universality at n = 8, all pairs, l = 1..7", two_universality),
        ("channel epsilon and required key length", channel_parameters),
        ("encrypt/decrypt round trip", channel_round_trip),
        ("exact advantage within bound, n <= 10, 13 attacks", bound_check),
        ("naive pad leaks 1 - 2^-l under xor-key, l = 1..4", naive_leak),
        ("compose deltas and max_rounds scan", budget_checks),
        ("wire frame round trip, 1000 random frames", wire_round_trip),
        ("two-lab simulation: keys agree, uniform round shape", small_simulation),
    ];
    let mut all = true;
    for (name, check) in checks {
        let start = Instant::now();
        let (ok, note) = match check() {
            Ok(ok) => (ok, String::new()),
            Err(e) => (false, format!(" ({e})")),
        };
        all &= ok;
        println!(
            "{} {name}{note} [{:.2}s]",
            if ok { "pass" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    println!("{}", if all { "all checks passed" } else { "some checks FAILED" });
    all
}

fn verify_rng() -> rng::Rng {
    rng::derive(rng::env_seed().ok().flatten().unwrap_or(0), "verify")
}

fn reference_mul(a: &BitString, b: &BitString, field: &FieldSpec) -> BitString {
    let n = field.degree();
    let m = field.modulus();
    let mut acc = vec![false; 2 * n];
    for i in 0..n {
        if b.bit(i) {
            for j in 0..n {
                acc[i + j] ^= a.bit(j);
            }
        }
    }
    for i in (n..2 * n).rev() {
        if acc[i] {
            for j in 0..=n {
                acc[i - n + j] ^= m.bit(j);
            }
        }
    }
    BitString::from_bits(&acc[..n])
}

fn gf_mul_reference() -> Result<bool> {
    let mut rng = verify_rng();
    for n in [8, 64, 276] {
        let field = field_for_degree(n)?;
        for _ in 0..200 {
            let a = BitString::random(n, &mut rng);
            let b = BitString::random(n, &mut rng);
            if gf_mul(&a, &b, &field)? != reference_mul(&a, &b, &field) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn field_fixtures() -> Result<bool> {
    let f = field_for_degree(8)?;
    let el = |v| BitString::from_u64(8, v);
    Ok(gf_mul(&el(0x02)?, &el(0x80)?, &f)?.to_u64() == 0x1b
        && gf_mul(&el(0x53)?, &el(0xca)?, &f)?.to_u64() == 0x01)
}

fn two_universality() -> Result<bool> {
    let n = 8;
    for l in 1..n {
        let params = HashParams::with_degree(n, l)?;
        let expect = BigRational::new(BigInt::from(1), BigInt::from(1u64 << l));
        for x1 in 0..256u64 {
            for x2 in x1 + 1..256 {
                let p = collision_probability_exhaustive(
                    &BitString::from_u64(n, x1)?,
                    &BitString::from_u64(n, x2)?,
                    &params,
                )?;
                if p != expect {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

fn channel_parameters() -> Result<bool> {
    let eps = channel_epsilon(276, 128)?;
    let lengths = [8usize, 128, 1024]
        .iter()
        .map(|&l| required_key_length(l, 2f64.powi(-32)).map(|n| n == 2 * l + 64))
        .collect::<Result<Vec<_>>>()?;
    Ok(eps.to_string() == "2^-10" && lengths.iter().all(|&b| b))
}

fn channel_round_trip() -> Result<bool> {
    let mut rng = verify_rng();
    for _ in 0..100 {
        let l = rng.gen_range(1..64);
        let n = 2 * l + rng.gen_range(1..64);
        let a = BitString::random(l, &mut rng);
        let k = BitString::random(n, &mut rng);
        let t = encrypt(&a, &k, &mut rng)?;
        if decrypt(&t, &k)? != a {
            return Ok(false);
        }
    }
    Ok(true)
}

fn bound_check() -> Result<bool> {
    let rows = bound_sweep(&AttackSpec::catalogue(10, ipc_core::qkdsim::ChannelVariant::InsiderProof), 3, 10)?;
    Ok(rows.iter().all(|r| r.passed))
}

fn naive_leak() -> Result<bool> {
    let a = AttackSpec::new(AttackKind::XorKey, ipc_core::qkdsim::ChannelVariant::NaiveOtp);
    for l in 1..=4 {
        for d in 0..1u64 << l {
            if exact_advantage(&a, 10, l, &BitString::from_u64(l, d)?)? != full_leak(l) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

fn budget_checks() -> Result<bool> {
    let mut rng = verify_rng();
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
    for _ in 0..200 {
        let eps0 = rng.gen_range(0.0..1e-3);
        let eps = rng.gen_range(1e-5..1e-3);
        let eps_qkd = rng.gen_range(0.0..1e-3);
        let s = rng.gen_range(0..50u64);
        let base = compose(eps0, eps, eps_qkd, s, s)?;
        if !close(compose(eps0, eps, eps_qkd, s + 1, s + 1)?, base + 3.0 * eps + eps_qkd)
            || !close(compose(eps0, eps, eps_qkd, s + 1, s)?, base + 3.0 * eps)
        {
            return Ok(false);
        }
        let eps_sec = eps0 + rng.gen_range(0.0..0.05);
        let m = max_rounds(eps_sec, eps0, eps, eps_qkd)?;
        let fits = (0u64..)
            .take_while(|&t| compose(eps0, eps, eps_qkd, t, t).is_ok_and(|v| v <= eps_sec))
            .count() as u64;
        if m != fits.saturating_sub(1) {
            return Ok(false);
        }
    }
    Ok((binary_entropy(0.11)? - 0.499916).abs() < 1e-6)
}

fn wire_round_trip() -> Result<bool> {
    let mut rng = verify_rng();
    let types = [
        FrameType::SeedCiphertext,
        FrameType::BasisAnnounce,
        FrameType::QkdControl,
        FrameType::TranscriptLog,
    ];
    for _ in 0..1000 {
        let len = rng.gen_range(0..512);
        let mut payload = vec![0u8; len];
        rng.fill_bytes(&mut payload);
        let f = Frame::new(types[rng.gen_range(0..4)], payload);
        let bytes = frame_encode(&f)?;
        let (g, used) = frame_decode(&bytes)?;
        if g != f || used != bytes.len() {
            return Ok(false);
        }
    }
    Ok(true)
}

fn small_simulation() -> Result<bool> {
    let cfg = SimConfig {
        n_sifted: 1024,
        ..SimConfig::default()
    };
    let rep = simulate(&cfg, 3, Some(rng::env_seed().ok().flatten().unwrap_or(1)))?;
    let (_, rounds, _) = split_rounds(&rep.transcript);
    let shape = |r: &Vec<Frame>| r.iter().map(|f| (f.frame_type, f.payload.len())).collect::<Vec<_>>();
    Ok(rep.rounds.iter().all(|r| r.keys_agree) && rounds.iter().all(|r| shape(r) == shape(&rounds[0])))
}
