use std::collections::HashMap;

use ipc_core::gf2n::standard_field;
use ipc_core::hashfam::{
    collision_probability_exhaustive, distance_from_uniform_exhaustive,
    distance_from_uniform_table, hash, within_channel_bound, HashParams,
};
use ipc_core::BitString;
use num_bigint::BigInt;
use num_rational::BigRational;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn el(n: usize, v: u64) -> BitString {
    BitString::from_u64(n, v).unwrap()
}

fn ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Schoolbook multiply then reduce, on integers. Independent of the library's
/// multiplication routines; only the modulus is shared.
fn schoolbook(a: u64, b: u64, n: usize, modulus: u64) -> u64 {
    let mut p: u128 = 0;
    for i in 0..n {
        if (b >> i) & 1 == 1 {
            p ^= (a as u128) << i;
        }
    }
    for i in (n..2 * n).rev() {
        if (p >> i) & 1 == 1 {
            p ^= (modulus as u128) << (i - n);
        }
    }
    p as u64
}

fn modulus(n: usize) -> u64 {
    standard_field(n).unwrap().modulus().to_u64()
}

/// Exact TV of `(trunc(k r) ^ m(k), r)` from uniform, by tabulating the joint
/// distribution over all `(k, r)`.
fn brute_distance(n: usize, l: usize, m: &dyn Fn(u64) -> u64) -> BigRational {
    let md = modulus(n);
    let mask = (1u64 << l) - 1;
    let mut counts: HashMap<(u64, u64), i64> = HashMap::new();
    for k in 0..1u64 << n {
        for r in 0..1u64 << n {
            let c = (schoolbook(k, r, n, md) & mask) ^ m(k);
            *counts.entry((c, r)).or_default() += 1;
        }
    }
    let joint_den = 1i64 << (2 * n);
    let uniform = ratio(1, 1 << (n + l));
    let mut total = ratio(0, 1);
    for c in 0..1u64 << l {
        for r in 0..1u64 << n {
            let p = ratio(*counts.get(&(c, r)).unwrap_or(&0), joint_den);
            let d = p - &uniform;
            total += if d < ratio(0, 1) { -d } else { d };
        }
    }
    total / ratio(2, 1)
}

#[test]
fn hash_fixture_over_gf16() {
    let p = HashParams::with_degree(4, 2).unwrap();
    assert_eq!(schoolbook(3, 5, 4, modulus(4)), 0xf);
    assert_eq!(hash(&el(4, 3), &el(4, 5), &p).unwrap(), el(2, 0b11));
}

#[test]
fn hash_rejects_wrong_lengths() {
    let p = HashParams::with_degree(8, 3).unwrap();
    assert!(hash(&el(7, 1), &el(8, 1), &p).is_err());
}

#[test]
fn two_universality_is_exact_at_n8() {
    let md = modulus(8);
    for l in 1..=7usize {
        let p = HashParams::with_degree(8, l).unwrap();
        let expected = ratio(1, 1 << l);
        // The collision event depends only on x1 ^ x2; check the oracle per difference.
        for diff in 1u64..256 {
            let hits = (0..256u64)
                .filter(|&r| schoolbook(diff, r, 8, md) & ((1 << l) - 1) == 0)
                .count() as i64;
            assert_eq!(ratio(hits, 256), expected, "diff {diff:#x} l {l}");
        }
        for x1 in 0..256u64 {
            for x2 in (x1 + 1)..256 {
                let got = collision_probability_exhaustive(&el(8, x1), &el(8, x2), &p).unwrap();
                assert_eq!(got, expected);
            }
        }
    }
}

#[test]
fn collision_edge_cases() {
    let p4 = HashParams::with_degree(4, 2).unwrap();
    assert_eq!(
        collision_probability_exhaustive(&el(4, 3), &el(4, 9), &p4).unwrap(),
        ratio(1, 4)
    );
    assert_eq!(
        collision_probability_exhaustive(&el(4, 6), &el(4, 6), &p4).unwrap(),
        ratio(1, 1)
    );
    assert!(HashParams::with_degree(4, 4).is_err());
    let p5 = HashParams::with_degree(5, 4).unwrap();
    assert_eq!(
        collision_probability_exhaustive(&el(5, 1), &el(5, 30), &p5).unwrap(),
        ratio(1, 16)
    );
    let big = HashParams::with_degree(21, 3).unwrap();
    assert!(collision_probability_exhaustive(&el(21, 1), &el(21, 2), &big).is_err());
}

#[test]
fn constant_message_distance() {
    let p = HashParams::with_degree(8, 2).unwrap();
    let got = distance_from_uniform_exhaustive(|_| el(2, 0b01), &p).unwrap();
    assert_eq!(got, ratio(3, 1024));
    assert_eq!(brute_distance(8, 2, &|_| 1), got);
}

#[test]
fn low_bit_message_regression() {
    // Only the seed r = 1 leaks: trunc(k) ^ k_0 = 0 for every k.
    let p = HashParams::with_degree(8, 1).unwrap();
    let got = distance_from_uniform_exhaustive(|k| k.low_bits(1), &p).unwrap();
    assert_eq!(got, ratio(1, 512));
    assert_eq!(brute_distance(8, 1, &|k| k & 1), got);
}

#[test]
fn distance_matches_brute_force_on_random_functions() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for (n, l) in [(5usize, 1usize), (6, 2), (7, 3), (8, 2), (8, 3)] {
        let p = HashParams::with_degree(n, l).unwrap();
        for _ in 0..3 {
            let table: Vec<u32> = (0..1 << n).map(|_| rng.gen_range(0..1u32 << l)).collect();
            let fast = distance_from_uniform_table(&table, &p).unwrap();
            let slow = brute_distance(n, l, &|k| table[k as usize] as u64);
            assert_eq!(fast, slow, "n={n} l={l}");
        }
    }
}

#[test]
fn catalogue_respects_channel_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xca7);
    for n in [8usize, 10, 12] {
        for l in 1..=3usize {
            let p = HashParams::with_degree(n, l).unwrap();
            let mask = (1u32 << l) - 1;
            let d = rng.gen_range(0..=mask);
            let mut catalogue: Vec<Vec<u32>> = vec![
                vec![d; 1 << n],
                (0..1u32 << n).map(|k| k & mask).collect(),
                (0..1u32 << n).map(|k| (k & mask) ^ d).collect(),
            ];
            for _ in 0..50 {
                catalogue.push((0..1 << n).map(|_| rng.gen_range(0..=mask)).collect());
            }
            for table in &catalogue {
                let tv = distance_from_uniform_table(table, &p).unwrap();
                assert!(within_channel_bound(&tv, n, l), "n={n} l={l} tv={tv}");
            }
        }
    }
}

#[test]
fn bound_comparison_is_exact() {
    // sqrt(2^(4-12)) = 1/16
    assert!(within_channel_bound(&ratio(1, 16), 12, 2));
    assert!(!within_channel_bound(&ratio(1_000_001, 16_000_000), 12, 2));
    // sqrt(2^(2-8)) = 1/8
    assert!(within_channel_bound(&ratio(1, 8), 8, 1));
    assert!(!within_channel_bound(&ratio(9, 64), 8, 1));
}

fn element(n: usize) -> impl Strategy<Value = BitString> {
    prop::collection::vec(any::<bool>(), n).prop_map(|v| BitString::from_bits(&v))
}

fn symmetric(n: usize, l: usize, k: &BitString, r: &BitString) -> Result<(), TestCaseError> {
    let p = HashParams::with_degree(n, l).unwrap();
    prop_assert_eq!(hash(k, r, &p).unwrap(), hash(r, k, &p).unwrap());
    Ok(())
}

proptest! {
    #[test]
    fn hash_symmetric_n4(k in element(4), r in element(4), l in 1usize..4) {
        symmetric(4, l, &k, &r)?;
    }

    #[test]
    fn hash_symmetric_n8(k in element(8), r in element(8), l in 1usize..8) {
        symmetric(8, l, &k, &r)?;
    }

    #[test]
    fn hash_symmetric_n64(k in element(64), r in element(64), l in 1usize..64) {
        symmetric(64, l, &k, &r)?;
    }
}
