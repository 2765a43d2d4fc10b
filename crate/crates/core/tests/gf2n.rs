use ipc_core::gf2n::{
    field_for_degree, gf_mul, is_irreducible, standard_degrees, standard_field, FieldSpec,
};
use ipc_core::BitString;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Remainder of `a` modulo `b` over GF(2), both as integer bitmasks.
fn poly_mod(mut a: u64, b: u64) -> u64 {
    let db = 63 - b.leading_zeros();
    while a != 0 && 63 - a.leading_zeros() >= db {
        a ^= b << (63 - a.leading_zeros() - db);
    }
    a
}

/// Irreducible iff no polynomial of degree 1..=deg/2 divides it.
fn trial_division_irreducible(p: u64) -> bool {
    let deg = 63 - p.leading_zeros();
    for d in 1..=deg / 2 {
        for q in (1u64 << d)..(1u64 << (d + 1)) {
            if poly_mod(p, q) == 0 {
                return false;
            }
        }
    }
    true
}

#[test]
fn rabin_test_agrees_with_trial_division_up_to_degree_12() {
    for p in 2u64..(1 << 13) {
        let deg = 63 - p.leading_zeros() as usize;
        let bits = BitString::from_u64(deg + 1, p).unwrap();
        assert_eq!(
            is_irreducible(&bits).unwrap(),
            trial_division_irreducible(p),
            "polynomial {p:#b}"
        );
    }
}

#[test]
fn irreducibility_rejects_constants() {
    assert!(is_irreducible(&BitString::from_u64(1, 1).unwrap()).is_err());
    assert!(is_irreducible(&BitString::zeros(4)).is_err());
}

#[test]
fn every_standard_modulus_is_irreducible() {
    let mut degrees: Vec<usize> = standard_degrees().collect();
    for n in (2..=16).chain([32, 64, 128, 256, 276, 512, 1024, 2048, 4096]) {
        assert!(degrees.contains(&n), "degree {n} missing from table");
    }
    degrees.dedup();
    for n in degrees {
        let f = standard_field(n).unwrap();
        assert_eq!(f.degree(), n);
        assert!(f.modulus().bit(n) && f.modulus().bit(0));
        assert!(is_irreducible(f.modulus()).unwrap(), "degree {n}");
        assert_eq!(FieldSpec::new(f.modulus().clone()).unwrap(), f);
    }
}

#[test]
fn documented_table_entries() {
    assert_eq!(standard_field(8).unwrap().exponents(), [8, 4, 3, 1, 0]);
    assert_eq!(standard_field(4).unwrap().exponents(), [4, 1, 0]);
    assert_eq!(standard_field(2).unwrap().exponents(), [2, 1, 0]);
    assert_eq!(standard_field(64).unwrap().exponents(), [64, 4, 3, 1, 0]);
    assert_eq!(standard_field(128).unwrap().exponents(), [128, 7, 2, 1, 0]);
}

/// Shift-and-XOR multiplication on bool vectors: for each set bit of `b`,
/// accumulate `a * x^i`, reducing `a * x` whenever it overflows degree n.
fn reference_mul(a: &[bool], b: &[bool], modulus: &[bool]) -> Vec<bool> {
    let n = a.len();
    let mut acc = vec![false; n];
    let mut cur = a.to_vec();
    for &bit in b {
        if bit {
            for (x, y) in acc.iter_mut().zip(&cur) {
                *x ^= *y;
            }
        }
        let carry = cur[n - 1];
        cur.rotate_right(1);
        cur[0] = false;
        if carry {
            for (x, m) in cur.iter_mut().zip(modulus) {
                *x ^= *m;
            }
        }
    }
    acc
}

#[test]
fn matches_shift_and_xor_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for n in [8usize, 64, 276] {
        let field = standard_field(n).unwrap();
        let modulus = field.modulus().to_bools();
        for _ in 0..10_000 {
            let a = BitString::random(n, &mut rng);
            let b = BitString::random(n, &mut rng);
            let got = gf_mul(&a, &b, &field).unwrap().to_bools();
            assert_eq!(got, reference_mul(&a.to_bools(), &b.to_bools(), &modulus));
        }
    }
}

#[test]
fn matches_reference_on_large_and_searched_fields() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for n in [100usize, 512, 1000, 2048, 4096] {
        let field = field_for_degree(n).unwrap();
        let modulus = field.modulus().to_bools();
        for _ in 0..20 {
            let a = BitString::random(n, &mut rng);
            let b = BitString::random(n, &mut rng);
            let got = gf_mul(&a, &b, &field).unwrap().to_bools();
            assert_eq!(got, reference_mul(&a.to_bools(), &b.to_bools(), &modulus), "n={n}");
        }
    }
}

#[test]
fn multiplication_by_nonzero_is_a_bijection_in_gf256() {
    let f = standard_field(8).unwrap();
    for a in 1u64..256 {
        let ea = BitString::from_u64(8, a).unwrap();
        let mut seen = [false; 256];
        for b in 0u64..256 {
            let p = gf_mul(&ea, &BitString::from_u64(8, b).unwrap(), &f).unwrap();
            seen[p.to_u64() as usize] = true;
        }
        assert!(seen.iter().all(|&s| s), "a = {a:#x}");
    }
}

#[test]
fn aes_inverse_pair_by_search() {
    let f = standard_field(8).unwrap();
    let a = BitString::from_u64(8, 0x53).unwrap();
    let inv = (1u64..256)
        .find(|&b| gf_mul(&a, &BitString::from_u64(8, b).unwrap(), &f).unwrap().to_u64() == 1)
        .unwrap();
    assert_eq!(inv, 0xca);
}

#[test]
fn random_elements_have_inverses() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for n in [64usize, 128] {
        let f = standard_field(n).unwrap();
        for _ in 0..5 {
            let a = BitString::random(n, &mut rng);
            if a.is_zero() {
                continue;
            }
            // a^(2^n - 2) = a^-1; square-and-multiply with exponent bits all ones except bit 0.
            let mut inv = f.one();
            let mut pow = a.clone();
            for i in 0..n {
                if i > 0 {
                    inv = f.mul(&inv, &pow).unwrap();
                }
                pow = f.mul(&pow, &pow).unwrap();
            }
            assert_eq!(f.mul(&a, &inv).unwrap(), f.one());
        }
    }
}

fn element(n: usize) -> impl Strategy<Value = BitString> {
    prop::collection::vec(any::<bool>(), n).prop_map(|v| BitString::from_bits(&v))
}

fn axioms(n: usize, a: &BitString, b: &BitString, c: &BitString) -> Result<(), TestCaseError> {
    let f = standard_field(n).unwrap();
    let m = |x: &BitString, y: &BitString| gf_mul(x, y, &f).unwrap();
    prop_assert_eq!(m(a, &m(b, c)), m(&m(a, b), c));
    prop_assert_eq!(m(a, &b.xor(c).unwrap()), m(a, b).xor(&m(a, c)).unwrap());
    prop_assert_eq!(m(a, b), m(b, a));
    prop_assert_eq!(m(a, &f.one()), a.clone());
    Ok(())
}

proptest! {
    #[test]
    fn field_axioms_n4(a in element(4), b in element(4), c in element(4)) {
        axioms(4, &a, &b, &c)?;
    }

    #[test]
    fn field_axioms_n8(a in element(8), b in element(8), c in element(8)) {
        axioms(8, &a, &b, &c)?;
    }

    #[test]
    fn field_axioms_n64(a in element(64), b in element(64), c in element(64)) {
        axioms(64, &a, &b, &c)?;
    }
}
