use ipc_core::hashfam::{distance_from_uniform_exhaustive, within_channel_bound, HashParams};
use ipc_core::ipchannel::{
    channel_epsilon, decrypt, encrypt, encrypt_with_seed, required_key_length,
    required_key_length_log2, ChannelParams, ChannelTranscript, KeyOrigin, KeyPool,
};
use ipc_core::{BitString, Error};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn el(n: usize, v: u64) -> BitString {
    BitString::from_u64(n, v).unwrap()
}

#[test]
fn epsilon_examples() {
    let e = channel_epsilon(276, 128).unwrap();
    assert_eq!(e.log2(), -10.0);
    assert_eq!(e.value(), 1.0 / 1024.0);
    assert_eq!(channel_epsilon(2 * 7 + 2, 7).unwrap().value(), 0.5);
    assert!(matches!(channel_epsilon(14, 7), Err(Error::InsecureParameters { n: 14, l: 7 })));
    // Far below f64 range, the log stays exact.
    let tiny = channel_epsilon(2 * 8 + 4096, 8).unwrap();
    assert_eq!(tiny.log2(), -2048.0);
    assert_eq!(tiny.value(), 0.0);
}

#[test]
fn required_key_length_examples() {
    assert_eq!(required_key_length(128, 2f64.powi(-10)).unwrap(), 276);
    for l in [8usize, 128, 1024] {
        assert_eq!(required_key_length(l, 2f64.powi(-32)).unwrap(), 2 * l + 64);
    }
    assert_eq!(required_key_length(5, 1.0 - 1e-9).unwrap(), 11);
    assert!(required_key_length(5, 1.0).is_err());
    assert!(required_key_length(5, 0.0).is_err());
    assert_eq!(required_key_length_log2(4, -3000.0).unwrap(), 8 + 6000);
}

#[test]
fn key_length_and_epsilon_are_inverse_consistent() {
    for l in [1usize, 2, 7, 64, 128, 1000] {
        for eps in [0.9, 0.5, 0.3, 1e-3, 2f64.powi(-20), 1e-12, 2f64.powi(-64)] {
            let n = required_key_length(l, eps).unwrap();
            let got = channel_epsilon(n, l).unwrap();
            assert!(got.log2() <= eps.log2() + 1e-12, "l={l} eps={eps}");
            // minimality: one bit fewer misses the target (or is insecure)
            if let Ok(prev) = channel_epsilon(n - 1, l) {
                assert!(prev.log2() > eps.log2(), "l={l} eps={eps} not minimal");
            }
        }
    }
}

#[test]
fn encrypt_fixture_gf32() {
    // In GF(2^5) mod x^5 + x^2 + 1: 0b00011 * 0b00101 = 0b01111, low two bits 0b11.
    let t = encrypt_with_seed(&el(2, 0b10), &el(5, 3), &el(5, 5)).unwrap();
    assert_eq!(t.c, el(2, 0b01));
    assert_eq!(t.r, el(5, 5));
    assert_eq!(decrypt(&t, &el(5, 3)).unwrap(), el(2, 0b10));
}

#[test]
fn boundary_and_zero_seed() {
    assert!(encrypt_with_seed(&el(2, 1), &el(4, 3), &el(4, 5)).is_err());
    let a = el(3, 0b101);
    let t = encrypt_with_seed(&a, &el(7, 0x55), &el(7, 0)).unwrap();
    assert_eq!(t.c, a);
    let zero = ChannelTranscript {
        c: el(3, 0),
        r: el(7, 0),
    };
    assert_eq!(decrypt(&zero, &el(7, 0x33)).unwrap(), el(3, 0));
}

#[test]
fn round_trip_random_triples() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for i in 0..1000 {
        let l = 1 + i % 40;
        let n = 2 * l + 1 + (i % 7) * 5;
        let a = BitString::random(l, &mut rng);
        let k = BitString::random(n, &mut rng);
        let t = encrypt(&a, &k, &mut rng).unwrap();
        assert_eq!(t.r.len(), n);
        assert_eq!(t.c.len(), l);
        assert_eq!(decrypt(&t, &k).unwrap(), a);
    }
}

#[test]
fn wrong_key_coincides_on_two_to_minus_l_of_seeds() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for l in 1..=3usize {
        for _ in 0..20 {
            let k = rng.gen_range(0..256u64);
            let k2 = loop {
                let v = rng.gen_range(0..256u64);
                if v != k {
                    break v;
                }
            };
            let a = BitString::random(l, &mut rng);
            let same = (0..256u64)
                .filter(|&r| {
                    let t = encrypt_with_seed(&a, &el(8, k), &el(8, r)).unwrap();
                    decrypt(&t, &el(8, k2)).unwrap() == a
                })
                .count();
            assert_eq!(same, 256 >> l);
        }
    }
}

#[test]
fn ciphertext_uniformity_for_fixed_message() {
    let params = HashParams::with_degree(9, 2).unwrap();
    for a in 0..4u64 {
        let tv = distance_from_uniform_exhaustive(|_| el(2, a), &params).unwrap();
        assert!(within_channel_bound(&tv, 9, 2));
    }
}

#[test]
fn params_expose_lengths() {
    let p = ChannelParams::with_margin(128, 20).unwrap();
    assert_eq!((p.n(), p.l()), (276, 128));
    assert_eq!(p.epsilon().to_string(), "2^-10");
}

#[test]
fn dispense_bookkeeping() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let bits = BitString::random(300, &mut rng);
    let mut pool = KeyPool::new(bits.clone());
    let k = pool.dispense(276).unwrap();
    assert_eq!(k, bits.slice(0, 276));
    assert_eq!(pool.consumed(), 276);
    assert!(matches!(
        pool.dispense(276),
        Err(Error::PoolExhausted { requested: 276, available: 24 })
    ));
    let empty = pool.dispense(0).unwrap();
    assert!(empty.is_empty());
    assert_eq!(pool.consumed(), 276);
}

#[test]
fn dispensed_ranges_are_disjoint() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut pool = KeyPool::generate(5000, &mut rng);
    let mut ranges = vec![];
    let mut offset = 0;
    loop {
        let n = rng.gen_range(0..300);
        if n > pool.available() {
            break;
        }
        let before = pool.consumed();
        pool.dispense(n).unwrap();
        assert_eq!(before, offset);
        ranges.push(offset..offset + n);
        offset += n;
        if rng.gen_bool(0.1) {
            pool.deposit(&BitString::random(100, &mut rng), KeyOrigin::Round(ranges.len() as u64))
                .unwrap();
        }
    }
    for (i, a) in ranges.iter().enumerate() {
        for b in &ranges[i + 1..] {
            assert!(a.end <= b.start || b.end <= a.start || a.is_empty() || b.is_empty());
        }
    }
}

#[test]
fn pool_file_persists_offset_before_returning() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("alice.pool");
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let bits = BitString::random(300, &mut rng);
    let mut pool = KeyPool::create(&path, bits.clone()).unwrap();
    let k = pool.dispense(100).unwrap();
    assert_eq!(k, bits.slice(0, 100));

    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("IPCPOOL v1 300 100\n"));
    let mut reopened = KeyPool::open(&path).unwrap();
    assert_eq!(reopened.consumed(), 100);
    assert_eq!(reopened.dispense(200).unwrap(), bits.slice(100, 200));
    // Consumed material is zeroed on disk.
    let again = KeyPool::open(&path).unwrap();
    assert_eq!(again.available(), 0);
    assert!(!std::fs::read_to_string(&path).unwrap().lines().skip(1).any(|l| l.chars().any(|c| c != '0')));
}

#[test]
fn pool_file_rejects_garbage() {
    assert!(KeyPool::parse("IPCPOOL v2 8 0\nff\n").is_err());
    assert!(KeyPool::parse("IPCPOOL v1 8 9\nff\n").is_err());
    assert!(KeyPool::parse("IPCPOOL v1 16 0\nff\n").is_err());
    assert!(KeyPool::parse("IPCPOOL v1 4 0\nff\n").is_err());
    assert!(KeyPool::parse("IPCPOOL v1 8 0\nff\n").is_ok());
}
