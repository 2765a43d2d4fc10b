use ipc_core::budget::{
    asymptotic_rate, binary_entropy, compose, max_rounds, standard_rate, ChshRate, RateModel,
    SecurityBudget, MAX_CHSH, UNBOUNDED_ROUNDS,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Entropy via natural logs and a change of base; independent of the
/// library's log2-based formula.
fn entropy_oracle(q: f64) -> f64 {
    if q == 0.0 || q == 1.0 {
        return 0.0;
    }
    (-q * q.ln() - (1.0 - q) * (1.0 - q).ln()) / std::f64::consts::LN_2
}

#[test]
fn entropy_values() {
    assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
    assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
    assert_eq!(binary_entropy(0.5).unwrap(), 1.0);
    let h = binary_entropy(0.11).unwrap();
    assert!((h - 0.499916).abs() < 1e-6, "{h}");
    assert!((h - entropy_oracle(0.11)).abs() < 1e-14);
    assert!(binary_entropy(-0.1).is_err());
    assert!(binary_entropy(1.1).is_err());
    assert!(binary_entropy(f64::NAN).is_err());
}

#[test]
fn entropy_inverse_by_bisection() {
    // h is increasing on [0, 1/2]; recover q from h(q) by bisection on the oracle.
    for target_q in [0.01, 0.03, 0.11, 0.25, 0.4] {
        let h = binary_entropy(target_q).unwrap();
        let (mut lo, mut hi) = (0.0f64, 0.5f64);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if entropy_oracle(mid) < h {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((lo - target_q).abs() < 1e-10);
    }
}

#[test]
fn entropy_is_symmetric() {
    for i in 0..=1000 {
        let q = i as f64 / 1000.0;
        let a = binary_entropy(q).unwrap();
        let b = binary_entropy(1.0 - q).unwrap();
        assert!((a - b).abs() < 1e-12, "q = {q}");
    }
}

#[test]
fn compose_examples() {
    assert_eq!(compose(1e-6, 2f64.powi(-10), 1e-9, 0, 0).unwrap(), 1e-6);
    let t = compose(1e-6, 2f64.powi(-10), 1e-9, 3, 3).unwrap();
    assert!(close(t, 1e-6 + 9.0 / 1024.0 + 3e-9, 1e-12));
    assert!((t - 8.7900e-3).abs() < 1e-7);
    let all_aborted = compose(1e-6, 2f64.powi(-10), 1e-9, 5, 0).unwrap();
    assert!(close(all_aborted, 1e-6 + 15.0 / 1024.0, 1e-12));
}

#[test]
fn compose_deltas_per_round() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..1000 {
        let eps0 = rng.gen_range(0.0..1e-3);
        let eps = 2f64.powf(-rng.gen_range(5.0..60.0));
        let eps_qkd = 10f64.powf(-rng.gen_range(3.0..15.0));
        let s_total = rng.gen_range(0..1000u64);
        let s_success = rng.gen_range(0..=s_total);
        let base = compose(eps0, eps, eps_qkd, s_total, s_success).unwrap();
        let after_success = compose(eps0, eps, eps_qkd, s_total + 1, s_success + 1).unwrap();
        let after_abort = compose(eps0, eps, eps_qkd, s_total + 1, s_success).unwrap();
        assert!(close(after_success, base + (3.0 * eps + eps_qkd), 1e-12));
        assert!(close(after_abort, base + 3.0 * eps, 1e-12));
        assert!(after_success >= after_abort && after_abort >= base);
    }
}

#[test]
fn max_rounds_matches_linear_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let eps0 = rng.gen_range(0.0..1e-2);
        let eps = 10f64.powf(-rng.gen_range(2.0..5.0));
        let eps_qkd = 10f64.powf(-rng.gen_range(2.0..9.0));
        let eps_sec = rng.gen_range(0.0..0.5);
        let got = max_rounds(eps_sec, eps0, eps, eps_qkd).unwrap();
        let mut scan = 0u64;
        while compose(eps0, eps, eps_qkd, scan + 1, scan + 1).unwrap() <= eps_sec {
            scan += 1;
        }
        if eps_sec <= eps0 {
            scan = 0;
        }
        assert_eq!(got, scan, "eps_sec={eps_sec} eps0={eps0} eps={eps} eps_qkd={eps_qkd}");
    }
}

#[test]
fn max_rounds_examples() {
    assert_eq!(max_rounds(0.01, 1e-6, 2f64.powi(-10), 1e-9).unwrap(), 3);
    assert!(compose(1e-6, 2f64.powi(-10), 1e-9, 4, 4).unwrap() > 0.01);
    assert_eq!(max_rounds(1e-6, 1e-6, 0.01, 0.01).unwrap(), 0);
    assert_eq!(max_rounds(0.1, 1e-6, 0.0, 0.0).unwrap(), UNBOUNDED_ROUNDS);
}

#[test]
fn rate_examples() {
    let h = binary_entropy(0.01).unwrap();
    assert!((h - 0.08079).abs() < 1e-5);
    let fixed = |_s: f64| 0.25;
    let r = asymptotic_rate(&fixed, 2.5, h).unwrap();
    assert!((r - 0.08842).abs() < 1e-5);
    assert_eq!(asymptotic_rate(&fixed, 2.5, 0.0).unwrap(), 0.25);
    let original = standard_rate(&fixed, 2.5, h).unwrap();
    assert!(close(original - r, h, 1e-12));
    assert!(asymptotic_rate(&ChshRate, 2.0, 0.1).is_err());
    assert!(asymptotic_rate(&ChshRate, 2.9, 0.1).is_err());
    assert!(asymptotic_rate(&ChshRate, MAX_CHSH, 1.5).is_err());
}

#[test]
fn chsh_rate_is_monotone() {
    let mut prev = ChshRate.rate(2.0);
    assert_eq!(prev, 0.0);
    for i in 1..=1000 {
        let s = 2.0 + (MAX_CHSH - 2.0) * i as f64 / 1000.0;
        let f = ChshRate.rate(s);
        assert!(f >= prev - 1e-15 && (0.0..=1.0 + 1e-12).contains(&f));
        prev = f;
    }
    assert!((prev - 1.0).abs() < 1e-9);
}

#[test]
fn ledger_refuses_rounds_beyond_plan() {
    let mut b = SecurityBudget::new(1e-6, 2f64.powi(-10), 1e-9, 0.01).unwrap();
    assert_eq!(b.planned_rounds(), 3);
    b.record_round(true).unwrap();
    b.record_round(false).unwrap();
    b.record_round(true).unwrap();
    assert!(b.record_round(true).is_err());
    assert!(close(b.total(), compose(1e-6, 2f64.powi(-10), 1e-9, 3, 2).unwrap(), 1e-15));
    let report = b.report();
    assert_eq!(report.lines().count(), 2 + 1 + 3);
}
