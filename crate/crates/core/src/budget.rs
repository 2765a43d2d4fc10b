//! Security-parameter composition across key-growth rounds and key-rate
//! accounting.
//!
//! Every round spends three channel uses (PE values, abort flag, EC bundle),
//! each costing `eps`; a round that produces key additionally costs
//! `eps_qkd = eps_EC + eps_PE + eps_PA`. Starting from an initial key of
//! insecurity `eps0`:
//!
//! ```text
//! total = eps0 + 3 * s_total * eps + s_success * eps_qkd
//! ```

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Returned by [`max_rounds`] when rounds cost nothing.
pub const UNBOUNDED_ROUNDS: u64 = u64::MAX;

fn check_component(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::InvalidBudget(format!("{name} = {v} is outside [0, 1]")));
    }
    Ok(())
}

/// `eps0 + 3 * s_total * eps + s_success * eps_qkd`.
pub fn compose(eps0: f64, eps: f64, eps_qkd: f64, s_total: u64, s_success: u64) -> Result<f64> {
    check_component("eps0", eps0)?;
    check_component("eps", eps)?;
    check_component("eps_qkd", eps_qkd)?;
    if s_success > s_total {
        return Err(Error::InvalidBudget(format!(
            "{s_success} successful rounds out of {s_total}"
        )));
    }
    Ok(eps0 + 3.0 * s_total as f64 * eps + s_success as f64 * eps_qkd)
}

/// `log2` of [`compose`], for components given as base-2 logarithms
/// (`f64::NEG_INFINITY` for zero). Does not underflow.
pub fn compose_log2(
    log2_eps0: f64,
    log2_eps: f64,
    log2_eps_qkd: f64,
    s_total: u64,
    s_success: u64,
) -> Result<f64> {
    for (name, v) in [("eps0", log2_eps0), ("eps", log2_eps), ("eps_qkd", log2_eps_qkd)] {
        if v > 0.0 || v.is_nan() {
            return Err(Error::InvalidBudget(format!("log2 {name} = {v} exceeds 0")));
        }
    }
    if s_success > s_total {
        return Err(Error::InvalidBudget(format!(
            "{s_success} successful rounds out of {s_total}"
        )));
    }
    let terms = [
        log2_eps0,
        log2_eps + (3.0 * s_total as f64).log2(),
        log2_eps_qkd + (s_success as f64).log2(),
    ];
    Ok(log2_sum(&terms))
}

/// `log2(sum 2^t)` without leaving the log domain.
pub fn log2_sum(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp2()).sum::<f64>().log2()
}

/// Largest `s` with `compose(eps0, eps, eps_qkd, s, s) <= eps_sec`, assuming
/// every round succeeds. Zero when `eps_sec <= eps0`; [`UNBOUNDED_ROUNDS`]
/// when `eps = eps_qkd = 0`.
pub fn max_rounds(eps_sec: f64, eps0: f64, eps: f64, eps_qkd: f64) -> Result<u64> {
    check_component("eps_sec", eps_sec)?;
    compose(eps0, eps, eps_qkd, 0, 0)?;
    if eps_sec <= eps0 {
        return Ok(0);
    }
    let per_round = 3.0 * eps + eps_qkd;
    if per_round == 0.0 {
        return Ok(UNBOUNDED_ROUNDS);
    }
    let within = |s: u64| compose(eps0, eps, eps_qkd, s, s).map(|t| t <= eps_sec);
    let mut s = ((eps_sec - eps0) / per_round).floor().min(1e18) as u64;
    // The estimate can be off by one either way after rounding.
    while s > 0 && !within(s)? {
        s -= 1;
    }
    while within(s + 1)? {
        s += 1;
    }
    Ok(s)
}

/// `h(q) = -q log2 q - (1 - q) log2 (1 - q)`, with `h(0) = h(1) = 0`.
pub fn binary_entropy(q: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidParameter(format!(
            "probability {q} outside [0, 1]"
        )));
    }
    let term = |p: f64| if p == 0.0 { 0.0 } else { -p * p.log2() };
    Ok(term(q) + term(1.0 - q))
}

/// Key rate (bits of secure key per raw bit, before error correction) as a
/// function of the observed CHSH value.
pub trait RateModel: Send + Sync {
    fn rate(&self, s_obs: f64) -> f64;
}

/// `f(S) = 1 - h(1/2 + 1/2 sqrt((S/2)^2 - 1))`, zero at or below `S = 2`
/// and one at `S = 2 sqrt 2`.
#[derive(Clone, Copy, Debug, Default)]
pub struct ChshRate;

impl RateModel for ChshRate {
    fn rate(&self, s_obs: f64) -> f64 {
        if s_obs <= 2.0 {
            return 0.0;
        }
        let inner = ((s_obs / 2.0).powi(2) - 1.0).clamp(0.0, 1.0);
        let p = 0.5 + 0.5 * inner.sqrt();
        1.0 - binary_entropy(p.min(1.0)).expect("p in [1/2, 1]")
    }
}

impl<F: Fn(f64) -> f64 + Send + Sync> RateModel for F {
    fn rate(&self, s_obs: f64) -> f64 {
        self(s_obs)
    }
}

pub const MAX_CHSH: f64 = 2.0 * std::f64::consts::SQRT_2;

/// `f(S_obs) - 2 H(A|B)`: the rate when error-correction data must also be
/// paid for with pool key. May be negative.
pub fn asymptotic_rate(model: &dyn RateModel, s_obs: f64, h_ab: f64) -> Result<f64> {
    if !(s_obs > 2.0 && s_obs <= MAX_CHSH + 1e-12) {
        return Err(Error::InvalidParameter(format!(
            "CHSH value {s_obs} outside (2, 2 sqrt 2]"
        )));
    }
    if !(0.0..=1.0).contains(&h_ab) {
        return Err(Error::InvalidParameter(format!(
            "conditional entropy {h_ab} outside [0, 1]"
        )));
    }
    Ok(model.rate(s_obs) - 2.0 * h_ab)
}

/// Rate of the unmodified protocol, `f(S_obs) - H(A|B)`.
pub fn standard_rate(model: &dyn RateModel, s_obs: f64, h_ab: f64) -> Result<f64> {
    Ok(asymptotic_rate(model, s_obs, h_ab)? + h_ab)
}

/// Running ledger of spent security across rounds.
#[derive(Clone, Debug)]
pub struct SecurityBudget {
    pub eps0: f64,
    pub eps_channel: f64,
    pub eps_qkd: f64,
    pub eps_sec: f64,
    rounds: u64,
    successes: u64,
    history: Vec<bool>,
}

impl SecurityBudget {
    pub fn new(eps0: f64, eps_channel: f64, eps_qkd: f64, eps_sec: f64) -> Result<Self> {
        compose(eps0, eps_channel, eps_qkd, 0, 0)?;
        check_component("eps_sec", eps_sec)?;
        Ok(SecurityBudget {
            eps0,
            eps_channel,
            eps_qkd,
            eps_sec,
            rounds: 0,
            successes: 0,
            history: vec![],
        })
    }

    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    pub fn successes(&self) -> u64 {
        self.successes
    }

    pub fn total(&self) -> f64 {
        compose(self.eps0, self.eps_channel, self.eps_qkd, self.rounds, self.successes)
            .expect("validated components")
    }

    pub fn remaining(&self) -> f64 {
        self.eps_sec - self.total()
    }

    /// Rounds the plan allows in total (worst case: all succeed).
    pub fn planned_rounds(&self) -> u64 {
        max_rounds(self.eps_sec, self.eps0, self.eps_channel, self.eps_qkd)
            .expect("validated components")
    }

    /// Whether another round fits the plan.
    pub fn can_run_round(&self) -> bool {
        self.rounds < self.planned_rounds()
    }

    /// Cost of one round given its outcome.
    pub fn round_cost(&self, success: bool) -> f64 {
        3.0 * self.eps_channel + if success { self.eps_qkd } else { 0.0 }
    }

    pub fn record_round(&mut self, success: bool) -> Result<()> {
        if !self.can_run_round() {
            return Err(Error::InvalidBudget(format!(
                "round {} exceeds the planned {} rounds",
                self.rounds + 1,
                self.planned_rounds()
            )));
        }
        self.rounds += 1;
        if success {
            self.successes += 1;
        }
        self.history.push(success);
        Ok(())
    }

    /// Plain-text table: round, cost, cumulative, remaining.
    pub fn report(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "eps0 = {:.6e}  eps_channel = {:.6e}  eps_qkd = {:.6e}  eps_sec = {:.6e}  planned rounds = {}",
            self.eps0,
            self.eps_channel,
            self.eps_qkd,
            self.eps_sec,
            match self.planned_rounds() {
                UNBOUNDED_ROUNDS => "unbounded".to_string(),
                s => s.to_string(),
            }
        );
        let _ = writeln!(out, "{:>6} {:>14} {:>14} {:>14}", "round", "cost", "cumulative", "remaining");
        let mut cumulative = self.eps0;
        let _ = writeln!(
            out,
            "{:>6} {:>14.6e} {:>14.6e} {:>14.6e}",
            0,
            self.eps0,
            cumulative,
            self.eps_sec - cumulative
        );
        for (i, &success) in self.history.iter().enumerate() {
            let cost = self.round_cost(success);
            cumulative += cost;
            let _ = writeln!(
                out,
                "{:>6} {:>14.6e} {:>14.6e} {:>14.6e}",
                i + 1,
                cost,
                cumulative,
                self.eps_sec - cumulative
            );
        }
        out
    }
}
