//! Measurement devices and the simulated entangled source.
//!
//! Each party announces one of four measurement settings per round, encoded
//! as polarization angles 0, 45, 22.5 and 67.5 degrees. The source produces
//! outcomes with correlation `E = (1 - 2q) cos(2 (theta_a - theta_b))`, so
//! equal settings agree with probability `1 - q` and the CHSH combination of
//! settings {0, 1} against {2, 3} reaches `2 sqrt 2 (1 - 2q)`.
//!
//! A [`Device`] sees only its own settings, the outcomes physics handed it,
//! the unconsumed key in its lab's pool and whatever it keeps in its own
//! fields. It never sees transcripts, seeds or the other party's data.

use std::collections::BTreeSet;

use rand::{Rng as _, RngCore, SeedableRng};

use crate::bits::BitString;
use crate::qkdsim::config::DeviceKind;
use crate::rng::Rng;

/// Measurement setting, `0..4`.
pub type Basis = u8;

pub const BASIS_COUNT: u8 = 4;

/// Polarization angle of each setting, in degrees.
pub const ANGLES_DEG: [f64; 4] = [0.0, 45.0, 22.5, 67.5];

/// Ideal outcome correlation `E(x, y)` for settings `x`, `y` at noise `q`.
pub fn correlation(x: Basis, y: Basis, q: f64) -> f64 {
    let d = (ANGLES_DEG[x as usize] - ANGLES_DEG[y as usize]).to_radians();
    (1.0 - 2.0 * q) * (2.0 * d).cos()
}

/// Uniform settings.
pub fn random_bases<R: RngCore + ?Sized>(count: usize, rng: &mut R) -> Vec<Basis> {
    (0..count).map(|_| rng.gen_range(0..BASIS_COUNT)).collect()
}

/// Outcomes produced by the source for both labs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PhysicalOutcomes {
    pub alice: Vec<bool>,
    pub bob: Vec<bool>,
}

/// Samples outcomes for paired settings. Both parties run this with the same
/// source generator; each keeps only its own half.
pub fn measure_phase<R: RngCore + ?Sized>(
    alice_bases: &[Basis],
    bob_bases: &[Basis],
    q: f64,
    source: &mut R,
) -> PhysicalOutcomes {
    assert_eq!(alice_bases.len(), bob_bases.len());
    let mut alice = Vec::with_capacity(alice_bases.len());
    let mut bob = Vec::with_capacity(alice_bases.len());
    for (&x, &y) in alice_bases.iter().zip(bob_bases) {
        let a: bool = source.gen();
        let agree = source.gen_bool(((1.0 + correlation(x, y, q)) / 2.0).clamp(0.0, 1.0));
        alice.push(a);
        bob.push(if agree { a } else { !a });
    }
    PhysicalOutcomes { alice, bob }
}

/// What a device is shown each round.
#[derive(Clone, Copy, Debug)]
pub struct DeviceInput<'a> {
    pub round: u64,
    pub bases: &'a [Basis],
    pub physical: &'a [bool],
    /// Unconsumed bits of the lab's key pool, starting at the next bit to be
    /// dispensed.
    pub keys: &'a BitString,
}

/// A measurement device. The returned vector must have one entry per setting.
pub trait Device: Send {
    fn outputs(&mut self, input: &DeviceInput<'_>) -> Vec<bool>;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct HonestDevice;

impl Device for HonestDevice {
    fn outputs(&mut self, input: &DeviceInput<'_>) -> Vec<bool> {
        input.physical.to_vec()
    }
}

/// Tries to leak `d` through a position-keyed one-time pad: outputs
/// `d[i mod |d|] ^ K[i]`. Harmless against the insider-proof channel.
#[derive(Clone, Debug)]
pub struct NaiveLeakDevice {
    pub leak: Vec<bool>,
}

impl Device for NaiveLeakDevice {
    fn outputs(&mut self, input: &DeviceInput<'_>) -> Vec<bool> {
        (0..input.bases.len())
            .map(|i| {
                let k = i < input.keys.len() && input.keys.bit(i);
                self.leak[i % self.leak.len()] ^ k
            })
            .collect()
    }
}

/// Replaces its outputs with noise in chosen rounds, forcing aborts there.
#[derive(Clone, Debug)]
pub struct AbortSignallerDevice {
    pub rounds: BTreeSet<u64>,
    rng: Rng,
}

impl AbortSignallerDevice {
    pub fn new(rounds: impl IntoIterator<Item = u64>, seed: u64) -> Self {
        AbortSignallerDevice {
            rounds: rounds.into_iter().collect(),
            rng: Rng::seed_from_u64(seed),
        }
    }
}

impl Device for AbortSignallerDevice {
    fn outputs(&mut self, input: &DeviceInput<'_>) -> Vec<bool> {
        if self.rounds.contains(&input.round) {
            (0..input.bases.len()).map(|_| self.rng.gen()).collect()
        } else {
            input.physical.to_vec()
        }
    }
}

/// Builds the device selected in the configuration.
pub fn make_device(kind: &DeviceKind, seed: u64) -> Box<dyn Device> {
    match kind {
        DeviceKind::Honest => Box::new(HonestDevice),
        DeviceKind::NaiveLeak(d) => Box::new(NaiveLeakDevice { leak: d.clone() }),
        DeviceKind::AbortSignaller(r) => Box::new(AbortSignallerDevice::new(r.iter().copied(), seed)),
    }
}
