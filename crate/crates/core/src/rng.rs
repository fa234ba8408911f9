//! Seed derivation and counter-based random streams.
//!
//! Every random quantity in a campaign is a pure function of a 64-bit seed.
//! Seeds for sub-tasks (run `i`, frame `k`, channel `c`) are derived with the
//! SplitMix64 output function:
//!
//! ```text
//! split(seed, i) = mix64(seed + (i + 1) * 0x9E3779B97F4A7C15)   (wrapping)
//! mix64(z):  z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;
//!            z ^= z >> 27; z *= 0x94D049BB133111EB;
//!            z ^= z >> 31
//! ```
//!
//! i.e. `split(seed, i)` is the `i`-th output of a SplitMix64 generator whose
//! state starts at `seed`. Because derivation never consumes shared state, the
//! result of run `i` cannot depend on how runs are scheduled across workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Golden-ratio increment of SplitMix64.
pub const SPLITMIX_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const MIX_MUL_1: u64 = 0xBF58_476D_1CE4_E5B9;
const MIX_MUL_2: u64 = 0x94D0_49BB_1331_11EB;

/// Generator used by all samplers (parameter draws, rejection sampling).
pub type SampleRng = ChaCha8Rng;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(MIX_MUL_1);
    z = (z ^ (z >> 27)).wrapping_mul(MIX_MUL_2);
    z ^ (z >> 31)
}

/// Derives the seed of sub-task `index` from `seed`.
#[inline]
pub fn split(seed: u64, index: u64) -> u64 {
    mix64(seed.wrapping_add(index.wrapping_add(1).wrapping_mul(SPLITMIX_GAMMA)))
}

/// Maps 64 random bits to a double in `[0, 1)` using the top 53 bits.
#[inline]
pub fn unit_f64(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub fn sample_rng(seed: u64) -> SampleRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Stateless stream keyed by `(seed, counter, channel)`.
///
/// Draws for frame `k` never depend on how many draws earlier frames made.
#[derive(Debug, Clone, Copy)]
pub struct CounterStream {
    key: u64,
}

impl CounterStream {
    pub fn new(seed: u64) -> Self {
        Self { key: mix64(seed ^ 0x5EED_0F_C0FFEE) }
    }

    #[inline]
    fn bits(&self, counter: u64, channel: u64) -> u64 {
        split(split(self.key, counter), channel)
    }

    /// Uniform draw in `[0, 1)`.
    #[inline]
    pub fn uniform(&self, counter: u64, channel: u64) -> f64 {
        unit_f64(self.bits(counter, channel))
    }

    /// Standard normal draw (Box-Muller on two sub-channels).
    pub fn normal(&self, counter: u64, channel: u64) -> f64 {
        let u1 = 1.0 - self.uniform(counter, channel.wrapping_mul(2).wrapping_add(0x100));
        let u2 = self.uniform(counter, channel.wrapping_mul(2).wrapping_add(0x101));
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}
