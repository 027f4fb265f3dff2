//! Counter-style random streams.
//!
//! Every random draw in a chain is keyed by `(seed, chain, iteration, slot)`.
//! A slot is either a site index (latent-field updates) or one of the
//! reserved [`Slot`] values for the scalar updates. The stream depends only
//! on the key, so the result of a sweep does not depend on how its
//! per-site work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Reserved stream slots for non-site updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Slot {
    Beta = u64::MAX - 1,
    Beta0 = u64::MAX - 2,
    Interweave = u64::MAX - 3,
    Tau2 = u64::MAX - 4,
    Theta = u64::MAX - 5,
    Init = u64::MAX - 6,
    Predict = u64::MAX - 7,
    ThetaWhitened = u64::MAX - 8,
}

impl From<Slot> for u64 {
    fn from(s: Slot) -> u64 {
        s as u64
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Stream key for one chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamKey {
    pub seed: u64,
    pub chain: u64,
}

impl StreamKey {
    pub fn new(seed: u64, chain: u64) -> Self {
        Self { seed, chain }
    }

    /// The generator for one `(iteration, slot)` cell of this chain.
    pub fn rng(&self, iteration: u64, slot: impl Into<u64>) -> ChaCha8Rng {
        let slot = slot.into();
        let mut key = [0u8; 32];
        let words = [
            splitmix(self.seed),
            splitmix(self.chain ^ 0xA5A5_A5A5_0000_0001),
            splitmix(iteration ^ 0x5A5A_0000_5A5A_0002),
            splitmix(slot ^ 0x0F0F_F0F0_0F0F_0003),
        ];
        for (i, w) in words.iter().enumerate() {
            key[i * 8..(i + 1) * 8].copy_from_slice(&w.to_le_bytes());
        }
        ChaCha8Rng::from_seed(key)
    }
}

/// Plain seeded generator for one-off draws (simulation, orderings).
pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
