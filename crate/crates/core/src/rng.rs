//! Derived random streams.
//!
//! Every consumer of randomness gets its own ChaCha stream keyed by
//! `(master seed, domain)` and indexed by a counter, so concurrent work
//! reproduces sequential results exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    /// Cross-validation partitions, indexed by repetition.
    Split = 1,
    /// Perturbation weights, indexed by replicate.
    Perturb = 2,
    /// Simulated datasets, indexed by simulation replicate.
    SimData = 3,
    /// Analysis seeds for simulation replicates.
    SimAnalysis = 4,
    /// Monte-Carlo truth computations, indexed by round.
    Truth = 5,
}

pub fn stream(seed: u64, domain: Domain, index: u64) -> Stream {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(domain as u64).to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// A fresh 64-bit seed derived from `(seed, domain, index)`.
pub fn derive_seed(seed: u64, domain: Domain, index: u64) -> u64 {
    use rand::RngCore;
    stream(seed, domain, index).next_u64()
}
