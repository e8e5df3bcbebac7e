//! Deterministic seeding utilities.
//!
//! Every stochastic routine in this crate takes an explicit `u64` seed and
//! derives its generator state through [`split_seed`], a counter-based
//! SplitMix64 derivation. The derivation is part of the output format
//! contract: replica `i` of a run with master seed `s` always uses
//! `split_seed(s, STREAM_TAG, i)`, so results are reproducible regardless of
//! how replicas are scheduled across workers.

use rand_pcg::Pcg64Mcg;

/// SplitMix64 finalizer. Bijective on `u64`, used as the mixing primitive
/// for all seed derivation.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent sub-seed from `(master, tag, index)`.
///
/// `tag` separates logical streams (mark generation, auxiliary randomness,
/// replica splitting, ...) so that two consumers never alias.
#[inline]
pub fn split_seed(master: u64, tag: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master ^ tag.wrapping_mul(0xa076_1d64_78bd_642f)).wrapping_add(index))
}

/// Stream tags used across the crate. Kept in one place so the derivation
/// is auditable from the documentation.
pub mod tags {
    /// Poisson mark streams (graphical constructions).
    pub const MARKS: u64 = 0x4d41_524b;
    /// Auxiliary randomness attached to marks (refresh draws, coin flips).
    pub const AUX: u64 = 0x4155_58;
    /// Per-replica master split in Monte Carlo loops.
    pub const REPLICA: u64 = 0x5245_50;
    /// Dual (backward) processes.
    pub const DUAL: u64 = 0x4455_414c;
    /// Random walks (IP(2), SRW couplings).
    pub const WALK: u64 = 0x57_414c4b;
    /// Leaf-spin sampling on dual genealogies.
    pub const SPINS: u64 = 0x5350_494e;
}

/// The pinned generator for all simulations: PCG (128-bit MCG with XSL-RR
/// output). Pure integer arithmetic, so streams are identical on every
/// platform, and fast enough for event rates of order `L^(d+2)`.
pub type SimRng = Pcg64Mcg;

/// Builds the pinned generator from a derived seed.
#[inline]
pub fn sim_rng(seed: u64) -> SimRng {
    // Expand the 64-bit seed to the generator's 128-bit state with two
    // decorrelated SplitMix64 passes.
    let lo = splitmix64(seed) as u128;
    let hi = splitmix64(seed ^ 0x6a09_e667_f3bc_c909) as u128;
    rand::SeedableRng::from_seed(((hi << 64) | lo).to_le_bytes().into())
}

/// Derives the per-replica seed used by every Monte Carlo loop in the crate.
#[inline]
pub fn replica_seed(master: u64, replica: u64) -> u64 {
    split_seed(master, tags::REPLICA, replica)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngExt;

    #[test]
    fn split_seed_is_deterministic_and_spreads() {
        assert_eq!(split_seed(7, tags::MARKS, 0), split_seed(7, tags::MARKS, 0));
        assert_ne!(split_seed(7, tags::MARKS, 0), split_seed(7, tags::MARKS, 1));
        assert_ne!(split_seed(7, tags::MARKS, 0), split_seed(7, tags::AUX, 0));
        assert_ne!(split_seed(7, tags::MARKS, 0), split_seed(8, tags::MARKS, 0));
    }

    #[test]
    fn sim_rng_streams_are_reproducible() {
        let mut a = sim_rng(42);
        let mut b = sim_rng(42);
        for _ in 0..100 {
            assert_eq!(a.random::<u64>(), b.random::<u64>());
        }
    }
}
