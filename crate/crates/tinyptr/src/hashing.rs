//! Seeded hashing. Everything that looks random in this crate is derived from
//! a [`HashSeed`] through these functions, so identical seeds reproduce
//! identical behavior across runs and platforms.

/// Seed for one hash function. Sub-seeds are split off with [`HashSeed::derive`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HashSeed(pub u64);

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// 64-bit finalizer with full avalanche (the murmur3 variant).
#[inline]
pub fn mix64(mut x: u64) -> u64 {
    x ^= x >> 33;
    x = x.wrapping_mul(0xff51_afd7_ed55_8ccd);
    x ^= x >> 33;
    x = x.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    x ^= x >> 33;
    x
}

impl HashSeed {
    /// Deterministically split off an independent sub-seed for `tag`.
    #[inline]
    pub fn derive(self, tag: u64) -> HashSeed {
        HashSeed(mix64(self.0 ^ mix64(tag.wrapping_add(GOLDEN))))
    }
}

/// Full 64-bit hash of `key` under `seed`.
#[inline]
pub fn hash64(seed: HashSeed, key: u64) -> u64 {
    mix64(mix64(key.wrapping_add(GOLDEN)) ^ seed.0)
}

/// Hash `key` into `[0, range)`.
///
/// Range reduction is the multiply-shift `(h * range) >> 64`, not a modulo:
/// it is branch-free and avoids the low-bit bias of power-of-two moduli.
#[inline]
pub fn hash_to_range(seed: HashSeed, key: u64, range: u64) -> u64 {
    debug_assert!(range >= 1);
    (((hash64(seed, key) as u128) * (range as u128)) >> 64) as u64
}

/// The `i`-th member of a family of hash functions under one seed.
///
/// Members use disjoint derived seeds, so `(seed, key, 0, r)` and
/// `(seed, key, 1, r)` behave as independent hashes of the same key.
#[inline]
pub fn hash_stream(seed: HashSeed, key: u64, i: u64, range: u64) -> u64 {
    hash_to_range(seed.derive(i), key, range)
}
