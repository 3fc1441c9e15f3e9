//! Fixed-width tiny pointers. A load-balancing primary table covers most of
//! the store; a small power-of-two-choices table absorbs the primary's rare
//! bucket overflows. Every pointer is exactly `p_max` bits: one selector bit
//! plus the wider of the two sub-pointers, with the narrower side zero-padded
//! so decoding is plain integer arithmetic.

use crate::bitcodec::ceil_log2;
use crate::bits;
use crate::hashing::{hash_to_range, HashSeed};
use crate::lbt::{rounded_geometry, BucketArray, LoadBalancingTable};
use crate::table::{DerefTable, Error, Result, SlotIndex, TableStats, TinyPointer};

/// Dereference table with two hash choices per key. Buckets are sized
/// `max(4, 2 * ceil(log2 log2 n))`, which keeps the maximum load of a
/// lightly loaded table inside one bucket with high probability. Used as the
/// spill structure behind [`FixedTable`]; usable standalone.
pub struct TwoChoiceTable {
    n: usize,
    bucket_size: usize,
    num_buckets: usize,
    sub_width: u8,
    occ: BucketArray,
    seed1: HashSeed,
    seed2: HashSeed,
    stats: TableStats,
}

/// `max(4, 2 * ceil(log2 ceil(log2 n)))`, in integer arithmetic throughout.
pub fn two_choice_bucket_size(n: usize) -> usize {
    (2 * ceil_log2(ceil_log2(n.max(4)) as usize) as usize).max(4)
}

impl TwoChoiceTable {
    pub fn new(n: usize, seed: HashSeed) -> Result<TwoChoiceTable> {
        if n == 0 {
            return Err(Error::InvalidParams("two-choice table of 0 slots".into()));
        }
        let b = two_choice_bucket_size(n);
        let num_buckets = n.div_ceil(b);
        let mut occ = BucketArray::new(num_buckets, b);
        occ.mark_phantoms_from(n);
        Ok(TwoChoiceTable {
            n,
            bucket_size: b,
            num_buckets,
            sub_width: ceil_log2(b) as u8,
            occ,
            seed1: seed.derive(1),
            seed2: seed.derive(2),
            stats: TableStats::new(),
        })
    }

    pub fn bucket_size(&self) -> usize {
        self.bucket_size
    }

    pub fn num_buckets(&self) -> usize {
        self.num_buckets
    }

    /// Every pointer is one choice bit plus a slot-in-bucket index.
    pub fn pointer_width(&self) -> u8 {
        1 + self.sub_width
    }

    pub fn live(&self) -> usize {
        self.occ.live()
    }

    fn bucket1(&self, key: u64) -> usize {
        hash_to_range(self.seed1, key, self.num_buckets as u64) as usize
    }

    fn bucket2(&self, key: u64) -> usize {
        hash_to_range(self.seed2, key, self.num_buckets as u64) as usize
    }

    fn decode(&self, value: u64) -> (usize, u64) {
        let choice = (value >> self.sub_width) & 1;
        let slot = (value & bits::low_mask(self.sub_width as usize))
            .min(self.bucket_size as u64 - 1);
        (choice as usize, slot)
    }
}

impl DerefTable for TwoChoiceTable {
    fn capacity(&self) -> usize {
        self.n
    }

    fn allocate(&mut self, key: u64) -> Option<TinyPointer> {
        let b1 = self.bucket1(key);
        let b2 = self.bucket2(key);
        let f1 = self.occ.free_slots_in(b1);
        let f2 = self.occ.free_slots_in(b2);
        // Most free slots wins; a tie goes to the first hash.
        let (choice, bucket) = if f2 > f1 { (1u64, b2) } else { (0u64, b1) };
        match self.occ.try_alloc(bucket) {
            Some(slot) => {
                let p = TinyPointer::from_bits(
                    (choice << self.sub_width) | slot as u64,
                    self.pointer_width(),
                );
                self.stats.record_success(p.len());
                Some(p)
            }
            None => {
                self.stats.record_failure();
                None
            }
        }
    }

    fn dereference(&self, key: u64, ptr: TinyPointer) -> SlotIndex {
        let (choice, slot) = self.decode(ptr.value());
        let bucket = if choice == 1 { self.bucket2(key) } else { self.bucket1(key) };
        SlotIndex((bucket * self.bucket_size + slot as usize).min(self.n - 1))
    }

    fn free(&mut self, key: u64, ptr: TinyPointer) {
        let (choice, slot) = self.decode(ptr.value());
        let bucket = if choice == 1 { self.bucket2(key) } else { self.bucket1(key) };
        self.occ.free_slot(bucket, slot as usize);
        self.stats.record_free();
    }

    fn stats(&self) -> &TableStats {
        &self.stats
    }

    fn metadata_bits(&self) -> usize {
        self.occ.metadata_bits() + 64 * (self.stats.pointer_bit_histogram.len() + 5) + 6 * 64
    }

    fn state_digest(&self) -> u64 {
        self.occ.digest(self.stats.allocations ^ self.stats.frees.rotate_left(32))
    }
}

/// The fixed-width composition over `n` slots with failure parameter
/// `delta`: a primary table sized to all but a `delta / 2` fraction of the
/// store, and a two-choice table on the remainder. Construction fixes
/// `p_max`; every successful allocation returns exactly that many bits.
pub struct FixedTable {
    n: usize,
    delta: f64,
    primary: LoadBalancingTable,
    m1: usize,
    secondary: Option<TwoChoiceTable>,
    p_max: u8,
    stats: TableStats,
}

impl FixedTable {
    pub fn new(n: usize, delta: f64, seed: HashSeed) -> Result<FixedTable> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidParams(format!("delta = {delta} not in (0, 1)")));
        }
        if n < 16 {
            return Err(Error::InvalidParams(format!("{n} slots is below the minimum 16")));
        }
        let m1_target = ((1.0 - delta / 2.0) * n as f64).ceil() as usize;
        let (nb, bs) = rounded_geometry(m1_target, delta / 2.0);
        let primary = LoadBalancingTable::with_geometry(nb, bs, seed.derive(1))?;
        let m1 = primary.capacity();
        debug_assert!(m1 <= n, "primary geometry overran the store");
        let secondary = if n > m1 {
            Some(TwoChoiceTable::new(n - m1, seed.derive(2))?)
        } else {
            None
        };
        let sec_width = secondary.as_ref().map_or(0, |s| s.pointer_width());
        let p_max = 1 + primary.pointer_width().max(sec_width);
        Ok(FixedTable { n, delta, primary, m1, secondary, p_max, stats: TableStats::new() })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// The one and only pointer length this table produces.
    pub fn pointer_width(&self) -> u8 {
        self.p_max
    }

    pub fn primary(&self) -> &LoadBalancingTable {
        &self.primary
    }

    pub fn secondary(&self) -> Option<&TwoChoiceTable> {
        self.secondary.as_ref()
    }

    pub fn secondary_live(&self) -> usize {
        self.secondary.as_ref().map_or(0, |s| s.live())
    }

    fn split(&self, ptr: TinyPointer) -> (u64, u64) {
        let v = ptr.value();
        ((v >> (self.p_max - 1)) & 1, v & bits::low_mask(self.p_max as usize - 1))
    }
}

impl DerefTable for FixedTable {
    fn capacity(&self) -> usize {
        self.n
    }

    fn allocate(&mut self, key: u64) -> Option<TinyPointer> {
        if let Some(p) = self.primary.allocate(key) {
            let out = TinyPointer::from_bits(p.value(), self.p_max);
            self.stats.record_success(self.p_max);
            return Some(out);
        }
        if let Some(sec) = self.secondary.as_mut() {
            if let Some(p) = sec.allocate(key) {
                let v = (1 << (self.p_max - 1)) | p.value();
                self.stats.record_success(self.p_max);
                return Some(TinyPointer::from_bits(v, self.p_max));
            }
        }
        self.stats.record_failure();
        None
    }

    fn dereference(&self, key: u64, ptr: TinyPointer) -> SlotIndex {
        let (selector, sub) = self.split(ptr);
        match (&self.secondary, selector) {
            (Some(sec), 1) => {
                let p = TinyPointer::from_bits(sub, sec.pointer_width());
                SlotIndex(self.m1 + sec.dereference(key, p).0)
            }
            _ => {
                let p = TinyPointer::from_bits(sub, self.primary.pointer_width());
                self.primary.dereference(key, p)
            }
        }
    }

    fn free(&mut self, key: u64, ptr: TinyPointer) {
        let (selector, sub) = self.split(ptr);
        match (&mut self.secondary, selector) {
            (Some(sec), 1) => {
                let w = sec.pointer_width();
                sec.free(key, TinyPointer::from_bits(sub, w));
            }
            _ => {
                let w = self.primary.pointer_width();
                self.primary.free(key, TinyPointer::from_bits(sub, w));
            }
        }
        self.stats.record_free();
    }

    fn stats(&self) -> &TableStats {
        &self.stats
    }

    fn metadata_bits(&self) -> usize {
        self.primary.metadata_bits()
            + self.secondary.as_ref().map_or(0, |s| s.metadata_bits())
            + 64 * (self.stats.pointer_bit_histogram.len() + 5)
    }

    fn state_digest(&self) -> u64 {
        let s = self.secondary.as_ref().map_or(0, |s| s.state_digest());
        crate::hashing::mix64(self.primary.state_digest() ^ s.rotate_left(21))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    const SEED: HashSeed = HashSeed(0x5eed);

    #[test]
    fn two_choice_bucket_sizes() {
        assert_eq!(two_choice_bucket_size(4), 4);
        assert_eq!(two_choice_bucket_size(36), 6);
        assert_eq!(two_choice_bucket_size(8161), 8);
        assert_eq!(two_choice_bucket_size(262_144), 10);
    }

    #[test]
    fn two_choice_tie_breaks_to_first_hash() {
        // 36 slots in 6 buckets of 6, no phantom padding.
        let mut t = TwoChoiceTable::new(36, SEED).unwrap();
        assert_eq!(t.num_buckets(), 6);
        for k in 0..6u64 {
            let (b1, b2) = (t.bucket1(k), t.bucket2(k));
            // The table is drained back to empty each round, so always a tie.
            assert_eq!(t.occ.free_slots_in(b1), t.occ.free_slots_in(b2));
            let p = t.allocate(k).unwrap();
            assert_eq!(p.len(), 4);
            let (choice, _) = t.decode(p.value());
            assert_eq!(choice, 0, "a tie must resolve to the first hash");
            t.free(k, p);
        }
    }

    #[test]
    fn two_choice_prefers_more_free() {
        let mut t = TwoChoiceTable::new(36, SEED).unwrap();
        // A key whose two hashes collide pins its bucket deterministically.
        let pinned = (0u64..).find(|&k| t.bucket1(k) == t.bucket2(k)).unwrap();
        let a = t.bucket1(pinned);
        t.allocate(pinned).unwrap();
        let probe = (0u64..)
            .find(|&k| t.bucket1(k) == a && t.bucket2(k) != a)
            .unwrap();
        let p = t.allocate(probe).unwrap();
        let (choice, slot) = t.decode(p.value());
        assert_eq!(choice, 1, "the untouched bucket has more free slots");
        assert_eq!(slot, 0);
        assert_eq!(t.dereference(probe, p).0, t.bucket2(probe) * t.bucket_size());
    }

    #[test]
    fn two_choice_fails_only_when_both_buckets_full() {
        let mut t = TwoChoiceTable::new(36, SEED).unwrap();
        let b = t.bucket_size();
        let pinned: Vec<u64> = (0u64..)
            .filter(|&k| t.bucket1(k) == t.bucket2(k) && t.bucket1(k) == 0)
            .take(b + 1)
            .collect();
        for &k in &pinned[..b] {
            assert!(t.allocate(k).is_some());
        }
        // One escape hatch: same first bucket, different second.
        let escape = (0u64..)
            .find(|&k| t.bucket1(k) == 0 && t.bucket2(k) != 0)
            .unwrap();
        let p = t.allocate(escape).expect("second choice still open");
        assert_eq!(t.decode(p.value()).0, 1);
        assert!(t.allocate(pinned[b]).is_none(), "both choices exhausted");
        assert_eq!(t.stats().failures, 1);
    }

    #[test]
    fn two_choice_garbage_dereference_in_range() {
        let mut t = TwoChoiceTable::new(37, SEED).unwrap(); // phantom-padded tail
        for k in 0..20u64 {
            t.allocate(k);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let before = t.state_digest();
        for _ in 0..50_000 {
            let ptr = TinyPointer::from_bits(rng.gen(), rng.gen_range(0..=64));
            assert!(t.dereference(rng.gen(), ptr).0 < 37);
        }
        assert_eq!(t.state_digest(), before);
    }

    #[test]
    fn frozen_geometry_at_sixty_four_k() {
        let t = FixedTable::new(1 << 16, 0.25, SEED).unwrap();
        assert_eq!(t.primary().num_buckets(), 75);
        assert_eq!(t.primary().bucket_size(), 765);
        assert_eq!(t.primary().capacity(), 57_375);
        assert_eq!(t.primary().pointer_width(), 10);
        let sec = t.secondary().unwrap();
        assert_eq!(sec.capacity(), 8161);
        assert_eq!(sec.bucket_size(), 8);
        assert_eq!(sec.pointer_width(), 4);
        assert_eq!(t.pointer_width(), 11);
    }

    #[test]
    fn every_pointer_is_exactly_p_max_bits() {
        let mut t = FixedTable::new(1 << 16, 0.25, SEED).unwrap();
        let mut seen = HashSet::new();
        for k in 0..10_000u64 {
            let p = t.allocate(k).expect("load far below capacity");
            assert_eq!(p.len(), t.pointer_width());
            let s = t.dereference(k, p).0;
            assert!(s < t.capacity());
            assert!(seen.insert(s), "slot {s} reused");
        }
        t.stats().check_invariants();
    }

    #[test]
    fn spill_routes_to_secondary_region() {
        let mut t = FixedTable::new(64, 0.5, SEED).unwrap();
        let m1 = t.primary().capacity();
        assert_eq!(m1, 48);
        assert_eq!(t.primary().num_buckets(), 1);
        for k in 0..48u64 {
            let p = t.allocate(k).unwrap();
            assert!(t.dereference(k, p).0 < m1);
        }
        let p = t.allocate(1000).expect("secondary open");
        assert_eq!(p.value() >> (t.pointer_width() - 1), 1);
        let s = t.dereference(1000, p).0;
        assert!(s >= m1 && s < 64);
        assert_eq!(t.secondary_live(), 1);
        t.free(1000, p);
        assert_eq!(t.secondary_live(), 0);
        assert_eq!(t.stats().live, 48);
    }

    #[test]
    fn drain_and_reallocate_replays_identically() {
        let mut t = FixedTable::new(1 << 12, 0.25, SEED).unwrap();
        let keys: Vec<u64> = (0..3000).collect();
        let first: Vec<_> = keys.iter().map(|&k| t.allocate(k).unwrap()).collect();
        for (&k, &p) in keys.iter().zip(&first) {
            t.free(k, p);
        }
        assert_eq!(t.stats().live, 0);
        let second: Vec<_> = keys.iter().map(|&k| t.allocate(k).unwrap()).collect();
        assert_eq!(first, second, "allocation must not depend on drained history");
    }

    #[test]
    fn secondary_load_stays_negligible() {
        let mut t = FixedTable::new(1 << 16, 0.25, SEED).unwrap();
        let n = t.capacity() as f64;
        for k in 0..49_152u64 {
            assert!(t.allocate(k).is_some());
        }
        assert_eq!(t.stats().failures, 0);
        assert!((t.secondary_live() as f64) <= 0.25 * 0.25 * n);
    }

    #[test]
    fn garbage_pointers_stay_in_range_and_pure() {
        let mut t = FixedTable::new(1 << 12, 0.125, SEED).unwrap();
        for k in 0..2000u64 {
            t.allocate(k);
        }
        let before = t.state_digest();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100_000 {
            let ptr = TinyPointer::from_bits(rng.gen(), rng.gen_range(0..=64));
            assert!(t.dereference(rng.gen(), ptr).0 < t.capacity());
        }
        assert_eq!(t.state_digest(), before);
    }

    #[test]
    fn pointer_width_tracks_triple_log_envelope() {
        for e in [12u32, 14, 16, 18, 20, 22] {
            let n = 1usize << e;
            for delta in [0.5, 0.25, 0.125, 0.0625] {
                let t = FixedTable::new(n, delta, SEED).unwrap();
                let lll = (n as f64).log2().log2().log2();
                let bound = 2.0 * (lll + (1.0 / delta).log2()) + 8.0;
                assert!(
                    (t.pointer_width() as f64) <= bound,
                    "n = 2^{e}, delta = {delta}: width {} above {bound:.2}",
                    t.pointer_width()
                );
            }
        }
    }

    #[test]
    fn rejects_bad_params() {
        assert!(FixedTable::new(8, 0.25, SEED).is_err());
        assert!(FixedTable::new(1 << 10, 0.0, SEED).is_err());
        assert!(FixedTable::new(1 << 10, 1.0, SEED).is_err());
        assert!(TwoChoiceTable::new(0, SEED).is_err());
    }
}
