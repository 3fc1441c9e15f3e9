//! The one-hash load-balancing table: `m` slots split into buckets of `b`
//! consecutive slots, a single hash picks the bucket, and the pointer is the
//! slot's index inside it. Pointers are exactly `ceil(log2 b)` bits wide.
//! Allocation fails iff the hashed bucket is full; the point of the bucket
//! size formula is to make that rare at load `1 - delta`.

use crate::bits;
use crate::hashing::{hash_to_range, HashSeed};
use crate::table::{digest_words, DerefTable, Error, Result, SlotIndex, TableStats, TinyPointer};

/// Fixed-size buckets over a flat occupancy bitmap, with a per-bucket
/// "lowest possibly-free slot" hint so allocation does not rescan the
/// occupied prefix. Invariant: no free slot below a bucket's hint.
#[derive(Debug, Clone)]
pub(crate) struct BucketArray {
    num_buckets: usize,
    bucket_size: usize,
    words: Vec<u64>,
    hints: Vec<u32>,
    live: usize,
}

impl BucketArray {
    pub fn new(num_buckets: usize, bucket_size: usize) -> BucketArray {
        BucketArray {
            num_buckets,
            bucket_size,
            words: vec![0; bits::words_for_bits(num_buckets * bucket_size).max(1)],
            hints: vec![0; num_buckets],
            live: 0,
        }
    }

    /// Permanently occupy all slots with global index `>= limit`; they are
    /// padding, not store slots, and never count as live.
    pub fn mark_phantoms_from(&mut self, limit: usize) {
        for pos in limit..self.num_buckets * self.bucket_size {
            bits::set_bit(&mut self.words, pos);
        }
    }

    /// Lowest free slot of `bucket`, marked occupied; `None` if full.
    #[inline]
    pub fn try_alloc(&mut self, bucket: usize) -> Option<u32> {
        let base = bucket * self.bucket_size;
        let from = base + self.hints[bucket] as usize;
        match bits::find_zero_in_range(&self.words, from, base + self.bucket_size) {
            Some(pos) => {
                bits::set_bit(&mut self.words, pos);
                let slot = (pos - base) as u32;
                self.hints[bucket] = slot + 1;
                self.live += 1;
                Some(slot)
            }
            None => {
                self.hints[bucket] = self.bucket_size as u32;
                None
            }
        }
    }

    #[inline]
    pub fn free_slot(&mut self, bucket: usize, slot: usize) {
        let pos = bucket * self.bucket_size + slot;
        debug_assert!(bits::test_bit(&self.words, pos), "freeing an empty slot");
        bits::clear_bit(&mut self.words, pos);
        self.hints[bucket] = self.hints[bucket].min(slot as u32);
        self.live -= 1;
    }

    #[inline]
    pub fn free_slots_in(&self, bucket: usize) -> usize {
        let base = bucket * self.bucket_size;
        self.bucket_size - bits::count_ones_range(&self.words, base, base + self.bucket_size)
    }

    pub fn live(&self) -> usize {
        self.live
    }

    pub fn metadata_bits(&self) -> usize {
        64 * self.words.len() + 32 * self.hints.len()
    }

    pub fn digest(&self, seed: u64) -> u64 {
        digest_words(seed ^ self.live as u64, &self.words)
    }
}

/// Bucket size for failure parameter `delta`, before clamping:
/// `ceil(4 * delta^-2 * max(1, log2(1/delta)))`.
pub fn bucket_size_for(delta: f64) -> usize {
    let inv = 1.0 / delta;
    (4.0 * inv * inv * inv.log2().max(1.0)).ceil() as usize
}

/// Bucket geometry covering at least `m_min` slots with buckets sized for
/// `delta`: the bucket count is rounded to divide `m_min` as evenly as
/// possible, then the bucket size is rounded up so the table has no short
/// bucket. The product may exceed `m_min` by at most `num_buckets - 1`.
pub(crate) fn rounded_geometry(m_min: usize, delta: f64) -> (usize, usize) {
    let b = bucket_size_for(delta).clamp(8, m_min.max(8));
    let num_buckets = ((m_min as f64 / b as f64).round() as usize).max(1);
    (num_buckets, m_min.div_ceil(num_buckets))
}

#[derive(Debug, Clone)]
pub struct LoadBalancingTable {
    m: usize,
    bucket_size: usize,
    num_buckets: usize,
    ptr_width: u8,
    occ: BucketArray,
    seed: HashSeed,
    stats: TableStats,
}

impl LoadBalancingTable {
    /// Table over `m >= 8` slots tuned for failure parameter `delta`.
    ///
    /// The bucket size is `clamp(ceil(4 * delta^-2 * max(1, log2 delta^-1)), 8, m)`
    /// and the last of the `ceil(m / b)` buckets may be short; its slots at
    /// index `>= m` are permanently marked occupied.
    pub fn new(m: usize, delta: f64, seed: HashSeed) -> Result<LoadBalancingTable> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidParams(format!("delta = {delta} not in (0, 1)")));
        }
        if m < 8 {
            return Err(Error::InvalidParams(format!("m = {m} below the minimum bucket size")));
        }
        let b = bucket_size_for(delta).clamp(8, m);
        let num_buckets = m.div_ceil(b);
        let mut occ = BucketArray::new(num_buckets, b);
        occ.mark_phantoms_from(m);
        Ok(LoadBalancingTable {
            m,
            bucket_size: b,
            num_buckets,
            ptr_width: crate::bitcodec::ceil_log2(b) as u8,
            occ,
            seed,
            stats: TableStats::new(),
        })
    }

    /// Table with an explicit geometry: `num_buckets` buckets of
    /// `bucket_size` slots, `m = num_buckets * bucket_size`, no phantom
    /// slots. Compositions use this to pick bucket counts that divide the
    /// store evenly.
    pub fn with_geometry(
        num_buckets: usize,
        bucket_size: usize,
        seed: HashSeed,
    ) -> Result<LoadBalancingTable> {
        if num_buckets == 0 || bucket_size == 0 {
            return Err(Error::InvalidParams("empty bucket geometry".into()));
        }
        Ok(LoadBalancingTable {
            m: num_buckets * bucket_size,
            bucket_size,
            num_buckets,
            ptr_width: crate::bitcodec::ceil_log2(bucket_size) as u8,
            occ: BucketArray::new(num_buckets, bucket_size),
            seed,
            stats: TableStats::new(),
        })
    }

    pub fn bucket_size(&self) -> usize {
        self.bucket_size
    }

    pub fn num_buckets(&self) -> usize {
        self.num_buckets
    }

    /// Width of every pointer this table returns, `ceil(log2 b)` bits.
    pub fn pointer_width(&self) -> u8 {
        self.ptr_width
    }

    pub fn live(&self) -> usize {
        self.occ.live()
    }

    #[inline]
    pub(crate) fn bucket_of(&self, key: u64) -> usize {
        hash_to_range(self.seed, key, self.num_buckets as u64) as usize
    }
}

impl DerefTable for LoadBalancingTable {
    fn capacity(&self) -> usize {
        self.m
    }

    fn allocate(&mut self, key: u64) -> Option<TinyPointer> {
        let bucket = self.bucket_of(key);
        match self.occ.try_alloc(bucket) {
            Some(slot) => {
                let ptr = TinyPointer::from_bits(slot as u64, self.ptr_width);
                self.stats.record_success(ptr.len());
                Some(ptr)
            }
            None => {
                self.stats.record_failure();
                None
            }
        }
    }

    fn dereference(&self, key: u64, ptr: TinyPointer) -> SlotIndex {
        let slot = self.bucket_of(key) * self.bucket_size + ptr.value() as usize;
        SlotIndex(slot.min(self.m - 1))
    }

    fn free(&mut self, key: u64, ptr: TinyPointer) {
        let bucket = self.bucket_of(key);
        let slot = (ptr.value() as usize).min(self.bucket_size - 1);
        self.occ.free_slot(bucket, slot);
        self.stats.record_free();
    }

    fn stats(&self) -> &TableStats {
        &self.stats
    }

    fn metadata_bits(&self) -> usize {
        self.occ.metadata_bits() + 64 * (self.stats.pointer_bit_histogram.len() + 5) + 4 * 64
    }

    fn state_digest(&self) -> u64 {
        self.occ.digest(self.stats.allocations ^ self.stats.frees.rotate_left(32))
    }
}
