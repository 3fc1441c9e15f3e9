//! Shared contract for all dereference tables: the pointer and slot types,
//! per-table statistics, the table trait, and the crate error enum.
//!
//! A dereference table over `n` slots supports `Allocate(key) -> pointer`,
//! `Dereference(key, pointer) -> slot` and `Free(key, pointer)`. The deal:
//!
//! * While a key is live, dereferencing its pointer yields a slot no other
//!   live key maps to.
//! * `Dereference` is a pure function of `(key, pointer, seeds, n)`. It never
//!   inspects occupancy, so it stays valid (and cheap) concurrently with
//!   other keys' traffic.
//! * Invalid `(key, pointer)` pairs still yield *some* in-range slot; they
//!   are never an error. Callers who need detection keep their own records.
//! * `Allocate` may fail; failure is an ordinary return value (`None`).

use serde::Serialize;

/// A pointer of up to 64 bits. The bit string reads front to back; the first
/// bit pushed is the most significant of `bits`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct TinyPointer {
    bits: u64,
    len: u8,
}

impl TinyPointer {
    pub const EMPTY: TinyPointer = TinyPointer { bits: 0, len: 0 };

    /// Pointer with the given integer value in exactly `len` bits.
    #[inline]
    pub fn from_bits(bits: u64, len: u8) -> TinyPointer {
        assert!(len <= 64);
        let bits = if len == 64 { bits } else { bits & ((1u64 << len) - 1) };
        TinyPointer { bits, len }
    }

    #[inline]
    pub fn len(&self) -> u8 {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Integer value of the whole bit string.
    #[inline]
    pub fn value(&self) -> u64 {
        self.bits
    }

    /// Append `width` bits (the low bits of `value`) at the back.
    #[inline]
    pub fn push_back(&mut self, value: u64, width: u8) {
        debug_assert!(self.len + width <= 64, "pointer overflow");
        if width == 0 {
            return;
        }
        let mask = if width == 64 { u64::MAX } else { (1u64 << width) - 1 };
        self.bits = (self.bits << width) | (value & mask);
        self.len += width;
    }

    /// Zero-pad at the back until the pointer is `len` bits long.
    #[inline]
    pub fn pad_to(&mut self, len: u8) {
        debug_assert!(len >= self.len);
        self.push_back(0, len - self.len);
    }

    /// Position of this pointer in the enumeration of all bit strings by
    /// length, then lexicographically: `idx(p) = 2^len + value - 1`.
    /// The empty string maps to 0, "0" to 1, "1" to 2, "00" to 3, ...
    #[inline]
    pub fn index(&self) -> u64 {
        if self.len >= 64 {
            return u64::MAX; // saturate; real pointers stay far below this
        }
        (1u64 << self.len) + self.bits - 1
    }

    pub fn reader(&self) -> PointerReader {
        PointerReader { ptr: *self, pos: 0 }
    }
}

impl std::fmt::Display for TinyPointer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for i in (0..self.len).rev() {
            write!(f, "{}", self.bits >> i & 1)?;
        }
        Ok(())
    }
}

/// Front-to-back cursor over a pointer's bits.
///
/// The `or_zero` readers treat bits past the end as zeros. Decoders use them
/// so that malformed pointers still decode to *something* deterministic, per
/// the dereference contract.
#[derive(Debug, Clone)]
pub struct PointerReader {
    ptr: TinyPointer,
    pos: u8,
}

impl PointerReader {
    #[inline]
    pub fn remaining(&self) -> u8 {
        self.ptr.len - self.pos
    }

    #[inline]
    pub fn read_bit(&mut self) -> Result<u64> {
        if self.pos >= self.ptr.len {
            return Err(Error::Truncated);
        }
        let bit = self.ptr.bits >> (self.ptr.len - self.pos - 1) & 1;
        self.pos += 1;
        Ok(bit)
    }

    #[inline]
    pub fn read_bit_or_zero(&mut self) -> u64 {
        self.read_bit().unwrap_or(0)
    }

    pub fn read_bits(&mut self, width: u8) -> Result<u64> {
        if self.remaining() < width {
            return Err(Error::Truncated);
        }
        let mut v = 0u64;
        for _ in 0..width {
            v = (v << 1) | self.read_bit()?;
        }
        Ok(v)
    }

    /// Read `width` bits, padding with zeros once the pointer runs out.
    pub fn read_bits_or_zero(&mut self, width: u8) -> u64 {
        let have = self.remaining().min(width);
        let v = self.read_bits(have).unwrap_or(0);
        v << (width - have)
    }
}

/// Index of a slot in a table's store, always `< capacity` of the table that
/// produced it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct SlotIndex(pub usize);

impl std::fmt::Display for SlotIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

/// Running operation counts for one table.
///
/// `live == allocations - failures - frees` at all times, and the histogram
/// sums to `allocations - failures` (frees do not un-count a pointer).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct TableStats {
    pub allocations: u64,
    pub failures: u64,
    pub frees: u64,
    pub live: u64,
    pub sum_pointer_bits: u64,
    /// `pointer_bit_histogram[len]` = successful allocations returning a
    /// `len`-bit pointer, `len` in `0..=64`.
    pub pointer_bit_histogram: Vec<u64>,
}

impl TableStats {
    pub fn new() -> TableStats {
        TableStats {
            pointer_bit_histogram: vec![0; 65],
            ..TableStats::default()
        }
    }

    #[inline]
    pub fn record_success(&mut self, ptr_len: u8) {
        self.allocations += 1;
        self.live += 1;
        self.sum_pointer_bits += ptr_len as u64;
        self.pointer_bit_histogram[ptr_len as usize] += 1;
    }

    #[inline]
    pub fn record_failure(&mut self) {
        self.allocations += 1;
        self.failures += 1;
    }

    #[inline]
    pub fn record_free(&mut self) {
        self.frees += 1;
        self.live -= 1;
    }

    /// Mean bits per successful allocation over the table's whole history.
    pub fn mean_pointer_bits(&self) -> f64 {
        let ok = self.allocations - self.failures;
        if ok == 0 {
            0.0
        } else {
            self.sum_pointer_bits as f64 / ok as f64
        }
    }

    pub fn check_invariants(&self) {
        assert_eq!(self.live, self.allocations - self.failures - self.frees);
        let hist: u64 = self.pointer_bit_histogram.iter().sum();
        assert_eq!(hist, self.allocations - self.failures);
    }
}

/// The dereference-table contract shared by all table types.
pub trait DerefTable {
    /// Number of slots in the store this table manages.
    fn capacity(&self) -> usize;

    /// Try to allocate a slot for `key`; `key` must not be live. `None`
    /// means the allocation failed (the key holds nothing, retry later).
    fn allocate(&mut self, key: u64) -> Option<TinyPointer>;

    /// Map `(key, ptr)` to a slot. Pure in `(key, ptr, seeds, capacity)`;
    /// garbage pairs map to an arbitrary in-range slot.
    fn dereference(&self, key: u64, ptr: TinyPointer) -> SlotIndex;

    /// Release a live `(key, ptr)` pair. Calling this with a pair that was
    /// never returned by `allocate` corrupts occupancy, exactly as storing
    /// through a dangling pointer would.
    fn free(&mut self, key: u64, ptr: TinyPointer);

    fn stats(&self) -> &TableStats;

    /// Bits of metadata this table keeps besides the store itself
    /// (occupancy bitmaps, counters, stats). Bounded by a small constant
    /// times `capacity()` for every table in this crate.
    fn metadata_bits(&self) -> usize;

    /// Digest of all mutable state; used by tests to prove `dereference`
    /// writes nothing.
    fn state_digest(&self) -> u64;
}

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("bit string ended early")]
    Truncated,
    #[error("chunk {chunk} payload full ({capacity_bits} bits)")]
    ChunkOverflow { chunk: usize, capacity_bits: usize },
    #[error("rank {rank} out of range: bitmap holds {ones} set bits")]
    RankOutOfRange { rank: usize, ones: usize },
    #[error("dictionary full")]
    CapacityExceeded,
    #[error("table allocation failed")]
    AllocationFailed,
    #[error("workload line {line}: {msg}")]
    WorkloadParse { line: usize, msg: String },
}

pub(crate) fn digest_words(seed: u64, words: &[u64]) -> u64 {
    let mut h = crate::hashing::mix64(seed ^ 0x74_61_62_6c_65);
    for &w in words {
        h = crate::hashing::mix64(h ^ w);
    }
    h
}
