//! Variable-length tiny pointers. Keys hash to fixed-capacity containers;
//! inside a container, geometric levels of small bucketed tables absorb
//! values, each level backed by an overflow array whose use is gated by the
//! counters `L[i]` (live values at levels >= i). Almost every value lands at
//! level 0 with a short pointer; the pointer grows only as the walk descends,
//! which is what makes the expected length constant.
//!
//! `WrappedVariableTable` is the production composition: a wide fixed-width
//! primary table in front, this container structure catching its spill.

use crate::bitcodec::{ceil_log2, gamma_decode, gamma_encode};
use crate::bits;
use crate::hashing::{hash_stream, hash_to_range, HashSeed};
use crate::lbt::{rounded_geometry, LoadBalancingTable};
use crate::table::{
    digest_words, DerefTable, Error, Result, SlotIndex, TableStats, TinyPointer,
};

/// Slots per bucket at every level.
pub const BUCKET_SLOTS: usize = 8;

/// Default first level handled by the optional tail lookup table.
pub const TAIL_FIRST_LEVEL: usize = 3;

/// Largest packed tail state the lookup table will precompute (2^24 entries).
pub const TAIL_STATE_LIMIT: u32 = 24;

/// Static geometry of one container: capacity `s` (a power of two), levels
/// `i in [0, log2 s)` each holding `s >> i` buckets of [`BUCKET_SLOTS`] slots
/// plus an overflow array of `s >> i` slots. Layout within a container is
/// level 0 buckets, level 0 overflow, level 1 buckets, level 1 overflow, ...
/// Containers are word-aligned in the global bitmap, so a container spans
/// `span` slot indices of which the last few may be unaddressable padding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContainerShape {
    s: usize,
    log2_s: u32,
    num_levels: usize,
    lbt_off: Vec<usize>,
    over_off: Vec<usize>,
    slots_per_container: usize,
    words_per_container: usize,
    span: usize,
}

impl ContainerShape {
    /// Shape for a table meant to hold about `n_hint` keys:
    /// `s = next power of two >= 4 * ceil(log2 n_hint)`.
    pub fn for_capacity_hint(n_hint: usize) -> ContainerShape {
        let lg = ceil_log2(n_hint.max(2)).max(1) as usize;
        ContainerShape::with_s((4 * lg).next_power_of_two())
    }

    /// Shape with an explicit container capacity `s` (power of two, >= 4).
    pub fn with_s(s: usize) -> ContainerShape {
        assert!(s >= 4 && s.is_power_of_two(), "container capacity {s} invalid");
        let log2_s = s.trailing_zeros();
        let num_levels = log2_s as usize;
        let mut lbt_off = Vec::with_capacity(num_levels);
        let mut over_off = Vec::with_capacity(num_levels);
        let mut off = 0;
        for i in 0..num_levels {
            let s_i = s >> i;
            lbt_off.push(off);
            off += s_i * BUCKET_SLOTS;
            over_off.push(off);
            off += s_i;
        }
        debug_assert_eq!(off, (BUCKET_SLOTS + 1) * (2 * s - 2));
        let words_per_container = bits::words_for_bits(off).max(1);
        ContainerShape {
            s,
            log2_s,
            num_levels,
            lbt_off,
            over_off,
            slots_per_container: off,
            words_per_container,
            span: words_per_container * 64,
        }
    }

    pub fn capacity(&self) -> usize {
        self.s
    }

    pub fn num_levels(&self) -> usize {
        self.num_levels
    }

    /// Buckets (and overflow slots) at level `i`.
    pub fn buckets_at(&self, i: usize) -> usize {
        self.s >> i
    }

    pub fn slots_per_container(&self) -> usize {
        self.slots_per_container
    }

    /// Slot indices one container occupies, including word-alignment padding.
    pub fn span(&self) -> usize {
        self.span
    }
}

/// A decoded pointer: where in its container a value lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarPath {
    /// Slot `slot` of the key's hashed bucket at `level`.
    Bucket { level: usize, slot: u64 },
    /// Slot `slot` of the overflow array at `level`.
    Overflow { level: usize, slot: u64 },
}

/// What the tail lookup table answers for a packed state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailDecision {
    Bucket { level: usize, slot: u64 },
    Overflow { level: usize },
    /// No level could place the value. Unreachable from states that respect
    /// the container invariants; kept so the table is total.
    Fail,
}

/// Precomputed placement decisions for the deep levels of a container
/// (the four-Russians trick): the occupancy of every bucket at levels
/// `>= first_level`, the overflow gates, and the key's bucket choices pack
/// into a small integer indexing this table.
pub struct TailLookupTable {
    first_level: usize,
    state_bits: u32,
    entries: Vec<u8>,
}

const TD_OVERFLOW: u8 = 0x80;
const TD_FAIL: u8 = 0x40;

impl TailLookupTable {
    /// Bits needed to pack the tail state of `shape` from level `d` on:
    /// per level, 8 bits of occupancy per bucket, one overflow-gate bit, and
    /// the key's bucket index.
    pub fn state_bits_for(shape: &ContainerShape, d: usize) -> u32 {
        let mut total = 0;
        for i in d..shape.num_levels {
            let s_i = shape.buckets_at(i);
            total += 8 * s_i as u32 + 1 + ceil_log2(s_i);
        }
        total
    }

    /// Build the table, or `None` when the packed state exceeds
    /// [`TAIL_STATE_LIMIT`] bits (the precomputation would not pay off).
    pub fn build(shape: &ContainerShape, first_level: usize) -> Option<TailLookupTable> {
        if first_level >= shape.num_levels {
            return None;
        }
        let state_bits = Self::state_bits_for(shape, first_level);
        if state_bits == 0 || state_bits > TAIL_STATE_LIMIT {
            return None;
        }
        let entries = (0..1u64 << state_bits)
            .map(|state| encode_decision(simulate_tail(shape, first_level, state), first_level))
            .collect();
        Some(TailLookupTable { first_level, state_bits, entries })
    }

    pub fn first_level(&self) -> usize {
        self.first_level
    }

    pub fn state_bits(&self) -> u32 {
        self.state_bits
    }

    pub fn decide(&self, state: u64) -> TailDecision {
        let e = self.entries[state as usize];
        if e & TD_FAIL != 0 {
            return TailDecision::Fail;
        }
        let level = self.first_level + ((e >> 4) & 0x3) as usize;
        if e & TD_OVERFLOW != 0 {
            TailDecision::Overflow { level }
        } else {
            TailDecision::Bucket { level, slot: (e & 0xf) as u64 }
        }
    }
}

fn encode_decision(d: TailDecision, first_level: usize) -> u8 {
    match d {
        TailDecision::Bucket { level, slot } => (((level - first_level) as u8) << 4) | slot as u8,
        TailDecision::Overflow { level } => TD_OVERFLOW | (((level - first_level) as u8) << 4),
        TailDecision::Fail => TD_FAIL,
    }
}

/// The allocation walk over a packed tail state, defining the semantics the
/// lookup table is built from: per level, take the lowest free slot of the
/// key's bucket; otherwise use this level's overflow array when the next
/// level is at its deterministic cap; otherwise descend.
fn simulate_tail(shape: &ContainerShape, d: usize, state: u64) -> TailDecision {
    let mut off = 0;
    let mut occ: Vec<Vec<u8>> = Vec::new();
    for i in d..shape.num_levels {
        let s_i = shape.buckets_at(i);
        let mut level = Vec::with_capacity(s_i);
        for _ in 0..s_i {
            level.push(((state >> off) & 0xff) as u8);
            off += 8;
        }
        occ.push(level);
    }
    let mut gate = Vec::new();
    for _ in d..shape.num_levels {
        gate.push((state >> off) & 1 == 1);
        off += 1;
    }
    let mut chosen = Vec::new();
    for i in d..shape.num_levels {
        let w = ceil_log2(shape.buckets_at(i));
        chosen.push(((state >> off) & bits::low_mask(w as usize)) as usize);
        off += w as usize;
    }
    for i in d..shape.num_levels {
        let t = i - d;
        let byte = occ[t][chosen[t].min(shape.buckets_at(i) - 1)];
        if byte != 0xff {
            return TailDecision::Bucket { level: i, slot: (!byte).trailing_zeros() as u64 };
        }
        if gate[t] {
            return TailDecision::Overflow { level: i };
        }
    }
    TailDecision::Fail
}

/// The container-based dereference table. Capacity is measured in keys
/// (`s` per container); the slot universe is the flat occupancy bitmap.
pub struct VariableTable {
    shape: ContainerShape,
    num_containers: usize,
    words: Vec<u64>,
    /// `num_containers` groups of `log2_s + 1` counters; entry `i` of a group
    /// is `L[i]`, the live values of that container at levels >= i.
    counters: Vec<u16>,
    container_seed: HashSeed,
    level_seed: HashSeed,
    tail: Option<TailLookupTable>,
    stats: TableStats,
    capacity_slots: usize,
}

impl VariableTable {
    /// Table for up to `n_keys` keys: `max(1, ceil(n / ceil(log2 n)))`
    /// containers of capacity `s = next power of two >= 4 * ceil(log2 n)`.
    pub fn new(n_keys: usize, seed: HashSeed) -> Result<VariableTable> {
        if n_keys == 0 {
            return Err(Error::InvalidParams("capacity 0".into()));
        }
        let lg = (ceil_log2(n_keys.max(2)) as usize).max(1);
        let num_containers = n_keys.div_ceil(lg).max(1);
        Ok(Self::from_parts(ContainerShape::for_capacity_hint(n_keys), num_containers, seed))
    }

    /// Table fitted into `budget_slots` slot indices, shaped as if it were
    /// the spill structure of a table of `n_hint` slots. The container
    /// capacity is halved until one container fits the budget; the container
    /// count then fills the rest of it.
    pub fn with_budget(budget_slots: usize, n_hint: usize, seed: HashSeed) -> Result<VariableTable> {
        let mut shape = ContainerShape::for_capacity_hint(n_hint);
        while shape.span > budget_slots && shape.s > 4 {
            shape = ContainerShape::with_s(shape.s / 2);
        }
        if shape.span > budget_slots {
            return Err(Error::InvalidParams(format!(
                "budget of {budget_slots} slots below the smallest container ({})",
                shape.span
            )));
        }
        let num_containers = (budget_slots / shape.span).max(1);
        Ok(Self::from_parts(shape, num_containers, seed))
    }

    fn from_parts(shape: ContainerShape, num_containers: usize, seed: HashSeed) -> VariableTable {
        let words = vec![0u64; num_containers * shape.words_per_container];
        let counters = vec![0u16; num_containers * (shape.num_levels + 1)];
        let capacity_slots = num_containers * shape.span;
        VariableTable {
            shape,
            num_containers,
            words,
            counters,
            container_seed: seed.derive(0x1c),
            level_seed: seed.derive(0x2c),
            tail: None,
            stats: TableStats::new(),
            capacity_slots,
        }
    }

    /// Switch allocation below [`TAIL_FIRST_LEVEL`] to the precomputed
    /// lookup table. Returns false when this shape's tail state is too wide
    /// to precompute; the iterative walk is then kept.
    pub fn enable_tail_lookup(&mut self) -> bool {
        if self.tail.is_some() {
            return true;
        }
        match TailLookupTable::build(&self.shape, TAIL_FIRST_LEVEL) {
            Some(t) => {
                self.tail = Some(t);
                true
            }
            None => false,
        }
    }

    pub fn shape(&self) -> &ContainerShape {
        &self.shape
    }

    pub fn num_containers(&self) -> usize {
        self.num_containers
    }

    pub fn live(&self) -> u64 {
        self.stats.live
    }

    #[inline]
    fn stride(&self) -> usize {
        self.shape.num_levels + 1
    }

    #[inline]
    pub(crate) fn container_of(&self, key: u64) -> usize {
        hash_to_range(self.container_seed, key, self.num_containers as u64) as usize
    }

    #[inline]
    fn bucket_at(&self, key: u64, level: usize) -> usize {
        hash_stream(self.level_seed, key, level as u64, self.shape.buckets_at(level) as u64)
            as usize
    }

    fn encode_path(&self, path: VarPath) -> TinyPointer {
        let mut p = TinyPointer::EMPTY;
        match path {
            VarPath::Bucket { level, slot } => {
                p.push_back(0, 1);
                gamma_encode(&mut p, level as u64 + 1).expect("level fits");
                p.push_back(slot, 3);
            }
            VarPath::Overflow { level, slot } => {
                let back = self.shape.num_levels - 1 - level;
                p.push_back(1, 1);
                gamma_encode(&mut p, back as u64 + 1).expect("level fits");
                p.push_back(slot, back as u8 + 1);
            }
        }
        p
    }

    /// Decode a pointer into a container location. Total: malformed input is
    /// clamped onto some representable path rather than rejected.
    pub fn decode_path(&self, ptr: TinyPointer) -> VarPath {
        let mut r = ptr.reader();
        let tag = r.read_bit_or_zero();
        let v = gamma_decode(&mut r).unwrap_or(1).max(1);
        if tag == 0 {
            let level = ((v - 1) as usize).min(self.shape.num_levels - 1);
            VarPath::Bucket { level, slot: r.read_bits_or_zero(3) }
        } else {
            let back = ((v - 1) as usize).min(self.shape.num_levels - 1);
            let slot = r.read_bits_or_zero(back as u8 + 1);
            VarPath::Overflow { level: self.shape.num_levels - 1 - back, slot }
        }
    }

    fn position(&self, key: u64, container: usize, path: VarPath) -> usize {
        let base = container * self.shape.span;
        match path {
            VarPath::Bucket { level, slot } => {
                base + self.shape.lbt_off[level]
                    + self.bucket_at(key, level) * BUCKET_SLOTS
                    + slot as usize
            }
            VarPath::Overflow { level, slot } => base + self.shape.over_off[level] + slot as usize,
        }
    }

    /// Bump `L[level]` after the walk reaches `level`; `L[i] <= s_i` is the
    /// structure's deterministic guarantee, so it is asserted, not checked.
    #[inline]
    fn bump(&mut self, bc: usize, level: usize) {
        self.counters[bc + level] += 1;
        debug_assert!(
            (self.counters[bc + level] as usize) <= self.shape.s >> level,
            "L[{level}] exceeded its level capacity"
        );
    }

    fn place(&mut self, key: u64, container: usize, path: VarPath) -> TinyPointer {
        let pos = self.position(key, container, path);
        debug_assert!(!bits::test_bit(&self.words, pos), "slot already occupied");
        bits::set_bit(&mut self.words, pos);
        if let VarPath::Overflow { level, .. } = path {
            let ob = container * self.shape.span + self.shape.over_off[level];
            debug_assert!(
                bits::count_ones_range(&self.words, ob, ob + self.shape.buckets_at(level))
                    <= self.shape.buckets_at(level),
                "overflow array above its cap"
            );
        }
        let ptr = self.encode_path(path);
        self.stats.record_success(ptr.len());
        ptr
    }

    fn allocate_from(&mut self, key: u64, container: usize, first: usize) -> TinyPointer {
        let bc = container * self.stride();
        let base = container * self.shape.span;
        for i in first..self.shape.num_levels {
            if self.tail.is_some() && i == self.tail.as_ref().unwrap().first_level() {
                return self.allocate_via_tail(key, container);
            }
            self.bump(bc, i);
            let s_i = self.shape.buckets_at(i);
            let bpos = base + self.shape.lbt_off[i] + self.bucket_at(key, i) * BUCKET_SLOTS;
            if let Some(pos) = bits::find_zero_in_range(&self.words, bpos, bpos + BUCKET_SLOTS) {
                return self.place(key, container, VarPath::Bucket {
                    level: i,
                    slot: (pos - bpos) as u64,
                });
            }
            if (self.counters[bc + i + 1] as usize) >= s_i / 2 {
                let ob = base + self.shape.over_off[i];
                let pos = bits::find_zero_in_range(&self.words, ob, ob + s_i)
                    .expect("overflow array fills only past its level cap");
                return self.place(key, container, VarPath::Overflow {
                    level: i,
                    slot: (pos - ob) as u64,
                });
            }
        }
        unreachable!("the deepest level holds at most s_last values in s_last buckets")
    }

    fn allocate_via_tail(&mut self, key: u64, container: usize) -> TinyPointer {
        let state = self.pack_tail_state(key, container);
        let first = self.tail.as_ref().unwrap().first_level();
        let decision = self.tail.as_ref().unwrap().decide(state);
        let bc = container * self.stride();
        match decision {
            TailDecision::Bucket { level, slot } => {
                for lv in first..=level {
                    self.bump(bc, lv);
                }
                self.place(key, container, VarPath::Bucket { level, slot })
            }
            TailDecision::Overflow { level } => {
                for lv in first..=level {
                    self.bump(bc, lv);
                }
                let ob = container * self.shape.span + self.shape.over_off[level];
                let pos =
                    bits::find_zero_in_range(&self.words, ob, ob + self.shape.buckets_at(level))
                        .expect("overflow array fills only past its level cap");
                self.place(key, container, VarPath::Overflow {
                    level,
                    slot: (pos - ob) as u64,
                })
            }
            TailDecision::Fail => unreachable!("valid container states always place"),
        }
    }

    /// Pack the tail state the lookup table indexes on: bucket occupancy
    /// bytes for levels >= first, then the overflow gates, then the key's
    /// bucket choices. Bit order matches [`simulate_tail`].
    fn pack_tail_state(&self, key: u64, container: usize) -> u64 {
        let first = self.tail.as_ref().unwrap().first_level();
        let bc = container * self.stride();
        let base = container * self.shape.span;
        let mut state = 0u64;
        let mut off = 0;
        for i in first..self.shape.num_levels {
            let s_i = self.shape.buckets_at(i);
            for b in 0..s_i {
                let byte = bits::read_bits(
                    &self.words,
                    base + self.shape.lbt_off[i] + b * BUCKET_SLOTS,
                    8,
                );
                state |= byte << off;
                off += 8;
            }
        }
        for i in first..self.shape.num_levels {
            let open = (self.counters[bc + i + 1] as usize) >= self.shape.buckets_at(i) / 2;
            state |= (open as u64) << off;
            off += 1;
        }
        for i in first..self.shape.num_levels {
            let w = ceil_log2(self.shape.buckets_at(i));
            state |= (self.bucket_at(key, i) as u64) << off;
            off += w as usize;
        }
        state
    }

    /// `L[i]` of `container` recomputed by scanning occupancy, for tests.
    pub fn scan_counters(&self, container: usize) -> Vec<u16> {
        let base = container * self.shape.span;
        let mut per_level = vec![0u16; self.shape.num_levels + 1];
        for i in 0..self.shape.num_levels {
            let s_i = self.shape.buckets_at(i);
            let lbt = base + self.shape.lbt_off[i];
            let over = base + self.shape.over_off[i];
            per_level[i] = (bits::count_ones_range(&self.words, lbt, lbt + s_i * BUCKET_SLOTS)
                + bits::count_ones_range(&self.words, over, over + s_i))
                as u16;
        }
        for i in (0..self.shape.num_levels).rev() {
            per_level[i] += per_level[i + 1];
        }
        per_level
    }

    #[cfg(test)]
    pub(crate) fn counters_of(&self, container: usize) -> &[u16] {
        &self.counters[container * self.stride()..(container + 1) * self.stride()]
    }
}

impl DerefTable for VariableTable {
    fn capacity(&self) -> usize {
        self.capacity_slots
    }

    fn allocate(&mut self, key: u64) -> Option<TinyPointer> {
        let container = self.container_of(key);
        let bc = container * self.stride();
        if (self.counters[bc] as usize) >= self.shape.s {
            self.stats.record_failure();
            return None;
        }
        Some(self.allocate_from(key, container, 0))
    }

    fn dereference(&self, key: u64, ptr: TinyPointer) -> SlotIndex {
        let container = self.container_of(key);
        let path = self.decode_path(ptr);
        SlotIndex(self.position(key, container, path))
    }

    fn free(&mut self, key: u64, ptr: TinyPointer) {
        let container = self.container_of(key);
        let path = self.decode_path(ptr);
        let pos = self.position(key, container, path);
        debug_assert!(bits::test_bit(&self.words, pos), "freeing an empty slot");
        bits::clear_bit(&mut self.words, pos);
        let level = match path {
            VarPath::Bucket { level, .. } | VarPath::Overflow { level, .. } => level,
        };
        let bc = container * self.stride();
        for lv in 0..=level {
            debug_assert!(self.counters[bc + lv] > 0, "free below zero at level {lv}");
            self.counters[bc + lv] = self.counters[bc + lv].saturating_sub(1);
        }
        self.stats.record_free();
    }

    fn stats(&self) -> &TableStats {
        &self.stats
    }

    fn metadata_bits(&self) -> usize {
        64 * self.words.len()
            + 16 * self.counters.len()
            + 64 * (self.stats.pointer_bit_histogram.len() + 5)
            + 8 * 64
    }

    fn state_digest(&self) -> u64 {
        let mut h = digest_words(self.stats.allocations ^ self.stats.frees, &self.words);
        for &c in &self.counters {
            h = crate::hashing::mix64(h ^ c as u64);
        }
        h
    }
}

/// The fronted composition: a fixed-width bucketed primary table over most
/// of the store, with this module's container structure as the spill path.
/// Pointers carry one selector bit and are otherwise whatever the side that
/// placed them produced, so their length is variable but short on average.
pub struct WrappedVariableTable {
    n_slots: usize,
    delta: f64,
    primary: LoadBalancingTable,
    m1: usize,
    secondary: Option<VariableTable>,
    stats: TableStats,
}

impl WrappedVariableTable {
    pub fn new(n_slots: usize, delta: f64, seed: HashSeed) -> Result<WrappedVariableTable> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidParams(format!("delta = {delta} not in (0, 1)")));
        }
        if n_slots < 16 {
            return Err(Error::InvalidParams(format!("{n_slots} slots is below the minimum 16")));
        }
        let m1_target = ((1.0 - delta / 2.0) * n_slots as f64).ceil() as usize;
        let (nb, bs) = rounded_geometry(m1_target, delta / 2.0);
        let primary = LoadBalancingTable::with_geometry(nb, bs, seed.derive(1))?;
        let m1 = primary.capacity();
        let secondary = if m1 < n_slots {
            VariableTable::with_budget(n_slots - m1, n_slots, seed.derive(2)).ok()
        } else {
            None
        };
        Ok(WrappedVariableTable { n_slots, delta, primary, m1, secondary, stats: TableStats::new() })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Length of every primary-side pointer (selector bit included).
    pub fn primary_width(&self) -> u8 {
        1 + self.primary.pointer_width()
    }

    pub fn primary(&self) -> &LoadBalancingTable {
        &self.primary
    }

    pub fn secondary(&self) -> Option<&VariableTable> {
        self.secondary.as_ref()
    }

    pub fn secondary_live(&self) -> u64 {
        self.secondary.as_ref().map_or(0, |s| s.live())
    }

    fn split(&self, ptr: TinyPointer) -> (u64, TinyPointer) {
        let mut r = ptr.reader();
        let selector = r.read_bit_or_zero();
        let sub_len = ptr.len().saturating_sub(1);
        (selector, TinyPointer::from_bits(ptr.value(), sub_len))
    }
}

impl DerefTable for WrappedVariableTable {
    fn capacity(&self) -> usize {
        self.n_slots
    }

    fn allocate(&mut self, key: u64) -> Option<TinyPointer> {
        if let Some(p) = self.primary.allocate(key) {
            let mut out = TinyPointer::from_bits(0, 1);
            out.push_back(p.value(), p.len());
            self.stats.record_success(out.len());
            return Some(out);
        }
        if let Some(sec) = self.secondary.as_mut() {
            if let Some(p) = sec.allocate(key) {
                let mut out = TinyPointer::from_bits(1, 1);
                out.push_back(p.value(), p.len());
                self.stats.record_success(out.len());
                return Some(out);
            }
        }
        self.stats.record_failure();
        None
    }

    fn dereference(&self, key: u64, ptr: TinyPointer) -> SlotIndex {
        let (selector, sub) = self.split(ptr);
        match (&self.secondary, selector) {
            (Some(sec), 1) => SlotIndex(self.m1 + sec.dereference(key, sub).0),
            _ => self.primary.dereference(key, sub),
        }
    }

    fn free(&mut self, key: u64, ptr: TinyPointer) {
        let (selector, sub) = self.split(ptr);
        match (&mut self.secondary, selector) {
            (Some(sec), 1) => sec.free(key, sub),
            _ => self.primary.free(key, sub),
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
        crate::hashing::mix64(self.primary.state_digest() ^ s.rotate_left(17))
    }
}
