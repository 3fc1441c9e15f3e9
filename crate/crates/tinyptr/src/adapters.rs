//! The two applications built on the tables: a dictionary whose values
//! never move between insert and delete, and a relaxed retrieval structure
//! whose query hint is just a tiny pointer.

use std::collections::HashMap;

use crate::bitcodec::ChunkedPointerArray;
use crate::bits;
use crate::hashing::HashSeed;
use crate::table::{DerefTable, Error, Result, SlotIndex, TinyPointer};
use crate::variable::WrappedVariableTable;

/// Where a dictionary keeps its per-key tiny pointers. Short average
/// pointers pack into chunks; 64-bit values make the packing pointless, so
/// the pointers then sit in a plain array.
enum PointerStore {
    Chunked(ChunkedPointerArray),
    Plain(Vec<TinyPointer>),
}

impl PointerStore {
    fn get(&self, id: usize) -> TinyPointer {
        match self {
            PointerStore::Chunked(c) => c.get(id),
            PointerStore::Plain(v) => v[id],
        }
    }

    fn set(&mut self, id: usize, p: TinyPointer) -> Result<()> {
        match self {
            PointerStore::Chunked(c) => c.set(id, p),
            PointerStore::Plain(v) => {
                v[id] = p;
                Ok(())
            }
        }
    }

    fn clear(&mut self, id: usize) {
        match self {
            PointerStore::Chunked(c) => c.clear(id),
            PointerStore::Plain(v) => v[id] = TinyPointer::EMPTY,
        }
    }
}

/// A fixed-capacity dictionary in which a live key's value never changes
/// its slot. Keys map to tiny pointers (a few bits each); values of `v`
/// bits live in a store of `ceil((1 + 1/v) * m)` slots behind a wrapped
/// variable-size table, so the store runs at load `1 - 1/(v+1)`.
pub struct StableDict {
    m: usize,
    v_bits: u32,
    table: WrappedVariableTable,
    values: Vec<u64>,
    ptrs: PointerStore,
    index: HashMap<u64, u32>,
    free_ids: Vec<u32>,
    next_id: u32,
    live_ptr_bits: u64,
}

impl StableDict {
    pub fn new(m: usize, v_bits: u32, seed: HashSeed) -> Result<StableDict> {
        if !(1..=64).contains(&v_bits) {
            return Err(Error::InvalidParams(format!("value width {v_bits} not in 1..=64")));
        }
        if m < 16 {
            return Err(Error::InvalidParams(format!("capacity {m} below the minimum 16")));
        }
        let slots = m + m.div_ceil(v_bits as usize);
        let delta = 1.0 / (v_bits as f64 + 1.0);
        let table = WrappedVariableTable::new(slots, delta, seed.derive(0xd1c))?;
        let ptrs = if v_bits < 64 {
            PointerStore::Chunked(ChunkedPointerArray::new(
                m,
                table.primary_width() as usize,
                slots,
            )?)
        } else {
            PointerStore::Plain(vec![TinyPointer::EMPTY; m])
        };
        Ok(StableDict {
            m,
            v_bits,
            values: vec![0; bits::words_for_bits(slots * v_bits as usize)],
            table,
            ptrs,
            index: HashMap::new(),
            free_ids: Vec::new(),
            next_id: 0,
            live_ptr_bits: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn value_bits(&self) -> u32 {
        self.v_bits
    }

    /// Slots in the value store, `m + ceil(m / v)`.
    pub fn slot_count(&self) -> usize {
        self.table.capacity()
    }

    pub fn table(&self) -> &WrappedVariableTable {
        &self.table
    }

    /// Mean length of the currently stored per-key pointers.
    pub fn mean_stored_pointer_bits(&self) -> f64 {
        if self.index.is_empty() {
            0.0
        } else {
            self.live_ptr_bits as f64 / self.index.len() as f64
        }
    }

    /// Insert an absent key. The returned slot holds the value until the
    /// key is deleted, and is what every [`get`](Self::get) reports.
    pub fn insert(&mut self, key: u64, value: u64) -> Result<SlotIndex> {
        if self.index.contains_key(&key) {
            return Err(Error::InvalidParams(format!("key {key} already present")));
        }
        if self.index.len() == self.m {
            return Err(Error::CapacityExceeded);
        }
        let p = self.table.allocate(key).ok_or(Error::AllocationFailed)?;
        let slot = self.table.dereference(key, p);
        let id = self.free_ids.pop().unwrap_or_else(|| {
            self.next_id += 1;
            self.next_id - 1
        });
        if let Err(e) = self.ptrs.set(id as usize, p) {
            self.free_ids.push(id);
            self.table.free(key, p);
            return Err(e);
        }
        let v = self.v_bits as usize;
        bits::write_bits(&mut self.values, slot.0 * v, v, value & bits::low_mask(v));
        self.index.insert(key, id);
        self.live_ptr_bits += p.len() as u64;
        Ok(slot)
    }

    pub fn get(&self, key: u64) -> Option<(u64, SlotIndex)> {
        let &id = self.index.get(&key)?;
        let p = self.ptrs.get(id as usize);
        let slot = self.table.dereference(key, p);
        let v = self.v_bits as usize;
        Some((bits::read_bits(&self.values, slot.0 * v, v), slot))
    }

    /// Delete a present key, returning the slot its value occupied.
    pub fn delete(&mut self, key: u64) -> Option<SlotIndex> {
        let id = self.index.remove(&key)?;
        let p = self.ptrs.get(id as usize);
        let slot = self.table.dereference(key, p);
        self.ptrs.clear(id as usize);
        self.free_ids.push(id);
        self.table.free(key, p);
        self.live_ptr_bits -= p.len() as u64;
        Some(slot)
    }
}

/// Retrieval with the lookup hint made explicit: `insert` hands back a tiny
/// pointer, and `query` is only guaranteed the right answer when given the
/// pointer that insert returned. Slots come from a half-loaded wrapped
/// table over `2n` slots; values sit in an ordinary map keyed by slot.
pub struct RelaxedRetrieval {
    n: usize,
    deref: WrappedVariableTable,
    backing: HashMap<usize, u64>,
}

impl RelaxedRetrieval {
    pub fn new(n: usize, seed: HashSeed) -> Result<RelaxedRetrieval> {
        Ok(RelaxedRetrieval {
            n,
            deref: WrappedVariableTable::new(2 * n.max(8), 0.5, seed.derive(0x22))?,
            backing: HashMap::new(),
        })
    }

    pub fn capacity(&self) -> usize {
        self.n
    }

    pub fn live(&self) -> usize {
        self.backing.len()
    }

    pub fn table(&self) -> &WrappedVariableTable {
        &self.deref
    }

    /// The slot universe every retriever lands in.
    pub fn slot_bound(&self) -> usize {
        self.deref.capacity()
    }

    pub fn insert(&mut self, key: u64, value: u64) -> Result<TinyPointer> {
        let p = self.deref.allocate(key).ok_or(Error::AllocationFailed)?;
        let s = self.deref.dereference(key, p).0;
        self.backing.insert(s, value);
        Ok(p)
    }

    /// Pure lookup. With the pointer insert returned this is the stored
    /// value; with any other `(key, ptr)` it is an arbitrary value.
    pub fn query(&self, key: u64, ptr: TinyPointer) -> u64 {
        let s = self.deref.dereference(key, ptr).0;
        self.backing.get(&s).copied().unwrap_or(0)
    }

    pub fn delete(&mut self, key: u64, ptr: TinyPointer) {
        let s = self.deref.dereference(key, ptr).0;
        self.backing.remove(&s);
        self.deref.free(key, ptr);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const SEED: HashSeed = HashSeed(0xad47);

    #[test]
    fn dict_slot_count_follows_value_width() {
        for (v, slots) in [(8, 73_728), (16, 69_632), (64, 66_560)] {
            let d = StableDict::new(1 << 16, v, SEED).unwrap();
            assert_eq!(d.slot_count(), slots, "v = {v}");
        }
    }

    #[test]
    fn dict_roundtrips_values_exactly() {
        let mut d = StableDict::new(256, 16, SEED).unwrap();
        for k in 0..200u64 {
            let value = k.wrapping_mul(0x9e37) & 0xffff;
            let slot = d.insert(k, value).unwrap();
            assert!(slot.0 < d.slot_count());
            let (got, s2) = d.get(k).unwrap();
            assert_eq!(got, value);
            assert_eq!(s2, slot);
        }
        assert_eq!(d.len(), 200);
        for k in (0..200u64).step_by(2) {
            assert!(d.delete(k).is_some());
        }
        assert_eq!(d.len(), 100);
        for k in 0..200u64 {
            assert_eq!(d.get(k).is_some(), k % 2 == 1);
        }
    }

    #[test]
    fn dict_masks_values_to_width() {
        let mut d = StableDict::new(64, 8, SEED).unwrap();
        d.insert(1, 0x1234).unwrap();
        assert_eq!(d.get(1).unwrap().0, 0x34);
        let mut d = StableDict::new(64, 64, SEED).unwrap();
        d.insert(1, u64::MAX).unwrap();
        assert_eq!(d.get(1).unwrap().0, u64::MAX);
    }

    #[test]
    fn dict_slots_stay_put_under_churn() {
        let mut d = StableDict::new(1024, 8, SEED).unwrap();
        let mut shadow: HashMap<u64, (u64, SlotIndex)> = HashMap::new();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut next_key = 0u64;
        for _ in 0..30_000 {
            let roll: f64 = rng.gen();
            if shadow.is_empty() || (roll < 0.45 && shadow.len() < 900) {
                let k = next_key;
                next_key += 1;
                let value = rng.gen::<u64>() & 0xff;
                let slot = d.insert(k, value).unwrap();
                shadow.insert(k, (value, slot));
            } else if roll < 0.75 {
                let &k = shadow.keys().next().unwrap();
                let (value, slot) = shadow.remove(&k).unwrap();
                let (got, s) = d.get(k).expect("shadowed key must be present");
                assert_eq!((got, s), (value, slot), "slot moved for key {k}");
                assert_eq!(d.delete(k), Some(slot));
            } else {
                let keys: Vec<u64> = shadow.keys().copied().take(8).collect();
                for k in keys {
                    let (value, slot) = shadow[&k];
                    let (got, s) = d.get(k).unwrap();
                    assert_eq!((got, s), (value, slot), "slot moved for key {k}");
                }
            }
        }
    }

    #[test]
    fn dict_enforces_capacity_and_uniqueness() {
        let mut d = StableDict::new(16, 8, SEED).unwrap();
        for k in 0..16u64 {
            d.insert(k, k).unwrap();
        }
        assert!(matches!(d.insert(99, 0), Err(Error::CapacityExceeded)));
        assert!(d.insert(3, 0).is_err(), "double insert must be rejected");
        d.delete(3).unwrap();
        assert!(d.insert(99, 7).is_ok(), "free slot reopens capacity");
    }

    #[test]
    fn dict_pointer_ids_recycle() {
        let mut d = StableDict::new(64, 8, SEED).unwrap();
        for k in 0..64u64 {
            d.insert(k, 1).unwrap();
        }
        for k in 0..64u64 {
            d.delete(k).unwrap();
        }
        for k in 100..164u64 {
            d.insert(k, 2).unwrap();
        }
        assert_eq!(d.next_id, 64, "ids beyond the capacity were minted");
    }

    #[test]
    fn dict_stored_pointers_stay_short() {
        let mut d = StableDict::new(1 << 12, 8, SEED).unwrap();
        for k in 0..(1u64 << 12) {
            d.insert(k, k & 0xff).unwrap();
        }
        let mean = d.mean_stored_pointer_bits();
        let bound = 4.0 * 3.0 + 8.0; // 4 * log2(v) + 8 at v = 8
        assert!(mean <= bound, "mean stored pointer {mean:.2} above {bound}");
        assert!(mean >= 2.0, "implausibly short pointers: {mean:.2}");
    }

    #[test]
    fn retrieval_roundtrip_and_slot_universe() {
        let n = 1 << 12;
        let mut r = RelaxedRetrieval::new(n, SEED).unwrap();
        assert_eq!(r.slot_bound(), 2 * n);
        let mut hints = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for k in 0..n as u64 {
            let y = rng.gen::<u64>();
            let p = r.insert(k, y).unwrap();
            assert!(r.deref.dereference(k, p).0 < 2 * n);
            hints.push((k, y, p));
        }
        for &(k, y, p) in &hints {
            assert_eq!(r.query(k, p), y);
        }
        let mean = r.table().stats().mean_pointer_bits();
        assert!(mean <= 8.0, "mean retriever length {mean:.3} above 8 bits");
        // A wrong pair returns something arbitrary without disturbing state.
        let before = r.table().state_digest();
        r.query(999_999, TinyPointer::from_bits(0b1011, 4));
        assert_eq!(r.table().state_digest(), before);
    }

    #[test]
    fn retrieval_slots_recycle_on_delete() {
        let mut r = RelaxedRetrieval::new(1 << 8, SEED).unwrap();
        let p = r.insert(1, 111).unwrap();
        let s = r.deref.dereference(1, p).0;
        r.delete(1, p);
        assert_eq!(r.live(), 0);
        let p2 = r.insert(1, 222).unwrap();
        assert_eq!(p, p2, "an empty table must hand back the same pointer");
        assert_eq!(r.deref.dereference(1, p2).0, s);
        assert_eq!(r.query(1, p2), 222);
    }
}
