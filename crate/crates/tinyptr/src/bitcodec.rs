//! Bit-level storage: Elias gamma codes, select over bitmaps, and the
//! chunked array that packs variable-length pointers contiguously.

use crate::bits;
use crate::table::{Error, PointerReader, Result, TinyPointer};

/// Encoded length of `gamma(v)` in bits: `2 * floor(log2 v) + 1`.
#[inline]
pub fn gamma_len(v: u64) -> u8 {
    debug_assert!(v >= 1);
    (2 * v.ilog2() + 1) as u8
}

/// Append the Elias gamma code of `v >= 1` to `ptr`.
///
/// `gamma(1) = "1"`, `gamma(5) = "00101"`: `floor(log2 v)` zeros, then the
/// binary expansion of `v` starting with its leading 1.
pub fn gamma_encode(ptr: &mut TinyPointer, v: u64) -> Result<()> {
    if v == 0 {
        return Err(Error::InvalidParams("gamma of 0".into()));
    }
    let n = v.ilog2() as u8;
    if ptr.len() + 2 * n + 1 > 64 {
        return Err(Error::InvalidParams(format!("gamma({v}) does not fit")));
    }
    ptr.push_back(0, n);
    ptr.push_back(v, n + 1);
    Ok(())
}

/// Decode one gamma code from the reader.
pub fn gamma_decode(r: &mut PointerReader) -> Result<u64> {
    let mut zeros = 0u8;
    while r.read_bit()? == 0 {
        zeros += 1;
        if zeros > 63 {
            return Err(Error::Truncated);
        }
    }
    let rest = r.read_bits(zeros)?;
    Ok((1u64 << zeros) | rest)
}

/// `SELECT_IN_BYTE[b][r]` = position of the `r`-th set bit of byte `b`
/// (8 if absent). Precomputed so `select_one` touches each byte once.
static SELECT_IN_BYTE: [[u8; 8]; 256] = build_select_in_byte();

const fn build_select_in_byte() -> [[u8; 8]; 256] {
    let mut t = [[8u8; 8]; 256];
    let mut b = 0usize;
    while b < 256 {
        let mut rank = 0usize;
        let mut pos = 0usize;
        while pos < 8 {
            if b >> pos & 1 == 1 {
                t[b][rank] = pos as u8;
                rank += 1;
            }
            pos += 1;
        }
        b += 1;
    }
    t
}

/// Position of the `rank`-th (0-based) set bit in the word sequence.
pub fn select_one(words: &[u64], rank: usize) -> Result<usize> {
    let mut rem = rank;
    for (wi, &w) in words.iter().enumerate() {
        let ones = w.count_ones() as usize;
        if rem < ones {
            let mut r = rem;
            let mut byte = 0usize;
            loop {
                let b = (w >> (byte * 8)) as u8;
                let bc = b.count_ones() as usize;
                if r < bc {
                    return Ok(wi * 64 + byte * 8 + SELECT_IN_BYTE[b as usize][r] as usize);
                }
                r -= bc;
                byte += 1;
            }
        }
        rem -= ones;
    }
    Err(Error::RankOutOfRange { rank, ones: rank - rem })
}

/// Bit-at-a-time reference for `select_one`; the test oracle.
pub fn select_one_scan(words: &[u64], rank: usize) -> Result<usize> {
    let mut seen = 0usize;
    for pos in 0..words.len() * 64 {
        if bits::test_bit(words, pos) {
            if seen == rank {
                return Ok(pos);
            }
            seen += 1;
        }
    }
    Err(Error::RankOutOfRange { rank, ones: seen })
}

/// Pointers per chunk is this multiple of `ceil(log2 n) / avg_ptr_bits`.
pub const CHUNK_LEN_FACTOR: usize = 4;
/// Payload capacity per chunk, in multiples of `ceil(log2 n)` bits.
pub const CHUNK_CAPACITY_FACTOR: usize = 8;

/// An array of `slots` variable-length pointers packed into fixed-capacity
/// chunks.
///
/// Within a chunk the present pointers are concatenated in slot order; a
/// boundary bitmap marks where each begins, plus one terminal bit, so it
/// always carries `present + 1` set bits. Reading slot `i` is two selects;
/// writing shifts the packed tail of its chunk. A chunk whose payload would
/// exceed its capacity rejects the write with [`Error::ChunkOverflow`].
///
/// Storing an empty pointer clears the slot; empty slots read back as the
/// empty pointer.
#[derive(Debug, Clone)]
pub struct ChunkedPointerArray {
    slots: usize,
    chunk_len: usize,
    capacity_bits: usize,
    chunks: Vec<Chunk>,
}

#[derive(Debug, Clone)]
struct Chunk {
    payload: Vec<u64>,
    /// Bit `p` set iff a stored pointer starts at payload offset `p`, plus a
    /// terminal set bit at the end of the packed payload.
    boundaries: Vec<u64>,
    presence: Vec<u64>,
    used_bits: usize,
    present: usize,
}

impl ChunkedPointerArray {
    /// `slots` pointers averaging `avg_ptr_bits` bits each, tuned for a
    /// structure of size about `n_hint`.
    pub fn new(slots: usize, avg_ptr_bits: usize, n_hint: usize) -> Result<ChunkedPointerArray> {
        let log_n = ceil_log2(n_hint.max(2)) as usize;
        let chunk_len = log_n.div_ceil(avg_ptr_bits.max(1)) * CHUNK_LEN_FACTOR;
        let capacity_bits = CHUNK_CAPACITY_FACTOR * log_n;
        if capacity_bits + 1 > 8 * 64 {
            return Err(Error::InvalidParams(format!(
                "chunk capacity {capacity_bits} bits exceeds the splice window"
            )));
        }
        let chunk = Chunk {
            payload: vec![0; bits::words_for_bits(capacity_bits).max(1)],
            boundaries: {
                let mut b = vec![0; bits::words_for_bits(capacity_bits + 1)];
                bits::set_bit(&mut b, 0); // terminal bit of the empty payload
                b
            },
            presence: vec![0; bits::words_for_bits(chunk_len).max(1)],
            used_bits: 0,
            present: 0,
        };
        Ok(ChunkedPointerArray {
            slots,
            chunk_len,
            capacity_bits,
            chunks: vec![chunk; slots.div_ceil(chunk_len).max(1)],
        })
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn chunk_len(&self) -> usize {
        self.chunk_len
    }

    pub fn capacity_bits(&self) -> usize {
        self.capacity_bits
    }

    pub fn get(&self, idx: usize) -> TinyPointer {
        assert!(idx < self.slots);
        let chunk = &self.chunks[idx / self.chunk_len];
        let slot = idx % self.chunk_len;
        if !bits::test_bit(&chunk.presence, slot) {
            return TinyPointer::EMPTY;
        }
        let j = bits::count_ones_range(&chunk.presence, 0, slot);
        let start = select_one(&chunk.boundaries, j).expect("boundary invariant");
        let end = select_one(&chunk.boundaries, j + 1).expect("boundary invariant");
        TinyPointer::from_bits(bits::read_bits(&chunk.payload, start, end - start), (end - start) as u8)
    }

    /// Store `ptr` at `idx` (replacing anything there); the empty pointer
    /// clears the slot.
    pub fn set(&mut self, idx: usize, ptr: TinyPointer) -> Result<()> {
        assert!(idx < self.slots);
        let ci = idx / self.chunk_len;
        let capacity = self.capacity_bits;
        let chunk = &mut self.chunks[ci];
        let slot = idx % self.chunk_len;
        let present = bits::test_bit(&chunk.presence, slot);
        let j = bits::count_ones_range(&chunk.presence, 0, slot);
        let (start, old_len) = if present {
            let s = select_one(&chunk.boundaries, j).expect("boundary invariant");
            let e = select_one(&chunk.boundaries, j + 1).expect("boundary invariant");
            (s, e - s)
        } else {
            // Insert before the pointer of rank j; with rank == present this
            // selects the terminal bit, i.e. appends.
            (select_one(&chunk.boundaries, j).expect("boundary invariant"), 0)
        };
        let new_len = ptr.len() as usize;
        let new_used = chunk.used_bits - old_len + new_len;
        if new_used > capacity {
            return Err(Error::ChunkOverflow { chunk: ci, capacity_bits: capacity });
        }
        bits::splice_bits(&mut chunk.payload, chunk.used_bits, start, old_len, ptr.value(), new_len);
        match (present, ptr.is_empty()) {
            (false, true) => {} // clearing an empty slot: nothing to do
            (true, true) => {
                // Drop this pointer's boundary span; the bit at `start` now
                // marks whatever follows.
                bits::splice_bits(&mut chunk.boundaries, chunk.used_bits + 1, start + 1, old_len, 0, 0);
                bits::clear_bit(&mut chunk.presence, slot);
                chunk.present -= 1;
            }
            (true, false) => {
                debug_assert!(old_len >= 1, "present pointers are non-empty");
                bits::splice_bits(
                    &mut chunk.boundaries,
                    chunk.used_bits + 1,
                    start + 1,
                    old_len - 1,
                    0,
                    new_len - 1,
                );
            }
            (false, false) => {
                // "1" then new_len - 1 zeros, pushing the old bit at `start`
                // to the new end of our span.
                bits::splice_bits(&mut chunk.boundaries, chunk.used_bits + 1, start, 0, 1, new_len);
                bits::set_bit(&mut chunk.presence, slot);
                chunk.present += 1;
            }
        }
        chunk.used_bits = new_used;
        debug_assert_eq!(
            bits::count_ones_range(&chunk.boundaries, 0, capacity + 1),
            chunk.present + 1,
            "boundary bits = present pointers + 1"
        );
        Ok(())
    }

    pub fn clear(&mut self, idx: usize) {
        self.set(idx, TinyPointer::EMPTY).expect("clearing cannot overflow");
    }

    /// Total metadata footprint in bits (payloads, boundaries, presence).
    pub fn metadata_bits(&self) -> usize {
        self.chunks
            .iter()
            .map(|c| 64 * (c.payload.len() + c.boundaries.len() + c.presence.len()))
            .sum()
    }
}

pub(crate) fn ceil_log2(n: usize) -> u32 {
    debug_assert!(n >= 1);
    if n <= 1 {
        0
    } else {
        (n - 1).ilog2() + 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gamma_str(v: u64) -> String {
        let mut p = TinyPointer::EMPTY;
        gamma_encode(&mut p, v).unwrap();
        p.to_string()
    }

    #[test]
    fn gamma_known_values() {
        // Hand-derived: 1 -> "1"; 2 -> "010"; 5 = 101b -> "00101".
        assert_eq!(gamma_str(1), "1");
        assert_eq!(gamma_str(2), "010");
        assert_eq!(gamma_str(3), "011");
        assert_eq!(gamma_str(5), "00101");
        assert_eq!(gamma_len(5), 5);
        assert_eq!(gamma_len(1), 1);
    }

    #[test]
    fn gamma_roundtrip_range() {
        for v in 1..=100_000u64 {
            let mut p = TinyPointer::EMPTY;
            gamma_encode(&mut p, v).unwrap();
            assert_eq!(p.len(), gamma_len(v));
            let mut r = p.reader();
            assert_eq!(gamma_decode(&mut r).unwrap(), v, "v = {v}");
            assert_eq!(r.remaining(), 0);
        }
    }

    #[test]
    fn gamma_is_prefix_free_in_context() {
        // Decoding consumes exactly the code, leaving trailing bits intact.
        let mut p = TinyPointer::EMPTY;
        gamma_encode(&mut p, 5).unwrap();
        p.push_back(0b110, 3);
        let mut r = p.reader();
        assert_eq!(gamma_decode(&mut r).unwrap(), 5);
        assert_eq!(r.read_bits(3).unwrap(), 0b110);
    }

    #[test]
    fn gamma_truncation_is_an_error() {
        let p = TinyPointer::from_bits(0, 3); // "000": no terminating 1
        assert_eq!(gamma_decode(&mut p.reader()), Err(Error::Truncated));
        let q = TinyPointer::from_bits(0b001, 3); // "001": needs 2 more bits
        assert_eq!(gamma_decode(&mut q.reader()), Err(Error::Truncated));
    }

    #[test]
    fn select_matches_scan() {
        let mut state = 0x9e37_79b9u64;
        let mut rng = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        for trial in 0..2000 {
            let words: Vec<u64> = (0..1 + trial % 4).map(|_| rng()).collect();
            let ones: usize = words.iter().map(|w| w.count_ones() as usize).sum();
            for rank in 0..ones + 2 {
                assert_eq!(select_one(&words, rank), select_one_scan(&words, rank));
            }
        }
        assert_eq!(
            select_one(&[0u64], 0),
            Err(Error::RankOutOfRange { rank: 0, ones: 0 })
        );
    }

    #[test]
    fn chunked_array_basics() {
        // n = 2^16, 3-bit average pointers: ceil(16/3)*4 = 24 slots per
        // chunk, 128-bit payloads.
        let mut cpa = ChunkedPointerArray::new(100, 3, 1 << 16).unwrap();
        assert_eq!(cpa.chunk_len(), 24);
        assert_eq!(cpa.capacity_bits(), 128);
        assert!(cpa.get(7).is_empty());
        cpa.set(7, TinyPointer::from_bits(0b101, 3)).unwrap();
        cpa.set(3, TinyPointer::from_bits(0b01, 2)).unwrap();
        cpa.set(9, TinyPointer::from_bits(0b1111, 4)).unwrap();
        assert_eq!(cpa.get(7), TinyPointer::from_bits(0b101, 3));
        assert_eq!(cpa.get(3), TinyPointer::from_bits(0b01, 2));
        assert_eq!(cpa.get(9), TinyPointer::from_bits(0b1111, 4));
        cpa.set(7, TinyPointer::from_bits(0b000000, 6)).unwrap(); // grow in place
        assert_eq!(cpa.get(7), TinyPointer::from_bits(0, 6));
        assert_eq!(cpa.get(3), TinyPointer::from_bits(0b01, 2));
        cpa.clear(3);
        assert!(cpa.get(3).is_empty());
        assert_eq!(cpa.get(9), TinyPointer::from_bits(0b1111, 4));
    }

    #[test]
    fn chunk_overflow_reported() {
        let mut cpa = ChunkedPointerArray::new(64, 3, 1 << 16).unwrap();
        // Fill one chunk (slots 0..24) with 6-bit pointers: 21 * 6 = 126 fits,
        // the 22nd would need 132 > 128.
        for i in 0..21 {
            cpa.set(i, TinyPointer::from_bits(i as u64, 6)).unwrap();
        }
        match cpa.set(21, TinyPointer::from_bits(0, 6)) {
            Err(Error::ChunkOverflow { chunk: 0, capacity_bits: 128 }) => {}
            other => panic!("expected overflow, got {other:?}"),
        }
        // Other chunks are unaffected.
        cpa.set(30, TinyPointer::from_bits(0, 6)).unwrap();
    }
}
