//! Flat bitmap helpers shared by the table occupancy structures. Positions
//! are absolute bit indices into a `&[u64]` word slice, LSB-first per word.

#[inline]
pub(crate) fn words_for_bits(bits: usize) -> usize {
    bits.div_ceil(64)
}

#[inline]
pub(crate) fn test_bit(words: &[u64], pos: usize) -> bool {
    words[pos / 64] >> (pos % 64) & 1 != 0
}

#[inline]
pub(crate) fn set_bit(words: &mut [u64], pos: usize) {
    words[pos / 64] |= 1u64 << (pos % 64);
}

#[inline]
pub(crate) fn clear_bit(words: &mut [u64], pos: usize) {
    words[pos / 64] &= !(1u64 << (pos % 64));
}

/// Lowest clear bit in `[start, end)`, if any.
pub(crate) fn find_zero_in_range(words: &[u64], start: usize, end: usize) -> Option<usize> {
    if start >= end {
        return None;
    }
    let mut w = start / 64;
    let last = (end - 1) / 64;
    // Mask off bits below `start` in the first word by treating them as set.
    let mut cur = words[w] | low_mask(start % 64);
    loop {
        let inv = !cur;
        if inv != 0 {
            let pos = w * 64 + inv.trailing_zeros() as usize;
            if pos < end {
                return Some(pos);
            }
            return None;
        }
        if w == last {
            return None;
        }
        w += 1;
        cur = words[w];
    }
}

/// Number of set bits in `[start, end)`.
pub(crate) fn count_ones_range(words: &[u64], start: usize, end: usize) -> usize {
    if start >= end {
        return 0;
    }
    let (sw, sb) = (start / 64, start % 64);
    let (ew, eb) = (end / 64, end % 64);
    if sw == ew {
        let mask = (u64::MAX << sb) & low_mask(eb);
        return (words[sw] & mask).count_ones() as usize;
    }
    let mut total = (words[sw] & (u64::MAX << sb)).count_ones() as usize;
    for w in &words[sw + 1..ew] {
        total += w.count_ones() as usize;
    }
    if eb != 0 {
        total += (words[ew] & low_mask(eb)).count_ones() as usize;
    }
    total
}

/// Mask with the low `n` bits set; `n == 64` gives all ones, `n == 0` none.
#[inline]
pub(crate) fn low_mask(n: usize) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

/// Read `len <= 64` bits starting at `pos` (LSB-first within the stream).
pub(crate) fn read_bits(words: &[u64], pos: usize, len: usize) -> u64 {
    debug_assert!(len <= 64);
    if len == 0 {
        return 0;
    }
    let w = pos / 64;
    let b = pos % 64;
    let lo = words[w] >> b;
    if b + len <= 64 {
        lo & low_mask(len)
    } else {
        (lo | (words[w + 1] << (64 - b))) & low_mask(len)
    }
}

/// Write `len <= 64` bits starting at `pos`.
pub(crate) fn write_bits(words: &mut [u64], pos: usize, len: usize, value: u64) {
    debug_assert!(len <= 64);
    if len == 0 {
        return;
    }
    debug_assert!(len == 64 || value < (1u64 << len));
    let w = pos / 64;
    let b = pos % 64;
    let mask = low_mask(len);
    words[w] = (words[w] & !(mask << b)) | ((value & mask) << b);
    if b + len > 64 {
        let spill = b + len - 64;
        let hi_mask = low_mask(spill);
        words[w + 1] = (words[w + 1] & !hi_mask) | ((value >> (64 - b)) & hi_mask);
    }
}

/// In a bit stream of `total` bits, replace the `remove` bits at `at` with
/// `insert_len` bits of `insert_val`, shifting the tail. Returns the new
/// total length. The word slice must have room for the result.
pub(crate) fn splice_bits(
    words: &mut [u64],
    total: usize,
    at: usize,
    remove: usize,
    insert_val: u64,
    insert_len: usize,
) -> usize {
    debug_assert!(at + remove <= total);
    debug_assert!(insert_len <= 64);
    let tail_len = total - (at + remove);
    // Save the tail, move it, then write the insertion. Tails here are tiny
    // (chunk payloads are a few words), so a word-chunked copy is plenty.
    let mut tail = [0u64; 8];
    debug_assert!(tail_len <= 64 * tail.len());
    let mut copied = 0;
    while copied < tail_len {
        let step = (tail_len - copied).min(64);
        tail[copied / 64] = read_bits(words, at + remove + copied, step);
        copied += step;
    }
    let mut written = 0;
    while written < tail_len {
        let step = (tail_len - written).min(64);
        write_bits(words, at + insert_len + written, step, tail[written / 64]);
        written += step;
    }
    write_bits(words, at, insert_len, insert_val);
    let new_total = total - remove + insert_len;
    // Clear any bits beyond the new end inside the touched words, keeping the
    // representation canonical for digests and tests.
    let end = new_total;
    let used_words = words_for_bits(total.max(new_total));
    if end < used_words * 64 {
        let w = end / 64;
        let b = end % 64;
        words[w] &= low_mask(b);
        for word in words.iter_mut().take(used_words).skip(w + 1) {
            *word = 0;
        }
    }
    new_total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_ops_match_naive() {
        let mut words = vec![0u64; 4];
        let set = [3usize, 64, 65, 100, 191, 200, 255];
        for &p in &set {
            set_bit(&mut words, p);
        }
        for p in 0..256 {
            assert_eq!(test_bit(&words, p), set.contains(&p));
        }
        for (start, end) in [(0, 256), (3, 4), (4, 64), (60, 70), (100, 100), (190, 256)] {
            let naive = (start..end).filter(|&p| test_bit(&words, p)).count();
            assert_eq!(count_ones_range(&words, start, end), naive, "({start},{end})");
            let naive_zero = (start..end).find(|&p| !test_bit(&words, p));
            assert_eq!(find_zero_in_range(&words, start, end), naive_zero);
        }
        let mut full = vec![u64::MAX; 2];
        assert_eq!(find_zero_in_range(&full, 0, 128), None);
        clear_bit(&mut full, 77);
        assert_eq!(find_zero_in_range(&full, 0, 128), Some(77));
        assert_eq!(find_zero_in_range(&full, 78, 128), None);
    }

    #[test]
    fn read_write_roundtrip() {
        let mut words = vec![0u64; 4];
        write_bits(&mut words, 60, 10, 0x3ff);
        assert_eq!(read_bits(&words, 60, 10), 0x3ff);
        write_bits(&mut words, 60, 10, 0x155);
        assert_eq!(read_bits(&words, 60, 10), 0x155);
        assert_eq!(read_bits(&words, 0, 60), 0);
        write_bits(&mut words, 128, 64, u64::MAX);
        assert_eq!(read_bits(&words, 128, 64), u64::MAX);
        write_bits(&mut words, 130, 3, 0);
        assert_eq!(read_bits(&words, 128, 8), 0b1110_0011);
    }

    #[test]
    fn splice_against_vec_model() {
        // Model the stream as a Vec<bool> and compare after random splices.
        let mut words = vec![0u64; 8];
        let mut model: Vec<bool> = Vec::new();
        let mut total = 0usize;
        let mut state = 0x1234_5678_9abc_def0u64;
        let mut rng = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        for _ in 0..500 {
            let at = if total == 0 { 0 } else { (rng() as usize) % (total + 1) };
            let remove = (rng() as usize) % (total - at + 1).min(20);
            let insert_len = (rng() as usize) % 20;
            let insert_val = rng() & low_mask(insert_len);
            if total - remove + insert_len > 64 * 7 {
                continue;
            }
            total = splice_bits(&mut words, total, at, remove, insert_val, insert_len);
            let mut ins: Vec<bool> = (0..insert_len).map(|i| insert_val >> i & 1 != 0).collect();
            let tail = model.split_off(at + remove);
            model.truncate(at);
            model.append(&mut ins);
            model.extend(tail);
            assert_eq!(model.len(), total);
            for (i, &b) in model.iter().enumerate() {
                assert_eq!(test_bit(&words, i), b, "bit {i} of {total}");
            }
        }
    }
}
