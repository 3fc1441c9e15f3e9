//! Workload scripts and the two ways of running them. [`replay`] keeps a
//! full shadow copy of the table's expected state and cross-checks every
//! operation; it is the reference executor. [`drive`] generates the same
//! workload shapes inline with flat buffers and spot checks, fast enough for
//! hundred-trial sweeps on large tables.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::table::{DerefTable, Error, Result, TinyPointer};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WorkloadOp {
    Allocate(u64),
    Free(u64),
    Dereference(u64),
}

impl fmt::Display for WorkloadOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WorkloadOp::Allocate(k) => write!(f, "A {k}"),
            WorkloadOp::Free(k) => write!(f, "F {k}"),
            WorkloadOp::Dereference(k) => write!(f, "D {k}"),
        }
    }
}

/// Parse a workload script: one `A <key>`, `F <key>` or `D <key>` per line.
/// Blank lines and `#` comments are allowed.
pub fn parse_workload(text: &str) -> Result<Vec<WorkloadOp>> {
    let mut ops = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: &str| Error::WorkloadParse { line: idx + 1, msg: msg.to_string() };
        let mut parts = line.split_whitespace();
        let op = parts.next().unwrap();
        let key: u64 = parts
            .next()
            .ok_or_else(|| err("missing key"))?
            .parse()
            .map_err(|_| err("key is not an unsigned integer"))?;
        if parts.next().is_some() {
            return Err(err("trailing tokens"));
        }
        ops.push(match op {
            "A" => WorkloadOp::Allocate(key),
            "F" => WorkloadOp::Free(key),
            "D" => WorkloadOp::Dereference(key),
            _ => return Err(err("op must be A, F or D")),
        });
    }
    Ok(ops)
}

pub fn write_workload(ops: &[WorkloadOp]) -> String {
    let mut out = String::with_capacity(ops.len() * 12);
    for op in ops {
        out.push_str(&op.to_string());
        out.push('\n');
    }
    out
}

/// The three workload shapes used throughout the test suite. All of them
/// hold at most `cap` keys at once, counting allocations that failed but
/// have not been given up on yet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriveKind {
    /// Coin-flip between allocating a fresh key and freeing a uniformly
    /// random live one.
    Churn,
    /// Fill to `cap`, then retire the oldest key for every new one.
    Fifo,
    /// Like churn over a fixed key set of size `cap`: freed keys return to
    /// the pool and are allocated again later.
    Reinsert,
}

impl DriveKind {
    pub const ALL: [DriveKind; 3] = [DriveKind::Churn, DriveKind::Fifo, DriveKind::Reinsert];

    pub fn name(self) -> &'static str {
        match self {
            DriveKind::Churn => "churn",
            DriveKind::Fifo => "fifo",
            DriveKind::Reinsert => "reinsert",
        }
    }
}

/// Generate a workload script of `ops` operations in shape `kind`. A `D` op
/// on a random live key is emitted with probability `deref_frac` per step.
/// The generator assumes allocations succeed; the executors tolerate the
/// difference when the table disagrees.
pub fn generate(kind: DriveKind, ops: usize, cap: usize, deref_frac: f64, seed: u64) -> Vec<WorkloadOp> {
    assert!(cap > 0, "workloads need a positive live cap");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(ops);
    let mut live: Vec<u64> = Vec::new();
    let mut fifo: VecDeque<u64> = VecDeque::new();
    let mut pool: Vec<u64> = match kind {
        DriveKind::Reinsert => (0..cap as u64).rev().collect(),
        _ => Vec::new(),
    };
    let mut next_key = 0u64;
    while out.len() < ops {
        if deref_frac > 0.0 && !live.is_empty() && rng.gen_bool(deref_frac) {
            out.push(WorkloadOp::Dereference(live[rng.gen_range(0..live.len())]));
            continue;
        }
        match kind {
            DriveKind::Churn | DriveKind::Reinsert => {
                let grow = live.is_empty() || (live.len() < cap && rng.gen::<bool>());
                if grow {
                    let k = if kind == DriveKind::Reinsert {
                        pool.pop().expect("pool and live partition the key set")
                    } else {
                        next_key += 1;
                        next_key - 1
                    };
                    live.push(k);
                    out.push(WorkloadOp::Allocate(k));
                } else {
                    let k = live.swap_remove(rng.gen_range(0..live.len()));
                    if kind == DriveKind::Reinsert {
                        pool.push(k);
                    }
                    out.push(WorkloadOp::Free(k));
                }
            }
            DriveKind::Fifo => {
                if fifo.len() < cap {
                    let k = next_key;
                    next_key += 1;
                    fifo.push_back(k);
                    live.push(k);
                    out.push(WorkloadOp::Allocate(k));
                } else {
                    let k = fifo.pop_front().unwrap();
                    let i = live.iter().position(|&x| x == k).unwrap();
                    live.swap_remove(i);
                    out.push(WorkloadOp::Free(k));
                }
            }
        }
    }
    out
}

/// What [`replay`] observed. All `*_mismatches` and `duplicate_slots`
/// counters must be zero for a correct table.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReplayOutcome {
    pub ops: usize,
    /// Allocations the table declined.
    pub failures: u64,
    /// Ops that made no sense against actual table state (double allocate,
    /// free or dereference of a key that is not live).
    pub skipped: u64,
    pub max_live: usize,
    /// Peak number of keys whose allocation failed and that the workload
    /// still considered its own.
    pub max_failed_alive: usize,
    pub duplicate_slots: u64,
    pub deref_mismatches: u64,
    pub out_of_range: u64,
}

impl ReplayOutcome {
    pub fn clean(&self) -> bool {
        self.duplicate_slots == 0 && self.deref_mismatches == 0 && self.out_of_range == 0
    }
}

/// Execute a script against a table while mirroring every step in shadow
/// maps: live pointers, slot ownership, and the set of failed-alive keys.
/// Slots are re-derived on every free and every `D` op, so any drift of the
/// key-to-slot mapping while a key is live is caught.
pub fn replay<T: DerefTable>(table: &mut T, ops: &[WorkloadOp]) -> ReplayOutcome {
    let mut out = ReplayOutcome { ops: ops.len(), ..Default::default() };
    let mut live: HashMap<u64, (TinyPointer, usize)> = HashMap::new();
    let mut owner: HashMap<usize, u64> = HashMap::new();
    let mut failed: HashSet<u64> = HashSet::new();
    for &op in ops {
        match op {
            WorkloadOp::Allocate(k) => {
                if live.contains_key(&k) || failed.contains(&k) {
                    out.skipped += 1;
                } else {
                    match table.allocate(k) {
                        Some(p) => {
                            let s = table.dereference(k, p).0;
                            if s >= table.capacity() {
                                out.out_of_range += 1;
                            }
                            if owner.insert(s, k).is_some() {
                                out.duplicate_slots += 1;
                            }
                            live.insert(k, (p, s));
                        }
                        None => {
                            out.failures += 1;
                            failed.insert(k);
                        }
                    }
                }
            }
            WorkloadOp::Free(k) => {
                if let Some((p, s)) = live.remove(&k) {
                    if table.dereference(k, p).0 != s {
                        out.deref_mismatches += 1;
                    }
                    table.free(k, p);
                    if owner.get(&s) == Some(&k) {
                        owner.remove(&s);
                    }
                } else if !failed.remove(&k) {
                    out.skipped += 1;
                }
            }
            WorkloadOp::Dereference(k) => match live.get(&k) {
                Some(&(p, s)) => {
                    if table.dereference(k, p).0 != s {
                        out.deref_mismatches += 1;
                    }
                }
                None => out.skipped += 1,
            },
        }
        out.max_live = out.max_live.max(live.len() + failed.len());
        out.max_failed_alive = out.max_failed_alive.max(failed.len());
    }
    out
}

/// What [`drive`] observed.
#[derive(Debug, Clone, Default)]
pub struct DriveOutcome {
    pub ops: usize,
    pub failures: u64,
    pub max_failed_alive: usize,
    pub failed_alive_at_end: usize,
    pub live_at_end: usize,
    pub duplicate_slots: u64,
    pub deref_mismatches: u64,
    pub min_ptr_len: u8,
    pub max_ptr_len: u8,
}

impl DriveOutcome {
    pub fn clean(&self) -> bool {
        self.duplicate_slots == 0 && self.deref_mismatches == 0
    }
}

struct SlotMap {
    words: Vec<u64>,
}

impl SlotMap {
    fn new(capacity: usize) -> SlotMap {
        SlotMap { words: vec![0; capacity.div_ceil(64)] }
    }

    /// Returns false when the slot was already taken.
    #[inline]
    fn claim(&mut self, slot: usize) -> bool {
        let (w, b) = (slot / 64, slot % 64);
        let taken = self.words[w] >> b & 1 == 1;
        self.words[w] |= 1 << b;
        !taken
    }

    #[inline]
    fn release(&mut self, slot: usize) {
        self.words[slot / 64] &= !(1u64 << (slot % 64));
    }
}

/// Run `ops` operations of shape `kind` against `table`, holding at most
/// `cap` keys. Uniqueness is checked on every allocation through a slot
/// bitmap; pointer stability is spot checked every `deref_every` ops
/// (0 disables the probes). An allocation failure leaves the key in the
/// working set until the workload frees it, mirroring [`generate`].
pub fn drive<T: DerefTable>(
    table: &mut T,
    kind: DriveKind,
    cap: usize,
    ops: usize,
    seed: u64,
    deref_every: usize,
) -> DriveOutcome {
    drive_impl(table, kind, cap, 0, ops, seed, deref_every)
}

/// Like [`drive`], but fill the table to `cap` keys first and only then run
/// the `ops`-long mix, so every operation executes at the target load. The
/// fill allocations count toward the outcome (and its failure tally) but not
/// toward `ops`.
pub fn drive_loaded<T: DerefTable>(
    table: &mut T,
    kind: DriveKind,
    cap: usize,
    ops: usize,
    seed: u64,
    deref_every: usize,
) -> DriveOutcome {
    drive_impl(table, kind, cap, cap, ops, seed, deref_every)
}

fn drive_impl<T: DerefTable>(
    table: &mut T,
    kind: DriveKind,
    cap: usize,
    prefill: usize,
    ops: usize,
    seed: u64,
    deref_every: usize,
) -> DriveOutcome {
    assert!(cap > 0, "workloads need a positive live cap");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = DriveOutcome { ops: prefill + ops, min_ptr_len: u8::MAX, ..Default::default() };
    let mut slots = SlotMap::new(table.capacity());
    // Index 0..fifo boundary semantics: churn and reinsert treat `entries`
    // as an unordered set, fifo as a queue.
    let mut entries: VecDeque<(u64, Option<(TinyPointer, u32)>)> = VecDeque::with_capacity(cap);
    let mut failed_alive = 0usize;
    let mut pool: Vec<u64> = match kind {
        DriveKind::Reinsert => (0..cap as u64).rev().collect(),
        _ => Vec::new(),
    };
    let mut next_key = 0u64;
    for step in 0..prefill + ops {
        let grow = if step < prefill {
            entries.len() < cap
        } else {
            match kind {
                DriveKind::Fifo => entries.len() < cap,
                _ => entries.is_empty() || (entries.len() < cap && rng.gen::<bool>()),
            }
        };
        if grow {
            let k = match kind {
                DriveKind::Reinsert => pool.pop().expect("pool and entries partition the keys"),
                _ => {
                    next_key += 1;
                    next_key - 1
                }
            };
            match table.allocate(k) {
                Some(p) => {
                    let s = table.dereference(k, p).0;
                    debug_assert!(s < table.capacity());
                    if !slots.claim(s) {
                        out.duplicate_slots += 1;
                    }
                    out.min_ptr_len = out.min_ptr_len.min(p.len());
                    out.max_ptr_len = out.max_ptr_len.max(p.len());
                    entries.push_back((k, Some((p, s as u32))));
                }
                None => {
                    out.failures += 1;
                    failed_alive += 1;
                    out.max_failed_alive = out.max_failed_alive.max(failed_alive);
                    entries.push_back((k, None));
                }
            }
        } else {
            let (k, e) = match kind {
                DriveKind::Fifo => entries.pop_front().unwrap(),
                _ => {
                    let i = rng.gen_range(0..entries.len());
                    entries.swap_remove_back(i).unwrap()
                }
            };
            match e {
                Some((p, s)) => {
                    table.free(k, p);
                    slots.release(s as usize);
                }
                None => failed_alive -= 1,
            }
            if kind == DriveKind::Reinsert {
                pool.push(k);
            }
        }
        if deref_every > 0 && step % deref_every == 0 && !entries.is_empty() {
            let i = rng.gen_range(0..entries.len());
            if let (k, Some((p, s))) = entries[i] {
                if table.dereference(k, p).0 != s as usize {
                    out.deref_mismatches += 1;
                }
            }
        }
    }
    out.failed_alive_at_end = failed_alive;
    out.live_at_end = entries.len() - failed_alive;
    if out.min_ptr_len == u8::MAX {
        out.min_ptr_len = 0;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixed::FixedTable;
    use crate::hashing::HashSeed;
    use crate::lbt::LoadBalancingTable;
    use std::collections::HashSet;

    #[test]
    fn script_roundtrip() {
        let ops = generate(DriveKind::Churn, 500, 40, 0.2, 9);
        let text = write_workload(&ops);
        assert_eq!(parse_workload(&text).unwrap(), ops);
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!(parse_workload("A 1\nQ 2\n").is_err());
        assert!(parse_workload("A\n").is_err());
        assert!(parse_workload("A x\n").is_err());
        assert!(parse_workload("A 1 2\n").is_err());
        let ops = parse_workload("# header\n\nA 7\nD 7\nF 7\n").unwrap();
        assert_eq!(ops.len(), 3);
        match parse_workload("A 1\nbroken\n") {
            Err(Error::WorkloadParse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn generators_respect_live_cap() {
        for kind in DriveKind::ALL {
            let ops = generate(kind, 2000, 25, 0.1, 4);
            let mut live = HashSet::new();
            let mut peak = 0;
            for op in &ops {
                match op {
                    WorkloadOp::Allocate(k) => {
                        assert!(live.insert(*k), "{kind:?} double-allocated {k}");
                    }
                    WorkloadOp::Free(k) => {
                        assert!(live.remove(k), "{kind:?} freed dead key {k}");
                    }
                    WorkloadOp::Dereference(k) => assert!(live.contains(k)),
                }
                peak = peak.max(live.len());
            }
            assert!(peak <= 25, "{kind:?} exceeded its cap: {peak}");
            assert!(peak > 20, "{kind:?} never approached its cap: {peak}");
        }
    }

    #[test]
    fn reinsert_reuses_its_key_pool() {
        let ops = generate(DriveKind::Reinsert, 4000, 16, 0.0, 8);
        let keys: HashSet<u64> = ops
            .iter()
            .map(|op| match op {
                WorkloadOp::Allocate(k) | WorkloadOp::Free(k) | WorkloadOp::Dereference(k) => *k,
            })
            .collect();
        assert!(keys.len() <= 16);
        let allocs = ops.iter().filter(|o| matches!(o, WorkloadOp::Allocate(_))).count();
        assert!(allocs > 100, "keys must cycle many times, saw {allocs}");
    }

    #[test]
    fn replay_is_clean_on_a_healthy_table() {
        let mut table = FixedTable::new(1 << 12, 0.25, HashSeed(2)).unwrap();
        let ops = generate(DriveKind::Churn, 30_000, 3 << 10, 0.05, 17);
        let outcome = replay(&mut table, &ops);
        assert!(outcome.clean(), "{outcome:?}");
        assert_eq!(outcome.failures, 0);
        assert_eq!(outcome.skipped, 0);
        assert!(outcome.max_live <= 3 << 10);
    }

    #[test]
    fn replay_tracks_failed_allocations() {
        // A deliberately overloaded standalone table: m = 64, cap 60 live.
        let mut table = LoadBalancingTable::new(64, 0.9, HashSeed(5)).unwrap();
        let ops = generate(DriveKind::Churn, 5_000, 60, 0.0, 3);
        let outcome = replay(&mut table, &ops);
        assert!(outcome.failures > 0, "8-slot buckets at 60/64 load must overflow");
        assert!(outcome.max_failed_alive > 0);
        assert!(outcome.clean(), "{outcome:?}");
        assert_eq!(outcome.skipped, 0, "failed keys are freed via the failed set");
    }

    #[test]
    fn drive_matches_replay_aggregates() {
        for kind in DriveKind::ALL {
            let mut a = FixedTable::new(1 << 12, 0.25, HashSeed(7)).unwrap();
            let out = drive(&mut a, kind, 3 << 10, 30_000, 21, 64);
            assert!(out.clean(), "{kind:?}: {out:?}");
            assert_eq!(out.failures, 0, "{kind:?} overloaded a healthy table");
            assert_eq!(out.min_ptr_len, a.pointer_width());
            assert_eq!(out.max_ptr_len, a.pointer_width());
            assert_eq!(a.stats().live as usize, out.live_at_end);
        }
    }

    #[test]
    fn drive_counts_failures_like_the_table() {
        let mut table = LoadBalancingTable::new(64, 0.9, HashSeed(5)).unwrap();
        let out = drive(&mut table, DriveKind::Churn, 60, 5_000, 3, 0);
        assert!(out.failures > 0);
        assert_eq!(out.failures, table.stats().failures);
        assert!(out.max_failed_alive > 0);
        assert!(out.clean());
    }

    #[test]
    fn drive_loaded_holds_the_table_at_the_cap() {
        for kind in DriveKind::ALL {
            let mut table = FixedTable::new(1 << 12, 0.25, HashSeed(9)).unwrap();
            let cap = 3 << 10;
            let out = drive_loaded(&mut table, kind, cap, 10_000, 33, 256);
            assert!(out.clean(), "{kind:?}: {out:?}");
            assert_eq!(out.failures, 0, "{kind:?} overloaded a healthy table");
            assert_eq!(out.ops, cap + 10_000);
            // Churn-style mixes random-walk below the cap by O(sqrt(ops));
            // fifo stays pinned at it.
            let attempted = out.live_at_end + out.failed_alive_at_end;
            let slack = if kind == DriveKind::Fifo { 1 } else { 500 };
            assert!(attempted + slack >= cap, "{kind:?} drifted from the cap: {attempted}");
        }
    }
}
