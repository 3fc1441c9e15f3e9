//! Dereference tables that hand out *tiny pointers*: short bit strings that
//! are only meaningful relative to the key they were allocated for, yet can be
//! turned back into a unique slot index at any time.
//!
//! The crate provides two table families plus the machinery around them:
//!
//! * [`lbt::LoadBalancingTable`]: one hash picks a bucket, the pointer is the
//!   slot index inside that bucket. Fixed pointer width, allocation can fail.
//! * [`fixed::FixedTable`]: a load-balancing primary plus a two-choice
//!   secondary behind a selector bit. Every pointer has the same width and
//!   allocation failures are (empirically) gone.
//! * [`variable::VariableTable`]: keys are split into containers, each
//!   container is a cascade of geometrically shrinking levels with overflow
//!   arrays. Pointers are variable-length and short on average.
//! * [`variable::WrappedVariableTable`]: the high-load composition, a
//!   fixed-width primary backed by a small [`variable::VariableTable`].
//! * [`adapters`]: a slot-stable dictionary and a relaxed-retrieval store
//!   built on the tables as black boxes.
//! * [`ballsbins`]: single-choice / d-left / iceberg insertion rules for the
//!   load-balancing experiments, including exposure counting.
//! * [`experiments`]: the seeded experiment runners shared by the CLI and the
//!   acceptance suite.
//!
//! All randomness flows through explicit [`hashing::HashSeed`] values; a seed
//! fully determines every hash stream, workload, and report byte.

pub mod adapters;
pub mod ballsbins;
pub mod bitcodec;
mod bits;
pub mod experiments;
pub mod fixed;
pub mod hashing;
pub mod lbt;
pub mod table;
pub mod variable;
pub mod workload;

pub use table::{DerefTable, Error, Result, SlotIndex, TableStats, TinyPointer};
