//! Transaction-level model of the deformable convolution accelerator.
//!
//! A convolution is lowered to an ordered stream of memory events
//! ([`trace`]), which is replayed against one of four input memory systems:
//! direct DRAM, a set-associative last-level cache, a `2N+1`-line buffer, or
//! the same buffer with three banked read ports. Latency is
//! `max(compute, memory) + pipeline fill`.

mod compute;
mod config;
mod dram;
mod linebuf;
mod llc;
mod reuse;
mod sim;
mod trace;

pub use compute::compute_cycles;
pub use config::{DramConfig, EngineConfig, LineBufferConfig, LlcConfig, MemoryConfig, MemoryKind};
pub use dram::{sim_direct_dram, Dram};
pub use linebuf::{group_issue_slots, sim_line_buffer, IssueSlots};
pub use llc::{sim_llc, SetAssocCache};
pub use reuse::{reuse_stats, ReuseStats};
pub use sim::{check_compatible, simulate, Counters, MemoryStats, SimReport};
pub use trace::{gen_trace, Access, AccessKind, AccessTrace, AddressMap, TraceGenerator, TraceMeta, DUMP_HEADER};

use thiserror::Error;

use crate::ops::{OpError, Variant};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("{0} offsets are fractional; round them first (the model simulates rounded inference)")]
    FractionalOffsets(Variant),
    #[error("bilinear sampling is not modeled; round offsets first (use the rounded variant)")]
    BilinearUnsupported,
    #[error("variant {0} needs an offset field")]
    MissingOffsets(Variant),
    #[error("working set exceeds buffer: row {row} was evicted from the {lines}-line buffer by row {evicted_by}")]
    WorkingSetExceedsBuffer { row: i64, evicted_by: i64, lines: usize },
    #[error("{memory} requires bounded variant, got {variant}")]
    RequiresBoundedVariant { memory: MemoryKind, variant: Variant },
    #[error("memory kind {got} does not match simulator {expected}")]
    WrongMemoryKind { expected: &'static str, got: MemoryKind },
    #[error("unsupported engine shape: {0}")]
    UnsupportedEngine(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("trace has no input reads")]
    EmptyTrace,
    #[error(transparent)]
    Op(#[from] OpError),
}
