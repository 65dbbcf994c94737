use std::ops::ControlFlow;

use crate::ops::{flops_count, ConvSpec, OffsetField, Variant};

use super::dram::{DirectDram, Dram};
use super::linebuf::LineBufferSim;
use super::llc::LlcSim;
use super::trace::{Access, TraceGenerator};
use super::{compute_cycles, EngineConfig, MemoryConfig, MemoryKind, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counters {
    /// Every input-read event, padding included.
    pub input_reads: u64,
    pub padding_reads: u64,
    pub dram_transactions: u64,
    pub dram_beats: u64,
    pub llc_hits: u64,
    pub llc_misses: u64,
    pub buffer_hits: u64,
    pub buffer_fills: u64,
    pub port_conflicts: u64,
    pub issue_slots: u64,
    pub rows_streamed: u64,
    pub onchip_cycles: u64,
}

impl Counters {
    /// Input reads that reach the memory system.
    pub fn memory_input_reads(&self) -> u64 {
        self.input_reads - self.padding_reads
    }
}

/// Output of one memory-system simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryStats {
    pub dram_cycles: u64,
    pub onchip_cycles: u64,
    /// `dram_cycles + onchip_cycles`: requests are served one at a time.
    pub memory_cycles: u64,
    pub counters: Counters,
}

pub(crate) fn finish_report(dram: Dram, onchip: u64, mut counters: Counters) -> MemoryStats {
    counters.dram_transactions = dram.transactions;
    counters.dram_beats = dram.beats;
    counters.onchip_cycles = onchip;
    MemoryStats {
        dram_cycles: dram.cycles,
        onchip_cycles: onchip,
        memory_cycles: dram.cycles + onchip,
        counters,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimReport {
    pub compute_cycles: u64,
    pub memory_cycles: u64,
    pub dram_cycles: u64,
    pub onchip_cycles: u64,
    pub total_cycles: u64,
    pub latency_ms: f64,
    pub gops: f64,
    pub total_ops: u64,
    pub counters: Counters,
}

enum Stage {
    Direct(DirectDram),
    Llc(LlcSim),
    Buffer(LineBufferSim),
}

impl Stage {
    fn access(&mut self, a: &Access) -> Result<(), SimError> {
        match self {
            Stage::Direct(s) => s.access(a),
            Stage::Llc(s) => s.access(a),
            Stage::Buffer(s) => s.access(a),
        }
    }

    fn finish(self) -> MemoryStats {
        match self {
            Stage::Direct(s) => s.finish(),
            Stage::Llc(s) => s.finish(),
            Stage::Buffer(s) => s.finish(),
        }
    }
}

/// Rejects combinations no simulator can run, before any trace work.
pub fn check_compatible(spec: &ConvSpec, mem: &MemoryConfig) -> Result<(), SimError> {
    if mem.kind.is_buffered() && matches!(spec.variant, Variant::DeformBilinear | Variant::DeformRounded) {
        return Err(SimError::RequiresBoundedVariant {
            memory: mem.kind,
            variant: spec.variant,
        });
    }
    Ok(())
}

/// Generates the trace of `spec`, streams it through the memory system of
/// `mem` and combines the result with the compute estimate.
pub fn simulate(
    spec: &ConvSpec,
    off: Option<&OffsetField>,
    engine: &EngineConfig,
    mem: &MemoryConfig,
) -> Result<SimReport, SimError> {
    mem.validate()?;
    check_compatible(spec, mem)?;
    let compute = compute_cycles(spec, engine)?;
    let gen = TraceGenerator::new(spec, off, engine)?;
    let meta = gen.meta();
    let mut stage = match mem.kind {
        MemoryKind::DirectDram => Stage::Direct(DirectDram::new(mem, meta)),
        MemoryKind::Llc => Stage::Llc(LlcSim::new(mem, meta)),
        MemoryKind::LineBuffer | MemoryKind::LineBufferMultiPort => Stage::Buffer(LineBufferSim::new(mem, meta)?),
    };
    let mut failure = None;
    gen.visit(|a| match stage.access(a) {
        Ok(()) => ControlFlow::Continue(()),
        Err(e) => {
            failure = Some(e);
            ControlFlow::Break(())
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let stats = stage.finish();
    Ok(report(spec, engine, compute, stats))
}

pub(crate) fn report(spec: &ConvSpec, engine: &EngineConfig, compute: u64, m: MemoryStats) -> SimReport {
    let total_cycles = compute.max(m.memory_cycles) + engine.pipeline_fill_cycles;
    let latency_ms = total_cycles as f64 / (engine.clock_mhz * 1e3);
    let total_ops = flops_count(spec).total;
    SimReport {
        compute_cycles: compute,
        memory_cycles: m.memory_cycles,
        dram_cycles: m.dram_cycles,
        onchip_cycles: m.onchip_cycles,
        total_cycles,
        latency_ms,
        gops: total_ops as f64 / (latency_ms * 1e6),
        total_ops,
        counters: m.counters,
    }
}
