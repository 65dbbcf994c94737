use super::sim::{finish_report, Counters, MemoryStats};
use super::trace::{Access, AccessKind, AccessTrace};
use super::{DramConfig, MemoryConfig, MemoryKind, SimError};

#[derive(Debug, Clone, Copy, Default)]
struct OpenBurst {
    next: u64,
    bytes: u64,
    open: bool,
}

/// Burst-merging DRAM front end. Each access kind has its own request
/// stream; consecutive same-stream requests at consecutive addresses extend
/// the open burst until it reaches `max_burst_beats`.
#[derive(Debug, Clone)]
pub struct Dram {
    cfg: DramConfig,
    streams: [OpenBurst; AccessKind::COUNT],
    pub transactions: u64,
    pub beats: u64,
    pub cycles: u64,
}

impl Dram {
    pub fn new(cfg: DramConfig) -> Self {
        Self {
            cfg,
            streams: [OpenBurst::default(); AccessKind::COUNT],
            transactions: 0,
            beats: 0,
            cycles: 0,
        }
    }

    pub fn access(&mut self, kind: AccessKind, addr: u64, bytes: u64) {
        let cap = self.cfg.max_burst_beats * self.cfg.bus_bytes;
        let s = self.streams[kind.index()];
        if s.open && s.next == addr && s.bytes + bytes <= cap {
            let s = &mut self.streams[kind.index()];
            s.bytes += bytes;
            s.next += bytes;
            return;
        }
        self.close(kind);
        self.streams[kind.index()] = OpenBurst {
            next: addr + bytes,
            bytes,
            open: true,
        };
    }

    /// One isolated transaction, e.g. a cache line fill.
    pub fn single(&mut self, bytes: u64) {
        self.charge(self.cfg.beats(bytes));
    }

    /// A contiguous block, split into maximal bursts.
    pub fn block(&mut self, bytes: u64) {
        let mut beats = self.cfg.beats(bytes);
        while beats > 0 {
            let b = beats.min(self.cfg.max_burst_beats);
            self.charge(b);
            beats -= b;
        }
    }

    fn charge(&mut self, beats: u64) {
        self.transactions += 1;
        self.beats += beats;
        self.cycles += self.cfg.transaction_cycles(beats);
    }

    fn close(&mut self, kind: AccessKind) {
        let s = &mut self.streams[kind.index()];
        if s.open {
            s.open = false;
            let beats = self.cfg.beats(s.bytes);
            self.charge(beats);
        }
    }

    pub fn flush(&mut self) {
        for kind in [
            AccessKind::InputRead,
            AccessKind::WeightRead,
            AccessKind::OutputWrite,
            AccessKind::OffsetRead,
        ] {
            self.close(kind);
        }
    }
}

/// Memory stage of the baseline: every in-bounds input read goes straight to
/// DRAM. Non-deformable traces are served by the engine's sliding window.
pub(crate) struct DirectDram {
    pub dram: Dram,
    pub window: Option<super::linebuf::RegularWindow>,
    pub counters: Counters,
    elem: u64,
}

impl DirectDram {
    pub fn new(mem: &MemoryConfig, meta: &super::TraceMeta) -> Self {
        Self {
            dram: Dram::new(mem.dram),
            window: meta.regular.then(|| super::linebuf::RegularWindow::new(meta, mem)),
            counters: Counters::default(),
            elem: meta.map.elem_bytes,
        }
    }

    pub fn access(&mut self, a: &Access) -> Result<(), SimError> {
        if a.is_input() {
            self.counters.input_reads += 1;
            if a.padding {
                self.counters.padding_reads += 1;
                return Ok(());
            }
            if let Some(w) = &mut self.window {
                return w.access(a, &mut self.dram, &mut self.counters);
            }
        }
        self.dram.access(a.kind, a.address, self.elem);
        Ok(())
    }

    pub fn finish(mut self) -> MemoryStats {
        let onchip = self.window.as_mut().map_or(0, |w| w.finish(&mut self.counters));
        self.dram.flush();
        finish_report(self.dram, onchip, self.counters)
    }
}

pub fn sim_direct_dram(trace: &AccessTrace, mem: &MemoryConfig) -> Result<MemoryStats, SimError> {
    if mem.kind != MemoryKind::DirectDram {
        return Err(SimError::WrongMemoryKind {
            expected: "sim_direct_dram",
            got: mem.kind,
        });
    }
    mem.validate()?;
    let mut sim = DirectDram::new(mem, &trace.meta);
    for a in &trace.events {
        sim.access(a)?;
    }
    Ok(sim.finish())
}
