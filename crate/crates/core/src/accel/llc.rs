use crate::rng::XorShift64Star;

use super::dram::Dram;
use super::linebuf::RegularWindow;
use super::sim::{finish_report, Counters, MemoryStats};
use super::trace::{Access, AccessTrace, TraceMeta};
use super::{LlcConfig, MemoryConfig, MemoryKind, SimError};

const INVALID: u64 = u64::MAX;

/// Set-associative tag store with pseudo-random replacement.
#[derive(Debug, Clone)]
pub struct SetAssocCache {
    sets: u64,
    ways: u64,
    tags: Vec<u64>,
    rng: XorShift64Star,
}

impl SetAssocCache {
    pub fn new(cfg: &LlcConfig) -> Self {
        let sets = cfg.sets();
        Self {
            sets,
            ways: cfg.ways,
            tags: vec![INVALID; (sets * cfg.ways) as usize],
            rng: XorShift64Star::new(cfg.replacement_seed),
        }
    }

    /// Looks up line number `line`, allocating on a miss. Returns true on a hit.
    pub fn lookup(&mut self, line: u64) -> bool {
        let set = (line % self.sets) as usize;
        let ways = self.ways as usize;
        let tags = &mut self.tags[set * ways..(set + 1) * ways];
        if tags.contains(&line) {
            return true;
        }
        let victim = match tags.iter().position(|&t| t == INVALID) {
            Some(free) => free,
            None => (self.rng.next_u64() % self.ways) as usize,
        };
        tags[victim] = line;
        false
    }
}

/// Input reads go through the LLC; consecutive reads of the same line are
/// one lookup. A packed fetch of one tap's channel group pays the hit latency
/// once however many lines it spans. Misses fetch the line on the burst-merging input stream.
pub(crate) struct LlcSim {
    cache: SetAssocCache,
    dram: Dram,
    window: Option<RegularWindow>,
    counters: Counters,
    line_bytes: u64,
    hit_cycles: u64,
    last_line: Option<u64>,
    charged: Option<(u64, i64, i64)>,
    elem: u64,
}

impl LlcSim {
    pub fn new(mem: &MemoryConfig, meta: &TraceMeta) -> Self {
        Self {
            cache: SetAssocCache::new(&mem.llc),
            dram: Dram::new(mem.dram),
            window: meta.regular.then(|| RegularWindow::new(meta, mem)),
            counters: Counters::default(),
            line_bytes: mem.llc.line_bytes,
            hit_cycles: mem.llc.hit_cycles,
            last_line: None,
            charged: None,
            elem: meta.map.elem_bytes,
        }
    }

    pub fn access(&mut self, a: &Access) -> Result<(), SimError> {
        if !a.is_input() {
            self.dram.access(a.kind, a.address, self.elem);
            return Ok(());
        }
        self.counters.input_reads += 1;
        if a.padding {
            self.counters.padding_reads += 1;
            return Ok(());
        }
        if let Some(w) = &mut self.window {
            return w.access(a, &mut self.dram, &mut self.counters);
        }
        let line = a.address / self.line_bytes;
        if self.last_line == Some(line) {
            self.counters.llc_hits += 1;
            return Ok(());
        }
        self.last_line = Some(line);
        if self.cache.lookup(line) {
            self.counters.llc_hits += 1;
            let request = (a.group, a.row, a.col);
            if self.charged != Some(request) {
                self.charged = Some(request);
                self.counters.onchip_cycles += self.hit_cycles;
            }
        } else {
            self.counters.llc_misses += 1;
            self.dram.access(a.kind, line * self.line_bytes, self.line_bytes);
        }
        Ok(())
    }

    pub fn finish(mut self) -> MemoryStats {
        let onchip = match &mut self.window {
            Some(w) => w.finish(&mut self.counters),
            None => self.counters.onchip_cycles,
        };
        self.dram.flush();
        finish_report(self.dram, onchip, self.counters)
    }
}

pub fn sim_llc(trace: &AccessTrace, mem: &MemoryConfig) -> Result<MemoryStats, SimError> {
    if mem.kind != MemoryKind::Llc {
        return Err(SimError::WrongMemoryKind {
            expected: "sim_llc",
            got: mem.kind,
        });
    }
    mem.validate()?;
    let mut sim = LlcSim::new(mem, &trace.meta);
    for a in &trace.events {
        sim.access(a)?;
    }
    Ok(sim.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::accel::{gen_trace, AccessKind, EngineConfig};
    use crate::ops::{ConvSpec, OffsetField, OffsetLayout, Variant};
    use crate::tensor::Shape;

    fn synthetic(addrs: impl IntoIterator<Item = u64>) -> AccessTrace {
        // any deformable meta will do; only the event list matters
        let spec = ConvSpec::new(Shape::new(1, 1, 4, 4).unwrap(), 1, 3).with_variant(Variant::DeformRounded);
        let off = OffsetField::zeros(&spec, OffsetLayout::Full).unwrap();
        let mut t = gen_trace(&spec, Some(&off), &EngineConfig::full()).unwrap();
        t.events = addrs
            .into_iter()
            .enumerate()
            .map(|(g, address)| Access {
                kind: AccessKind::InputRead,
                address,
                batch: 0,
                row: 0,
                col: 0,
                group: g as u64,
                padding: false,
            })
            .collect();
        t
    }

    #[test]
    fn one_line_residency() {
        let t = synthetic((0..1000).map(|i| i % 16 * 4));
        let r = sim_llc(&t, &MemoryConfig::new(MemoryKind::Llc)).unwrap();
        assert_eq!(r.counters.llc_misses, 1);
        assert_eq!(r.counters.llc_hits, 999);
    }

    #[test]
    fn second_pass_all_hits() {
        let mem = MemoryConfig::new(MemoryKind::Llc);
        // half the capacity, one read per line, twice
        let lines = mem.llc.capacity_bytes / mem.llc.line_bytes / 2;
        let pass = (0..lines).map(|l| l * 64);
        let t = synthetic(pass.clone().chain(pass));
        let r = sim_llc(&t, &mem).unwrap();
        assert_eq!(r.counters.llc_misses, lines);
        assert_eq!(r.counters.llc_hits, lines);
    }

    #[test]
    fn replacement_is_seeded() {
        let mut mem = MemoryConfig::new(MemoryKind::Llc);
        mem.llc.capacity_bytes = 64 * 4 * 2;
        mem.llc.ways = 4;
        let addrs: Vec<u64> = (0..400u64).map(|i| (i * 7919 % 37) * 64).collect();
        let a = sim_llc(&synthetic(addrs.clone()), &mem).unwrap();
        let b = sim_llc(&synthetic(addrs.clone()), &mem).unwrap();
        assert_eq!(a, b);
        mem.llc.replacement_seed ^= 1;
        let c = sim_llc(&synthetic(addrs), &mem).unwrap();
        assert_eq!(
            a.counters.llc_hits + a.counters.llc_misses,
            c.counters.llc_hits + c.counters.llc_misses
        );
    }

    #[test]
    fn request_pays_one_hit_and_misses_burst() {
        let mem = MemoryConfig::new(MemoryKind::Llc);
        // a 3-line packed fetch, cold then warm
        let mut t = synthetic((0..48).map(|i| i * 4).chain((0..48).map(|i| i * 4)));
        for (i, a) in t.events.iter_mut().enumerate() {
            a.group = (i / 48) as u64;
        }
        let r = sim_llc(&t, &mem).unwrap();
        assert_eq!(r.counters.llc_misses, 3);
        assert_eq!(r.counters.dram_transactions, 1);
        assert_eq!(r.dram_cycles, mem.dram.transaction_cycles(12));
        assert_eq!(r.onchip_cycles, mem.llc.hit_cycles);
    }
}
