use crate::ops::Variant;

use super::dram::Dram;
use super::sim::{finish_report, Counters, MemoryStats};
use super::trace::{Access, AccessTrace, TraceMeta};
use super::{MemoryConfig, SimError};

/// Issue slots one cycle-group needs on a banked buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IssueSlots {
    pub slots: u64,
    /// Slots with no bank conflicts at all: `ceil(words / ports)`.
    pub ideal: u64,
}

impl IssueSlots {
    pub fn conflicts(&self) -> u64 {
        self.slots - self.ideal
    }
}

/// `lines[w]` is the buffer line holding distinct word `w`. Each line is one
/// bank with one read per slot and each of the `ports` ports serves one bank
/// per slot, so the best schedule takes `max(r_max, ceil(words / ports))`.
pub fn group_issue_slots(lines: &[usize], ports: usize) -> IssueSlots {
    let words = lines.len() as u64;
    let ideal = words.div_ceil(ports as u64);
    let mut sorted = lines.to_vec();
    sorted.sort_unstable();
    let r_max = sorted
        .chunk_by(|a, b| a == b)
        .map(|c| c.len() as u64)
        .max()
        .unwrap_or(0);
    IssueSlots {
        slots: r_max.max(ideal),
        ideal,
    }
}

/// Rows currently held by each buffer line.
#[derive(Debug, Clone)]
struct Lines {
    held: Vec<Option<i64>>,
}

impl Lines {
    fn new(n: usize) -> Self {
        Self { held: vec![None; n] }
    }

    fn line_of(&self, key: i64) -> usize {
        key.rem_euclid(self.held.len() as i64) as usize
    }

    /// Makes `key` resident; returns true if it had to be streamed in.
    fn touch(&mut self, key: i64) -> Result<bool, SimError> {
        let lines = self.held.len();
        let slot = &mut self.held[key.rem_euclid(lines as i64) as usize];
        match *slot {
            Some(r) if r == key => Ok(false),
            Some(r) if r > key => Err(SimError::WorkingSetExceedsBuffer {
                row: key,
                evicted_by: r,
                lines,
            }),
            _ => {
                *slot = Some(key);
                Ok(true)
            }
        }
    }
}

/// First-touch tracking per input element.
#[derive(Debug, Clone)]
struct Seen(Vec<u64>);

impl Seen {
    fn new(n: usize) -> Self {
        Self(vec![0; n.div_ceil(64)])
    }

    fn insert(&mut self, i: usize) -> bool {
        let (w, b) = (i / 64, 1u64 << (i % 64));
        let fresh = self.0[w] & b == 0;
        self.0[w] |= b;
        fresh
    }
}

struct Residency {
    lines: Lines,
    seen: Seen,
    row_bytes: u64,
    rows_per_image: i64,
    elem: u64,
}

impl Residency {
    fn new(meta: &TraceMeta, lines: usize) -> Self {
        Self {
            lines: Lines::new(lines),
            seen: Seen::new(meta.spec.in_shape.len()),
            row_bytes: meta.map.row_bytes(),
            rows_per_image: meta.spec.in_shape.h as i64,
            elem: meta.map.elem_bytes,
        }
    }

    fn key(&self, a: &Access) -> i64 {
        a.batch as i64 * self.rows_per_image + a.row
    }

    fn read(&mut self, a: &Access, dram: &mut Dram, c: &mut Counters) -> Result<i64, SimError> {
        let key = self.key(a);
        if self.lines.touch(key)? {
            dram.block(self.row_bytes);
            c.rows_streamed += 1;
        }
        if self.seen.insert((a.address / self.elem) as usize) {
            c.buffer_fills += 1;
        } else {
            c.buffer_hits += 1;
        }
        Ok(key)
    }
}

/// The conv engine's own `k`-line sliding window, used for every
/// non-deformable trace: rows stream in once and each cycle-group is served
/// in one slot.
pub(crate) struct RegularWindow {
    res: Residency,
    groups: u64,
    hit_cycles: u64,
}

impl RegularWindow {
    pub fn new(meta: &TraceMeta, mem: &MemoryConfig) -> Self {
        let (oh, ow) = meta.spec.out_hw();
        let lines = meta.spec.effective_k().max(meta.spec.stride);
        Self {
            res: Residency::new(meta, lines),
            groups: (meta.spec.in_shape.n * oh * ow * meta.ic_groups) as u64,
            hit_cycles: mem.linebuffer.hit_cycles,
        }
    }

    pub fn access(&mut self, a: &Access, dram: &mut Dram, c: &mut Counters) -> Result<(), SimError> {
        self.res.read(a, dram, c).map(|_| ())
    }

    /// On-chip cycles.
    pub fn finish(&mut self, c: &mut Counters) -> u64 {
        c.issue_slots += self.groups;
        self.groups * self.hit_cycles
    }
}

/// `2N + 1`-line input buffer with 1 or 3 banked read ports.
pub(crate) struct LineBufferSim {
    dram: Dram,
    counters: Counters,
    elem: u64,
    mode: Mode,
}

enum Mode {
    Regular(RegularWindow),
    Deform {
        res: Residency,
        ports: usize,
        hit_cycles: u64,
        group: Option<u64>,
        /// (row key, column) of the distinct words in the open group.
        words: Vec<(i64, i64)>,
        scratch: Vec<usize>,
    },
}

impl LineBufferSim {
    pub fn new(mem: &MemoryConfig, meta: &TraceMeta) -> Result<Self, SimError> {
        let mode = match meta.spec.variant {
            Variant::Standard | Variant::Dilated(_) => Mode::Regular(RegularWindow::new(meta, mem)),
            Variant::DeformBounded(_) | Variant::DeformSquare(_) => Mode::Deform {
                res: Residency::new(meta, mem.linebuffer.lines()),
                ports: mem.linebuffer.ports,
                hit_cycles: mem.linebuffer.hit_cycles,
                group: None,
                words: Vec::new(),
                scratch: Vec::new(),
            },
            variant => {
                return Err(SimError::RequiresBoundedVariant {
                    memory: mem.kind,
                    variant,
                })
            }
        };
        Ok(Self {
            dram: Dram::new(mem.dram),
            counters: Counters::default(),
            elem: meta.map.elem_bytes,
            mode,
        })
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
        match &mut self.mode {
            Mode::Regular(w) => w.access(a, &mut self.dram, &mut self.counters),
            Mode::Deform {
                res,
                ports,
                hit_cycles,
                group,
                words,
                scratch,
            } => {
                if *group != Some(a.group) {
                    close_group(words, scratch, res, *ports, *hit_cycles, &mut self.counters);
                    *group = Some(a.group);
                }
                let key = res.read(a, &mut self.dram, &mut self.counters)?;
                let w = (key, a.col);
                if !words.contains(&w) {
                    words.push(w);
                }
                Ok(())
            }
        }
    }

    pub fn finish(mut self) -> MemoryStats {
        let onchip = match &mut self.mode {
            Mode::Regular(w) => w.finish(&mut self.counters),
            Mode::Deform {
                res,
                ports,
                hit_cycles,
                words,
                scratch,
                ..
            } => {
                close_group(words, scratch, res, *ports, *hit_cycles, &mut self.counters);
                self.counters.onchip_cycles
            }
        };
        self.dram.flush();
        finish_report(self.dram, onchip, self.counters)
    }
}

fn close_group(
    words: &mut Vec<(i64, i64)>,
    scratch: &mut Vec<usize>,
    res: &Residency,
    ports: usize,
    hit_cycles: u64,
    c: &mut Counters,
) {
    if words.is_empty() {
        return;
    }
    scratch.clear();
    scratch.extend(words.iter().map(|&(key, _)| res.lines.line_of(key)));
    let s = group_issue_slots(scratch, ports);
    c.issue_slots += s.slots;
    c.port_conflicts += s.conflicts();
    c.onchip_cycles += s.slots * hit_cycles;
    words.clear();
}

pub fn sim_line_buffer(trace: &AccessTrace, mem: &MemoryConfig) -> Result<MemoryStats, SimError> {
    if !mem.kind.is_buffered() {
        return Err(SimError::WrongMemoryKind {
            expected: "sim_line_buffer",
            got: mem.kind,
        });
    }
    mem.validate()?;
    let mut sim = LineBufferSim::new(mem, &trace.meta)?;
    for a in &trace.events {
        sim.access(a)?;
    }
    Ok(sim.finish())
}
