use std::fmt;
use std::io::{self, Write};
use std::ops::ControlFlow;

use crate::ops::{ConvSpec, OffsetField, Variant};
use crate::tensor::Shape;

use super::{EngineConfig, SimError};

pub const DUMP_HEADER: &str = "# seq kind address row group";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AccessKind {
    InputRead,
    WeightRead,
    OutputWrite,
    OffsetRead,
}

impl AccessKind {
    pub(crate) const COUNT: usize = 4;

    pub(crate) fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            AccessKind::InputRead => "input-read",
            AccessKind::WeightRead => "weight-read",
            AccessKind::OutputWrite => "output-write",
            AccessKind::OffsetRead => "offset-read",
        }
    }
}

impl fmt::Display for AccessKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One element-sized memory event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Access {
    pub kind: AccessKind,
    /// Byte address; meaningless when `padding` is set.
    pub address: u64,
    pub batch: u32,
    /// Source image row for input reads, output row for offsets and outputs.
    pub row: i64,
    pub col: i64,
    /// Cycle-group id: one output position times one ic group.
    pub group: u64,
    /// Input read that falls in the zero padding; never reaches memory.
    pub padding: bool,
}

impl Access {
    pub fn is_input(&self) -> bool {
        self.kind == AccessKind::InputRead
    }

    /// Input read that touches memory.
    pub fn is_memory_input(&self) -> bool {
        self.kind == AccessKind::InputRead && !self.padding
    }
}

/// Byte layout of the accelerator's DRAM image. Feature maps, outputs and
/// offsets are stored channels-last so one pixel's channel group is a
/// contiguous vector; weights keep `(oc, ic, k, k)` order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AddressMap {
    pub input: Shape,
    pub out_h: usize,
    pub out_w: usize,
    pub out_c: usize,
    pub offsets_per_position: usize,
    pub elem_bytes: u64,
}

const REGION: u64 = 1 << 40;

impl AddressMap {
    pub const INPUT_BASE: u64 = 0;
    pub const WEIGHT_BASE: u64 = REGION;
    pub const OUTPUT_BASE: u64 = 2 * REGION;
    pub const OFFSET_BASE: u64 = 3 * REGION;

    pub fn input(&self, n: usize, y: usize, x: usize, c: usize) -> u64 {
        let s = self.input;
        let idx = ((n * s.h + y) * s.w + x) * s.c + c;
        Self::INPUT_BASE + idx as u64 * self.elem_bytes
    }

    /// Inverse of [`AddressMap::input`]: `(n, y, x, c)`.
    pub fn decode_input(&self, addr: u64) -> Option<(usize, usize, usize, usize)> {
        let s = self.input;
        let off = addr.checked_sub(Self::INPUT_BASE)?;
        if off % self.elem_bytes != 0 {
            return None;
        }
        let mut idx = (off / self.elem_bytes) as usize;
        if idx >= s.len() {
            return None;
        }
        let c = idx % s.c;
        idx /= s.c;
        let x = idx % s.w;
        idx /= s.w;
        let y = idx % s.h;
        Some((idx / s.h, y, x, c))
    }

    pub fn weight(&self, idx: usize) -> u64 {
        Self::WEIGHT_BASE + idx as u64 * self.elem_bytes
    }

    pub fn output(&self, n: usize, i: usize, j: usize, o: usize) -> u64 {
        let idx = ((n * self.out_h + i) * self.out_w + j) * self.out_c + o;
        Self::OUTPUT_BASE + idx as u64 * self.elem_bytes
    }

    pub fn offset(&self, n: usize, i: usize, j: usize, t: usize) -> u64 {
        let idx = ((n * self.out_h + i) * self.out_w + j) * self.offsets_per_position + t;
        Self::OFFSET_BASE + idx as u64 * self.elem_bytes
    }

    /// Bytes of one full image row (all channels).
    pub fn row_bytes(&self) -> u64 {
        (self.input.w * self.input.c) as u64 * self.elem_bytes
    }
}

/// Static facts about a trace, shared by the simulators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceMeta {
    pub spec: ConvSpec,
    pub engine: EngineConfig,
    pub map: AddressMap,
    /// Non-deformable sampling; served by the engine's sliding window.
    pub regular: bool,
    /// Range of `sample_row - i * stride` over the trace.
    pub row_reach: (i64, i64),
    pub col_reach: (i64, i64),
    pub ic_groups: usize,
}

impl TraceMeta {
    /// Inclusive `[lo, hi]` image rows whose every potential reader exists,
    /// or `None` if that range is empty.
    pub fn interior_rows(&self) -> Option<(i64, i64)> {
        let (oh, _) = self.spec.out_hw();
        interior(self.row_reach, oh, self.spec.stride, self.spec.in_shape.h)
    }

    pub fn interior_cols(&self) -> Option<(i64, i64)> {
        let (_, ow) = self.spec.out_hw();
        interior(self.col_reach, ow, self.spec.stride, self.spec.in_shape.w)
    }
}

fn interior(reach: (i64, i64), outs: usize, stride: usize, extent: usize) -> Option<(i64, i64)> {
    let lo = reach.1.max(0);
    let hi = ((outs as i64 - 1) * stride as i64 + reach.0).min(extent as i64 - 1);
    (lo <= hi).then_some((lo, hi))
}

/// A fully materialized trace. Only sensible for small layers; the
/// simulators consume [`TraceGenerator`] directly.
#[derive(Debug, Clone, PartialEq)]
pub struct AccessTrace {
    pub meta: TraceMeta,
    pub events: Vec<Access>,
}

impl AccessTrace {
    pub fn input_reads(&self) -> impl Iterator<Item = &Access> {
        self.events.iter().filter(|a| a.is_input())
    }

    pub fn count(&self, kind: AccessKind) -> usize {
        self.events.iter().filter(|a| a.kind == kind).count()
    }

    /// Writes the header plus the first `limit` events.
    pub fn dump(&self, out: &mut impl Write, limit: usize) -> io::Result<()> {
        writeln!(out, "{DUMP_HEADER}")?;
        for (seq, a) in self.events.iter().take(limit).enumerate() {
            write_event(out, seq, a)?;
        }
        Ok(())
    }
}

pub(crate) fn write_event(out: &mut impl Write, seq: usize, a: &Access) -> io::Result<()> {
    if a.padding {
        writeln!(out, "{seq} {} - {} {}", a.kind, a.row, a.group)
    } else {
        writeln!(out, "{seq} {} {:#x} {} {}", a.kind, a.address, a.row, a.group)
    }
}

/// Sampling rule after rounding/clamping, resolved once per trace.
#[derive(Clone, Copy)]
enum Sampler {
    Regular { dilation: i64 },
    Full { bound: Option<u32> },
    Square { bound: u32 },
}

/// Lazily enumerates the access trace of one convolution in
/// output-stationary order:
///
/// ```text
/// for output position (row-major):
///   offset reads
///   for ic group:  k*k taps x group channels of input reads
///   weight reads (first position of each tile of output rows)
///   output writes
/// ```
pub struct TraceGenerator<'a> {
    meta: TraceMeta,
    off: Option<&'a OffsetField>,
    sampler: Sampler,
}

impl<'a> TraceGenerator<'a> {
    pub fn new(spec: &ConvSpec, off: Option<&'a OffsetField>, engine: &EngineConfig) -> Result<Self, SimError> {
        spec.validate()?;
        engine.validate()?;
        let sampler = match spec.variant {
            Variant::Standard | Variant::Dilated(_) => Sampler::Regular {
                dilation: spec.dilation() as i64,
            },
            Variant::DeformBilinear => return Err(SimError::BilinearUnsupported),
            Variant::DeformRounded => Sampler::Full { bound: None },
            Variant::DeformBounded(n) => Sampler::Full { bound: Some(n) },
            Variant::DeformSquare(n) => Sampler::Square { bound: n },
        };
        let off = match spec.variant.offset_layout() {
            Some(layout) => {
                let f = off.ok_or(SimError::MissingOffsets(spec.variant))?;
                f.check(spec, layout)?;
                if !f.is_integral() {
                    return Err(SimError::FractionalOffsets(spec.variant));
                }
                Some(f)
            }
            None => None,
        };
        let (oh, ow) = spec.out_hw();
        let map = AddressMap {
            input: spec.in_shape,
            out_h: oh,
            out_w: ow,
            out_c: spec.oc,
            offsets_per_position: off.map_or(0, |f| f.values_per_position()),
            elem_bytes: engine.elem_bytes,
        };
        let (row_reach, col_reach) = reach(spec, off, sampler);
        let meta = TraceMeta {
            spec: *spec,
            engine: *engine,
            map,
            regular: matches!(sampler, Sampler::Regular { .. }),
            row_reach,
            col_reach,
            ic_groups: spec.ic().div_ceil(engine.ic_parallel),
        };
        Ok(Self { meta, off, sampler })
    }

    pub fn meta(&self) -> &TraceMeta {
        &self.meta
    }

    /// Feeds every event to `f` in trace order, stopping early on `Break`.
    pub fn visit(&self, mut f: impl FnMut(&Access) -> ControlFlow<()>) {
        let _ = self.walk(&mut f);
    }

    pub fn collect(&self) -> AccessTrace {
        let mut events = Vec::new();
        self.visit(|a| {
            events.push(*a);
            ControlFlow::Continue(())
        });
        AccessTrace {
            meta: self.meta,
            events,
        }
    }

    /// Header plus the first `limit` events, without materializing the rest.
    pub fn dump(&self, out: &mut impl Write, limit: usize) -> io::Result<()> {
        writeln!(out, "{DUMP_HEADER}")?;
        let mut seq = 0;
        let mut result = Ok(());
        if limit > 0 {
            self.visit(|a| {
                result = write_event(out, seq, a);
                seq += 1;
                if result.is_err() || seq >= limit {
                    ControlFlow::Break(())
                } else {
                    ControlFlow::Continue(())
                }
            });
        }
        result
    }

    fn walk(&self, f: &mut impl FnMut(&Access) -> ControlFlow<()>) -> ControlFlow<()> {
        let m = &self.meta;
        let spec = &m.spec;
        let s = spec.in_shape;
        let (oh, ow) = spec.out_hw();
        let taps = spec.taps();
        let icp = m.engine.ic_parallel;
        let tile = if m.engine.tile_rows == 0 {
            oh
        } else {
            m.engine.tile_rows
        };
        let weights = spec.weight_shape().len();
        let vpp = m.map.offsets_per_position;
        let mut pos = vec![(0i64, 0i64); taps];
        let mut group = 0u64;

        for n in 0..s.n {
            for i in 0..oh {
                for j in 0..ow {
                    for t in 0..vpp {
                        let a = plain(AccessKind::OffsetRead, m.map.offset(n, i, j, t), n, i, j, group);
                        f(&a)?;
                    }
                    self.positions(n, i, j, &mut pos);
                    for c0 in (0..s.c).step_by(icp) {
                        let c1 = (c0 + icp).min(s.c);
                        for &(y, x) in &pos {
                            let inside = y >= 0 && x >= 0 && (y as usize) < s.h && (x as usize) < s.w;
                            for c in c0..c1 {
                                let address = if inside {
                                    m.map.input(n, y as usize, x as usize, c)
                                } else {
                                    0
                                };
                                f(&Access {
                                    kind: AccessKind::InputRead,
                                    address,
                                    batch: n as u32,
                                    row: y,
                                    col: x,
                                    group,
                                    padding: !inside,
                                })?;
                            }
                        }
                        group += 1;
                    }
                    let last = group.saturating_sub(1);
                    if j == 0 && i % tile == 0 {
                        for w in 0..weights {
                            f(&plain(AccessKind::WeightRead, m.map.weight(w), n, i, 0, last))?;
                        }
                    }
                    for o in 0..spec.oc {
                        f(&plain(AccessKind::OutputWrite, m.map.output(n, i, j, o), n, i, j, last))?;
                    }
                }
            }
        }
        ControlFlow::Continue(())
    }

    /// Sampling positions `(y, x)` of every tap of output `(n, i, j)`.
    fn positions(&self, n: usize, i: usize, j: usize, pos: &mut [(i64, i64)]) {
        let spec = &self.meta.spec;
        let k = spec.k;
        let s = spec.stride as i64;
        let pad = spec.padding as i64;
        let (bi, bj) = (i as i64 * s - pad, j as i64 * s - pad);
        match self.sampler {
            Sampler::Regular { dilation } => {
                for u in 0..k {
                    for v in 0..k {
                        pos[u * k + v] = (bi + u as i64 * dilation, bj + v as i64 * dilation);
                    }
                }
            }
            Sampler::Full { bound } => {
                let f = self.off.expect("checked in new");
                for u in 0..k {
                    for v in 0..k {
                        let t = u * k + v;
                        let (dy, dx) = f.full_at(n, t, i, j);
                        let (dy, dx) = (clamp(dy, bound), clamp(dx, bound));
                        pos[t] = (bi + u as i64 + dy, bj + v as i64 + dx);
                    }
                }
            }
            Sampler::Square { bound } => {
                let f = self.off.expect("checked in new");
                let d = clamp(f.square_at(n, i, j), Some(bound));
                let half = (k / 2) as i64;
                for u in 0..k {
                    for v in 0..k {
                        pos[u * k + v] = (bi + half + d * (u as i64 - half), bj + half + d * (v as i64 - half));
                    }
                }
            }
        }
    }
}

fn plain(kind: AccessKind, address: u64, n: usize, i: usize, j: usize, group: u64) -> Access {
    Access {
        kind,
        address,
        batch: n as u32,
        row: i as i64,
        col: j as i64,
        group,
        padding: false,
    }
}

fn clamp(v: f64, bound: Option<u32>) -> i64 {
    let v = v as i64;
    match bound {
        Some(n) => v.clamp(0, n as i64),
        None => v,
    }
}

/// Row and column reach, `sample - base` extremes, over the actual field.
fn reach(spec: &ConvSpec, off: Option<&OffsetField>, sampler: Sampler) -> ((i64, i64), (i64, i64)) {
    let pad = spec.padding as i64;
    let k = spec.k as i64;
    match sampler {
        Sampler::Regular { dilation } => {
            let r = (-pad, (k - 1) * dilation - pad);
            (r, r)
        }
        Sampler::Full { bound } => {
            let f = off.expect("deformable trace has offsets");
            let t = f.tensor();
            let (mut ry, mut rx) = ((i64::MAX, i64::MIN), (i64::MAX, i64::MIN));
            for (idx, &v) in t.data().iter().enumerate() {
                let ch = (idx / t.shape().plane_len()) % t.shape().c;
                let d = clamp(v, bound);
                let r = if ch.is_multiple_of(2) { &mut ry } else { &mut rx };
                r.0 = r.0.min(d);
                r.1 = r.1.max(d);
            }
            let span = |r: (i64, i64)| (r.0 - pad, k - 1 - pad + r.1);
            (span(ry), span(rx))
        }
        Sampler::Square { bound } => {
            let f = off.expect("square trace has offsets");
            let dmax = f
                .tensor()
                .data()
                .iter()
                .map(|&v| clamp(v, Some(bound)))
                .max()
                .unwrap_or(0)
                .max(1);
            let half = k / 2;
            let r = (half - pad - dmax * half, half - pad + dmax * half);
            (r, r)
        }
    }
}

/// Materializes the whole trace.
pub fn gen_trace(spec: &ConvSpec, off: Option<&OffsetField>, engine: &EngineConfig) -> Result<AccessTrace, SimError> {
    Ok(TraceGenerator::new(spec, off, engine)?.collect())
}
