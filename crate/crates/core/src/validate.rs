//! Desk-scale self checks: oracle equivalence, degeneracy identities and
//! simulator invariants on small instances.

use std::ops::ControlFlow;

use crate::accel::{
    gen_trace, group_issue_slots, reuse_stats, sim_line_buffer, sim_llc, simulate, Access, AccessKind, Dram,
    DramConfig, EngineConfig, MemoryConfig, MemoryKind, TraceGenerator,
};
use crate::ops::{
    convolve, dequantize, flops_count, quantize_symmetric, ConvSpec, OffsetField, OffsetLayout, QuantSpec, Variant,
    Weights,
};
use crate::oracle::reference_conv;
use crate::rng::XorShift64Star;
use crate::tensor::{tensor_close, SeedSpec, Shape, Tensor};

/// Deliberate defects for testing the harness itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Rounds offsets half-to-even instead of half-away-from-zero on one
    /// side of the rounding-commutation check.
    Rounding,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type Check = fn(Option<Fault>) -> Result<String, String>;

const CHECKS: &[(&str, Check)] = &[
    ("oracle_equivalence", oracle_equivalence),
    ("zero_offsets_equal_standard", zero_offsets),
    ("square_constant_equals_dilated", square_dilated),
    ("rounding_commutation", rounding_commutation),
    ("bound_clamp_idempotent", clamp_idempotent),
    ("trace_count_contract", trace_counts),
    ("dram_burst_law", burst_law),
    ("llc_single_line_residency", llc_residency),
    ("buffer_single_fill", buffer_single_fill),
    ("square_three_lines_per_group", square_lines),
    ("simulator_determinism", determinism),
    ("gops_consistency", gops_consistency),
    ("flops_table_layer", flops_layer),
    ("reuse_nine_uses", reuse_nine),
    ("quantize_roundtrip", quantize_roundtrip),
];

pub fn check_names() -> Vec<&'static str> {
    CHECKS.iter().map(|(n, _)| *n).collect()
}

/// Runs every check in order.
pub fn run_checks(fault: Option<Fault>) -> Vec<CheckResult> {
    CHECKS
        .iter()
        .map(|(name, f)| {
            let r = std::panic::catch_unwind(|| f(fault)).unwrap_or_else(|_| Err("panicked".into()));
            match r {
                Ok(detail) => CheckResult {
                    name,
                    passed: true,
                    detail,
                },
                Err(detail) => CheckResult {
                    name,
                    passed: false,
                    detail,
                },
            }
        })
        .collect()
}

/// One random small convolution: input, weights, offsets (if deformable)
/// and spec. Offsets are real-valued; `ties` makes them multiples of 0.5.
pub struct Instance {
    pub x: Tensor,
    pub w: Weights,
    pub off: Option<OffsetField>,
    pub spec: ConvSpec,
}

pub fn random_variant(rng: &mut XorShift64Star) -> Variant {
    match rng.below(6) {
        0 => Variant::Standard,
        1 => Variant::Dilated(1 + rng.below(2) as usize),
        2 => Variant::DeformBilinear,
        3 => Variant::DeformRounded,
        4 => Variant::DeformBounded(1 + rng.below(7) as u32),
        _ => Variant::DeformSquare(1 + rng.below(7) as u32),
    }
}

/// `n, ic, oc <= 4`, `h, w <= 8`, `k = 3`, random stride/padding/depthwise.
pub fn random_instance(rng: &mut XorShift64Star, variant: Variant, ties: bool) -> Instance {
    loop {
        let n = 1 + rng.below(4) as usize;
        let ic = 1 + rng.below(4) as usize;
        let h = 1 + rng.below(8) as usize;
        let w = 1 + rng.below(8) as usize;
        let shape = Shape::new(n, ic, h, w).expect("small shape");
        let base = if rng.below(3) == 0 {
            ConvSpec::depthwise(shape, 3)
        } else {
            ConvSpec::new(shape, 1 + rng.below(4) as usize, 3)
        };
        let spec = base
            .with_variant(variant)
            .with_stride(1 + rng.below(2) as usize)
            .with_padding(rng.below(3) as usize);
        if spec.validate().is_err() {
            continue;
        }
        let seed = rng.next_u64();
        let x = Tensor::random(shape, SeedSpec::uniform(seed, -1.0, 1.0)).expect("input");
        let w =
            Weights::new(Tensor::random(spec.weight_shape(), SeedSpec::uniform(seed ^ 1, -1.0, 1.0)).expect("weights"));
        let off = spec.variant.offset_layout().map(|layout| {
            let shape = OffsetField::zeros(&spec, layout)
                .expect("offset shape")
                .tensor()
                .shape();
            let (lo, hi) = match variant {
                Variant::DeformSquare(b) => (-1.0, b as f64 + 1.0),
                Variant::DeformBounded(b) => (-1.5, b as f64 + 1.5),
                _ => (-2.5, 2.5),
            };
            let mut t = Tensor::random(shape, SeedSpec::uniform(seed ^ 2, lo, hi)).expect("offsets");
            if ties {
                t = t.map(|v| (v * 2.0).round() / 2.0);
            }
            OffsetField::new(layout, t).expect("offset field")
        });
        return Instance { x, w, off, spec };
    }
}

fn close(a: &Tensor, b: &Tensor, what: &str) -> Result<(), String> {
    let c = tensor_close(a, b, 1e-12, 0.0).map_err(|e| e.to_string())?;
    match c.first_mismatch {
        None => Ok(()),
        Some(m) => Err(format!("{what}: element {} differs ({} vs {})", m.index, m.a, m.b)),
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn oracle_equivalence(_: Option<Fault>) -> Result<String, String> {
    let mut rng = XorShift64Star::new(11);
    let count = 60;
    for i in 0..count {
        let v = random_variant(&mut rng);
        let inst = random_instance(&mut rng, v, i % 4 == 0);
        let got = convolve(&inst.x, &inst.w, inst.off.as_ref(), &inst.spec).map_err(err)?;
        let want = reference_conv(&inst.x, &inst.w, inst.off.as_ref(), &inst.spec);
        close(&got, &want, &format!("instance {i} ({v})"))?;
    }
    Ok(format!("{count} instances"))
}

fn zero_offsets(_: Option<Fault>) -> Result<String, String> {
    let mut rng = XorShift64Star::new(12);
    for _ in 0..20 {
        let inst = random_instance(&mut rng, Variant::Standard, false);
        let want = convolve(&inst.x, &inst.w, None, &inst.spec).map_err(err)?;
        for v in [
            Variant::DeformBilinear,
            Variant::DeformRounded,
            Variant::DeformBounded(3),
        ] {
            let spec = inst.spec.with_variant(v);
            let zero = OffsetField::zeros(&spec, OffsetLayout::Full).map_err(err)?;
            let got = convolve(&inst.x, &inst.w, Some(&zero), &spec).map_err(err)?;
            if got != want {
                return Err(format!("{v} with zero offsets differs from standard"));
            }
        }
    }
    Ok("20 instances, exact".into())
}

fn square_dilated(_: Option<Fault>) -> Result<String, String> {
    let mut rng = XorShift64Star::new(13);
    for _ in 0..20 {
        let d = 1 + rng.below(3) as usize;
        let inst = random_instance(&mut rng, Variant::Dilated(d), false);
        // square taps sit at center +- d, dilated ones at base + u*d
        let pad = inst.spec.padding + (d - 1);
        let dil = inst.spec.with_padding(pad);
        let sq = inst.spec.with_variant(Variant::DeformSquare(7));
        if dil.validate().is_err() || sq.validate().is_err() {
            continue;
        }
        let field = OffsetField::constant(&sq, OffsetLayout::Square, (d as f64, 0.0)).map_err(err)?;
        let got = convolve(&inst.x, &inst.w, Some(&field), &sq).map_err(err)?;
        let want = convolve(&inst.x, &inst.w, None, &dil).map_err(err)?;
        close(&got, &want, &format!("d = {d}"))?;
    }
    Ok("20 instances".into())
}

fn rounding_commutation(fault: Option<Fault>) -> Result<String, String> {
    let mut rng = XorShift64Star::new(14);
    let rule: fn(f64) -> f64 = match fault {
        Some(Fault::Rounding) => f64::round_ties_even,
        None => crate::ops::round_half_away,
    };
    for i in 0..20 {
        let inst = random_instance(&mut rng, Variant::DeformRounded, true);
        let off = inst.off.as_ref().expect("deformable");
        let got = convolve(&inst.x, &inst.w, Some(off), &inst.spec).map_err(err)?;
        let rounded = off.map(rule);
        let bil = inst.spec.with_variant(Variant::DeformBilinear);
        let want = convolve(&inst.x, &inst.w, Some(&rounded), &bil).map_err(err)?;
        close(&got, &want, &format!("instance {i}"))?;
    }
    Ok("20 instances with half-integer ties".into())
}

fn clamp_idempotent(_: Option<Fault>) -> Result<String, String> {
    let mut rng = XorShift64Star::new(15);
    for _ in 0..20 {
        let b = 1 + rng.below(7) as u32;
        let inst = random_instance(&mut rng, Variant::DeformBounded(b), false);
        let off = inst.off.as_ref().expect("deformable");
        let once = crate::ops::clamp_offsets(&crate::ops::round_offsets(off), b);
        if crate::ops::clamp_offsets(&once, b) != once {
            return Err("clamp is not idempotent".into());
        }
        let a = convolve(&inst.x, &inst.w, Some(off), &inst.spec).map_err(err)?;
        let c = convolve(&inst.x, &inst.w, Some(&once), &inst.spec).map_err(err)?;
        if a != c {
            return Err("pre-clamped field changes the bounded output".into());
        }
    }
    Ok("20 instances".into())
}

fn trace_counts(_: Option<Fault>) -> Result<String, String> {
    let spec = ConvSpec::new(Shape::new(1, 1, 4, 4).map_err(err)?, 1, 3);
    let t = gen_trace(&spec, None, &EngineConfig::full()).map_err(err)?;
    let (i, o) = (t.count(AccessKind::InputRead), t.count(AccessKind::OutputWrite));
    if (i, o) != (144, 16) {
        return Err(format!("{i} input reads, {o} output writes"));
    }
    Ok("144 input reads, 16 output writes".into())
}

fn burst_law(_: Option<Fault>) -> Result<String, String> {
    let cfg = DramConfig {
        max_burst_beats: 16,
        bus_bytes: 8,
        ..DramConfig::default()
    };
    for beats in [1u64, 15, 16, 17, 100, 1000] {
        let mut d = Dram::new(cfg);
        for k in 0..beats * 2 {
            d.access(AccessKind::InputRead, k * 4, 4);
        }
        d.flush();
        if d.transactions != beats.div_ceil(16) || d.beats != beats {
            return Err(format!("{beats} beats gave {} transactions", d.transactions));
        }
    }
    Ok("ceil(L / max_burst) for 6 run lengths".into())
}

fn llc_residency(_: Option<Fault>) -> Result<String, String> {
    let spec = ConvSpec::new(Shape::new(1, 1, 4, 4).map_err(err)?, 1, 3).with_variant(Variant::DeformRounded);
    let zero = OffsetField::zeros(&spec, OffsetLayout::Full).map_err(err)?;
    let mut t = gen_trace(&spec, Some(&zero), &EngineConfig::full()).map_err(err)?;
    t.events = (0..1000u64)
        .map(|g| Access {
            kind: AccessKind::InputRead,
            address: 4 * (g % 16),
            batch: 0,
            row: 0,
            col: 0,
            group: g,
            padding: false,
        })
        .collect();
    let r = sim_llc(&t, &MemoryConfig::new(MemoryKind::Llc)).map_err(err)?;
    let c = r.counters;
    if (c.llc_misses, c.llc_hits) != (1, 999) {
        return Err(format!("{} misses, {} hits", c.llc_misses, c.llc_hits));
    }
    Ok("1 miss + 999 hits".into())
}

fn random_field(spec: &ConvSpec, layout: OffsetLayout, lo: i64, hi: i64, seed: u64) -> Result<OffsetField, String> {
    let shape = OffsetField::zeros(spec, layout).map_err(err)?.tensor().shape();
    OffsetField::new(
        layout,
        Tensor::random(shape, SeedSpec::integers(seed, lo, hi)).map_err(err)?,
    )
    .map_err(err)
}

fn buffer_single_fill(_: Option<Fault>) -> Result<String, String> {
    for (variant, layout, engine) in [
        (Variant::DeformBounded(7), OffsetLayout::Full, EngineConfig::full()),
        (
            Variant::DeformSquare(7),
            OffsetLayout::Square,
            EngineConfig::depthwise(),
        ),
    ] {
        let shape = Shape::new(1, 16, 24, 12).map_err(err)?;
        let base = if layout == OffsetLayout::Square {
            ConvSpec::depthwise(shape, 3)
        } else {
            ConvSpec::new(shape, 8, 3)
        };
        let spec = base.with_variant(variant);
        let off = random_field(&spec, layout, 0, 7, 5)?;
        let t = gen_trace(&spec, Some(&off), &engine).map_err(err)?;
        let distinct: std::collections::HashSet<u64> =
            t.input_reads().filter(|a| !a.padding).map(|a| a.address).collect();
        let c = sim_line_buffer(&t, &MemoryConfig::new(MemoryKind::LineBuffer))
            .map_err(err)?
            .counters;
        if c.buffer_fills != distinct.len() as u64 || c.buffer_hits + c.buffer_fills != c.memory_input_reads() {
            return Err(format!(
                "{variant}: {} fills for {} addresses",
                c.buffer_fills,
                distinct.len()
            ));
        }
    }
    Ok("bounded and square traces".into())
}

fn square_lines(_: Option<Fault>) -> Result<String, String> {
    let spec = ConvSpec::depthwise(Shape::new(1, 16, 20, 20).map_err(err)?, 3)
        .with_padding(0)
        .with_variant(Variant::DeformSquare(4));
    let off = random_field(&spec, OffsetLayout::Square, 1, 4, 6)?;
    let gen = TraceGenerator::new(&spec, Some(&off), &EngineConfig::depthwise()).map_err(err)?;
    let lines = 2 * 4 + 1;
    let mut groups: std::collections::BTreeMap<u64, Vec<(i64, i64)>> = Default::default();
    let mut clipped = std::collections::HashSet::new();
    gen.visit(|a| {
        if a.is_memory_input() {
            groups.entry(a.group).or_default().push((a.row, a.col));
        } else if a.is_input() {
            clipped.insert(a.group);
        }
        ControlFlow::Continue(())
    });
    groups.retain(|g, _| !clipped.contains(g));
    if groups.is_empty() {
        return Err("no unclipped groups".into());
    }
    for (g, mut words) in groups {
        words.sort_unstable();
        words.dedup();
        let mut touched: Vec<usize> = words.iter().map(|&(r, _)| r.rem_euclid(lines) as usize).collect();
        let slots = group_issue_slots(&touched, 3);
        touched.sort_unstable();
        touched.dedup();
        if touched.len() != 3 || slots.slots != 3 {
            return Err(format!(
                "group {g} touches {} lines in {} slots",
                touched.len(),
                slots.slots
            ));
        }
    }
    Ok("every unclipped group: 3 lines, 3 slots".into())
}

fn determinism(_: Option<Fault>) -> Result<String, String> {
    let spec = ConvSpec::new(Shape::new(1, 16, 20, 20).map_err(err)?, 16, 3).with_variant(Variant::DeformRounded);
    let off = random_field(&spec, OffsetLayout::Full, -7, 7, 7)?;
    let eng = EngineConfig::full();
    for kind in [MemoryKind::DirectDram, MemoryKind::Llc] {
        let mem = MemoryConfig::new(kind);
        let a = simulate(&spec, Some(&off), &eng, &mem).map_err(err)?;
        let b = simulate(&spec, Some(&off), &eng, &mem).map_err(err)?;
        if a != b {
            return Err(format!("{kind} runs differ"));
        }
    }
    Ok("direct and llc repeat bit-identically".into())
}

fn gops_consistency(_: Option<Fault>) -> Result<String, String> {
    let spec = ConvSpec::depthwise(Shape::new(1, 32, 16, 16).map_err(err)?, 3).with_variant(Variant::DeformBounded(7));
    let off = random_field(&spec, OffsetLayout::Full, 0, 7, 8)?;
    for kind in [
        MemoryKind::DirectDram,
        MemoryKind::Llc,
        MemoryKind::LineBuffer,
        MemoryKind::LineBufferMultiPort,
    ] {
        let r = simulate(&spec, Some(&off), &EngineConfig::depthwise(), &MemoryConfig::new(kind)).map_err(err)?;
        let ops = r.gops * r.latency_ms * 1e6;
        if (ops - r.total_ops as f64).abs() > 1e-3 * r.total_ops as f64 {
            return Err(format!("{kind}: gops*latency = {ops}, ops = {}", r.total_ops));
        }
    }
    Ok("4 memory kinds within 0.1%".into())
}

fn flops_layer(_: Option<Fault>) -> Result<String, String> {
    let full = ConvSpec::new(Shape::new(1, 256, 64, 64).map_err(err)?, 256, 3);
    let f = flops_count(&full).total;
    let d = flops_count(&ConvSpec::depthwise(full.in_shape, 3)).total;
    if f != 4_831_838_208 || d != 18_874_368 {
        return Err(format!("full {f}, depthwise {d}"));
    }
    Ok(format!("full {f}, depthwise {d}"))
}

fn reuse_nine(_: Option<Fault>) -> Result<String, String> {
    let spec = ConvSpec::new(Shape::new(1, 1, 24, 24).map_err(err)?, 1, 3);
    let t = gen_trace(&spec, None, &EngineConfig::full()).map_err(err)?;
    let m = reuse_stats(&t).map_err(err)?.mean_uses_per_input_address;
    if m != 9.0 {
        return Err(format!("mean {m}"));
    }
    Ok("standard stride 1: 9.0".into())
}

fn quantize_roundtrip(_: Option<Fault>) -> Result<String, String> {
    let x = Tensor::random(Shape::new(1, 4, 8, 8).map_err(err)?, SeedSpec::uniform(9, -3.0, 3.0)).map_err(err)?;
    let q = quantize_symmetric(&x, QuantSpec::new(8)).map_err(err)?;
    let back = dequantize(&q);
    let worst = x
        .data()
        .iter()
        .zip(back.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if worst > q.scale / 2.0 + 1e-12 {
        return Err(format!("error {worst} exceeds scale/2 = {}", q.scale / 2.0));
    }
    Ok(format!("max error {worst:.3e} <= scale/2"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        for r in run_checks(None) {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }

    #[test]
    fn rounding_fault_is_caught() {
        let r = run_checks(Some(Fault::Rounding));
        let failed: Vec<_> = r.iter().filter(|c| !c.passed).map(|c| c.name).collect();
        assert_eq!(failed, vec!["rounding_commutation"]);
    }
}
