use std::collections::HashMap;

use proptest::prelude::*;

use dcnsim_core::accel::{gen_trace, reuse_stats, AccessKind, Dram, DramConfig};
use dcnsim_core::ops::{clamp_offsets, round_offsets};
use dcnsim_core::oracle::reference_conv;
use dcnsim_core::rng::XorShift64Star;
use dcnsim_core::tensor::tensor_close;
use dcnsim_core::validate::{random_instance, random_variant};
use dcnsim_core::{
    convolve, simulate, ConvSpec, EngineConfig, MemoryConfig, MemoryKind, OffsetField, OffsetLayout, SeedSpec, Shape,
    Tensor, Variant, Weights,
};

fn int_field(spec: &ConvSpec, layout: OffsetLayout, lo: i64, hi: i64, seed: u64) -> OffsetField {
    let shape = OffsetField::zeros(spec, layout).unwrap().tensor().shape();
    OffsetField::new(layout, Tensor::random(shape, SeedSpec::integers(seed, lo, hi)).unwrap()).unwrap()
}

fn assert_close(a: &Tensor, b: &Tensor, rel: f64, abs: f64) -> Result<(), TestCaseError> {
    let c = tensor_close(a, b, rel, abs).unwrap();
    prop_assert!(c.close, "first mismatch {:?}", c.first_mismatch);
    Ok(())
}

/// A small simulator cell: spec, offsets and engine for a variant that the
/// accelerator accepts.
fn sim_cell(
    seed: u64,
    variant: Variant,
    depthwise: bool,
    h: usize,
    w: usize,
    ic: usize,
) -> (ConvSpec, Option<OffsetField>) {
    let shape = Shape::new(1, ic, h, w).unwrap();
    let base = if depthwise {
        ConvSpec::depthwise(shape, 3)
    } else {
        ConvSpec::new(shape, 8, 3)
    };
    let spec = base.with_padding(1).with_variant(variant);
    let off = variant.offset_layout().map(|layout| match variant {
        Variant::DeformRounded => int_field(&spec, layout, -7, 7, seed),
        Variant::DeformBounded(b) | Variant::DeformSquare(b) => int_field(&spec, layout, 0, b as i64, seed),
        _ => unreachable!(),
    });
    (spec, off)
}

fn sim_variant() -> impl Strategy<Value = Variant> {
    prop_oneof![
        Just(Variant::Standard),
        (1usize..3).prop_map(Variant::Dilated),
        Just(Variant::DeformRounded),
        (2u32..8).prop_map(Variant::DeformBounded),
        (1u32..8).prop_map(Variant::DeformSquare),
    ]
}

fn memory_for(variant: Variant) -> Vec<MemoryKind> {
    match variant {
        Variant::DeformRounded => vec![MemoryKind::DirectDram, MemoryKind::Llc],
        _ => vec![
            MemoryKind::DirectDram,
            MemoryKind::Llc,
            MemoryKind::LineBuffer,
            MemoryKind::LineBufferMultiPort,
        ],
    }
}

fn buffered(kind: MemoryKind, variant: Variant) -> MemoryConfig {
    let mut m = MemoryConfig::new(kind);
    if let Some(b) = variant.bound() {
        m.linebuffer.bound = b;
    }
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matches_oracle(seed in any::<u64>()) {
        let mut rng = XorShift64Star::new(seed);
        let v = random_variant(&mut rng);
        let inst = random_instance(&mut rng, v, seed % 3 == 0);
        let got = convolve(&inst.x, &inst.w, inst.off.as_ref(), &inst.spec).unwrap();
        let want = reference_conv(&inst.x, &inst.w, inst.off.as_ref(), &inst.spec);
        assert_close(&got, &want, 1e-12, 0.0)?;
    }

    #[test]
    fn linear_in_input(seed in any::<u64>(), a in -3.0f64..3.0) {
        let mut rng = XorShift64Star::new(seed);
        let v = random_variant(&mut rng);
        let inst = random_instance(&mut rng, v, false);
        let x2 = Tensor::random(inst.x.shape(), SeedSpec::uniform(seed ^ 0xA, -1.0, 1.0)).unwrap();
        let mix: Vec<f64> = inst.x.data().iter().zip(x2.data()).map(|(p, q)| a * p + q).collect();
        let mix = Tensor::from_vec(inst.x.shape(), mix).unwrap();
        let f = |x: &Tensor| convolve(x, &inst.w, inst.off.as_ref(), &inst.spec).unwrap();
        let (y1, y2) = (f(&inst.x), f(&x2));
        let sum: Vec<f64> = y1.data().iter().zip(y2.data()).map(|(p, q)| a * p + q).collect();
        let sum = Tensor::from_vec(y1.shape(), sum).unwrap();
        assert_close(&f(&mix), &sum, 1e-9, 1e-12)?;
    }

    #[test]
    fn clamp_is_idempotent_and_bounded(seed in any::<u64>(), bound in 1u32..8) {
        let mut rng = XorShift64Star::new(seed);
        let inst = random_instance(&mut rng, Variant::DeformBounded(bound), false);
        let off = inst.off.unwrap();
        let once = clamp_offsets(&round_offsets(&off), bound);
        prop_assert_eq!(&clamp_offsets(&once, bound), &once);
        prop_assert!(once.tensor().data().iter().all(|&v| (0.0..=bound as f64).contains(&v) && v.fract() == 0.0));
    }

    #[test]
    fn depthwise_embeds_in_full(seed in any::<u64>(), which in 0usize..4) {
        let variant = [Variant::Standard, Variant::DeformRounded, Variant::DeformBounded(3), Variant::DeformSquare(3)][which];
        let mut rng = XorShift64Star::new(seed);
        let inst = random_instance(&mut rng, variant, false);
        let dw = ConvSpec::depthwise(inst.spec.in_shape, 3)
            .with_variant(variant)
            .with_stride(inst.spec.stride)
            .with_padding(inst.spec.padding);
        let ic = dw.ic();
        let wd = Tensor::random(dw.weight_shape(), SeedSpec::uniform(seed ^ 5, -1.0, 1.0)).unwrap();
        let full = ConvSpec::new(dw.in_shape, ic, 3)
            .with_variant(variant)
            .with_stride(dw.stride)
            .with_padding(dw.padding);
        let mut wf = Tensor::zeros(full.weight_shape()).unwrap();
        for c in 0..ic {
            for u in 0..3 {
                for v in 0..3 {
                    let i = full.weight_shape().index(c, c, u, v);
                    wf.data_mut()[i] = wd.at(c, 0, u, v);
                }
            }
        }
        let off = variant.offset_layout().map(|l| {
            let (lo, hi) = if l == OffsetLayout::Square { (0, 3) } else { (-2, 2) };
            int_field(&dw, l, lo, hi, seed ^ 6)
        });
        let a = convolve(&inst.x, &Weights::new(wd), off.as_ref(), &dw).unwrap();
        let b = convolve(&inst.x, &Weights::new(wf), off.as_ref(), &full).unwrap();
        assert_close(&a, &b, 1e-12, 0.0)?;
    }

    #[test]
    fn burst_law(len in 1u64..2000, max_burst in 1u64..128, bus_pow in 2u32..7) {
        let bus = 1u64 << bus_pow;
        let cfg = DramConfig { max_burst_beats: max_burst, bus_bytes: bus, ..DramConfig::default() };
        let mut d = Dram::new(cfg);
        let per_beat = bus / 4;
        for k in 0..len * per_beat {
            d.access(AccessKind::InputRead, k * 4, 4);
        }
        d.flush();
        prop_assert_eq!(d.beats, len);
        prop_assert_eq!(d.transactions, len.div_ceil(max_burst));
        prop_assert_eq!(d.cycles, d.transactions * cfg.first_access_cycles + len * cfg.per_beat_cycles);
    }

    #[test]
    fn conservation_and_determinism(
        seed in any::<u64>(),
        variant in sim_variant(),
        depthwise in any::<bool>(),
        h in 3usize..14,
        w in 3usize..14,
        ic in 1usize..20,
    ) {
        let (spec, off) = sim_cell(seed, variant, depthwise, h, w, ic);
        let engine = EngineConfig::for_spec(&spec);
        let trace = gen_trace(&spec, off.as_ref(), &engine).unwrap();
        let reads = trace.count(AccessKind::InputRead) as u64;
        for kind in memory_for(variant) {
            let mem = buffered(kind, variant);
            let r = simulate(&spec, off.as_ref(), &engine, &mem).unwrap();
            prop_assert_eq!(&r, &simulate(&spec, off.as_ref(), &engine, &mem).unwrap());
            let c = r.counters;
            prop_assert_eq!(c.input_reads, reads);
            let mir = c.memory_input_reads();
            let deform = variant.is_deformable();
            if !deform || kind.is_buffered() {
                prop_assert_eq!(c.buffer_hits + c.buffer_fills, mir);
            }
            if deform && kind == MemoryKind::Llc {
                prop_assert_eq!(c.llc_hits + c.llc_misses, mir);
            }
            prop_assert_eq!(r.memory_cycles, r.dram_cycles + r.onchip_cycles);
            prop_assert_eq!(r.total_cycles, r.compute_cycles.max(r.memory_cycles) + engine.pipeline_fill_cycles);
            let ops = r.gops * r.latency_ms * 1e6;
            prop_assert!((ops - r.total_ops as f64).abs() <= 1e-3 * r.total_ops as f64);
        }
    }

    #[test]
    fn buffered_fills_each_address_once(
        seed in any::<u64>(),
        bound in 2u32..8,
        square in any::<bool>(),
        h in 3usize..16,
        w in 3usize..16,
    ) {
        let variant = if square { Variant::DeformSquare(bound) } else { Variant::DeformBounded(bound) };
        let (spec, off) = sim_cell(seed, variant, square, h, w, 16);
        let engine = EngineConfig::for_spec(&spec);
        let trace = gen_trace(&spec, off.as_ref(), &engine).unwrap();
        let distinct: std::collections::HashSet<u64> =
            trace.input_reads().filter(|a| !a.padding).map(|a| a.address).collect();
        for kind in [MemoryKind::LineBuffer, MemoryKind::LineBufferMultiPort] {
            let r = simulate(&spec, off.as_ref(), &engine, &buffered(kind, variant)).unwrap();
            prop_assert_eq!(r.counters.buffer_fills, distinct.len() as u64);
        }
    }

    #[test]
    fn more_ports_never_slower(
        seed in any::<u64>(),
        bound in 2u32..8,
        square in any::<bool>(),
        depthwise in any::<bool>(),
        h in 3usize..16,
        w in 3usize..16,
    ) {
        let variant = if square { Variant::DeformSquare(bound) } else { Variant::DeformBounded(bound) };
        let (spec, off) = sim_cell(seed, variant, depthwise, h, w, 16);
        let engine = EngineConfig::for_spec(&spec);
        let mut one = buffered(MemoryKind::LineBuffer, variant);
        one.linebuffer.ports = 1;
        let mut three = one;
        three.linebuffer.ports = 3;
        let a = simulate(&spec, off.as_ref(), &engine, &one).unwrap();
        let b = simulate(&spec, off.as_ref(), &engine, &three).unwrap();
        prop_assert!(b.latency_ms <= a.latency_ms, "3 ports {} > 1 port {}", b.latency_ms, a.latency_ms);
        prop_assert!(b.counters.issue_slots <= a.counters.issue_slots);
    }

    // One element per bus word and per line, no burst merging: every direct
    // access is one transaction, every LLC access a hit or that transaction.
    #[test]
    fn llc_never_slower_than_direct(
        seed in any::<u64>(),
        depthwise in any::<bool>(),
        h in 3usize..16,
        w in 3usize..16,
        ic in 1usize..33,
        hit in 1u64..10,
    ) {
        let (spec, off) = sim_cell(seed, Variant::DeformRounded, depthwise, h, w, ic);
        let engine = EngineConfig::for_spec(&spec);
        let mut direct = MemoryConfig::new(MemoryKind::DirectDram);
        direct.dram.bus_bytes = engine.elem_bytes;
        direct.dram.max_burst_beats = 1;
        let mut llc = direct;
        llc.kind = MemoryKind::Llc;
        llc.llc.line_bytes = engine.elem_bytes;
        llc.llc.hit_cycles = hit;
        prop_assume!(hit < llc.dram.first_access_cycles);
        let a = simulate(&spec, off.as_ref(), &engine, &direct).unwrap();
        let b = simulate(&spec, off.as_ref(), &engine, &llc).unwrap();
        prop_assert!(b.latency_ms <= a.latency_ms, "llc {} > direct {}", b.latency_ms, a.latency_ms);
    }

    #[test]
    fn reuse_matches_window_count(h in 6usize..24, w in 6usize..24, stride in 1usize..3, padding in 0usize..2) {
        let spec = ConvSpec::new(Shape::new(1, 1, h, w).unwrap(), 1, 3).with_stride(stride).with_padding(padding);
        let trace = gen_trace(&spec, None, &EngineConfig::full()).unwrap();
        let stats = reuse_stats(&trace).unwrap();
        let (oh, ow) = spec.out_hw();
        // windows covering pixel (y, x), counted independently of the trace
        let mut counts: HashMap<(i64, i64), u64> = HashMap::new();
        for i in 0..oh as i64 {
            for j in 0..ow as i64 {
                for u in 0..3 {
                    for v in 0..3 {
                        let y = i * stride as i64 - padding as i64 + u;
                        let x = j * stride as i64 - padding as i64 + v;
                        *counts.entry((y, x)).or_default() += 1;
                    }
                }
            }
        }
        let rows = trace.meta.interior_rows().unwrap();
        let cols = trace.meta.interior_cols().unwrap();
        let mut total = 0;
        let mut n = 0;
        for y in rows.0..=rows.1 {
            for x in cols.0..=cols.1 {
                total += counts.get(&(y, x)).copied().unwrap_or(0);
                n += 1;
            }
        }
        prop_assert_eq!(stats.interior_addresses, n);
        prop_assert_eq!(stats.mean_uses_per_input_address, total as f64 / n as f64);
    }
}

#[test]
fn reuse_stride_two_is_about_two_and_a_quarter() {
    let spec = ConvSpec::new(Shape::new(1, 1, 513, 513).unwrap(), 1, 3)
        .with_stride(2)
        .with_padding(0);
    let trace = gen_trace(&spec, None, &EngineConfig::full()).unwrap();
    let m = reuse_stats(&trace).unwrap().mean_uses_per_input_address;
    assert!((m - 2.25).abs() < 0.01, "mean {m}");
}
