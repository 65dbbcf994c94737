use std::collections::BTreeMap;

use super::trace::AccessTrace;
use super::SimError;

#[derive(Debug, Clone, PartialEq)]
pub struct ReuseStats {
    pub mean_uses_per_input_address: f64,
    /// uses -> number of interior addresses read that many times
    pub histogram: BTreeMap<u64, u64>,
    pub interior_addresses: u64,
}

/// Reads per input address, over interior pixels only: those every one of
/// whose potential readers (given the trace's offset reach) is a real output.
pub fn reuse_stats(trace: &AccessTrace) -> Result<ReuseStats, SimError> {
    let meta = &trace.meta;
    let map = &meta.map;
    let shape = meta.spec.in_shape;
    let mut uses = vec![0u64; shape.len()];
    let mut any = false;
    for a in trace.input_reads() {
        any = true;
        if !a.padding {
            uses[(a.address / map.elem_bytes) as usize] += 1;
        }
    }
    if !any {
        return Err(SimError::EmptyTrace);
    }
    let mut histogram = BTreeMap::new();
    let (mut total, mut count) = (0u64, 0u64);
    if let (Some((r0, r1)), Some((c0, c1))) = (meta.interior_rows(), meta.interior_cols()) {
        for n in 0..shape.n {
            for y in r0..=r1 {
                for x in c0..=c1 {
                    for c in 0..shape.c {
                        let addr = map.input(n, y as usize, x as usize, c);
                        let u = uses[(addr / map.elem_bytes) as usize];
                        *histogram.entry(u).or_insert(0) += 1;
                        total += u;
                        count += 1;
                    }
                }
            }
        }
    }
    Ok(ReuseStats {
        mean_uses_per_input_address: if count == 0 { 0.0 } else { total as f64 / count as f64 },
        histogram,
        interior_addresses: count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::accel::{gen_trace, EngineConfig};
    use crate::ops::ConvSpec;
    use crate::tensor::Shape;

    #[test]
    fn standard_stride_one_is_nine() {
        let spec = ConvSpec::new(Shape::new(1, 2, 32, 32).unwrap(), 1, 3);
        let t = gen_trace(&spec, None, &EngineConfig::full()).unwrap();
        let r = reuse_stats(&t).unwrap();
        assert_eq!(r.mean_uses_per_input_address, 9.0);
        assert_eq!(r.histogram.len(), 1);
        assert_eq!(r.interior_addresses, 2 * 30 * 30);
    }

    #[test]
    fn empty_trace_errors() {
        let spec = ConvSpec::new(Shape::new(1, 1, 4, 4).unwrap(), 1, 3);
        let mut t = gen_trace(&spec, None, &EngineConfig::full()).unwrap();
        t.events.retain(|a| !a.is_input());
        assert!(matches!(reuse_stats(&t), Err(SimError::EmptyTrace)));
    }
}
