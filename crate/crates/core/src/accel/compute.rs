use crate::ops::ConvSpec;

use super::{EngineConfig, SimError};

/// Cycles the MAC array needs when never starved: one cycle per output
/// position per (ic group, oc group), all `k*k` taps in parallel.
pub fn compute_cycles(spec: &ConvSpec, engine: &EngineConfig) -> Result<u64, SimError> {
    spec.validate()?;
    engine.validate()?;
    let taps = spec.taps();
    if taps > engine.tap_parallel {
        return Err(SimError::UnsupportedEngine(format!(
            "{taps} kernel taps exceed tap parallelism {}",
            engine.tap_parallel
        )));
    }
    let (oh, ow) = spec.out_hw();
    let positions = (spec.in_shape.n * oh * ow) as u64;
    let ic = spec.ic().div_ceil(engine.ic_parallel) as u64;
    Ok(if spec.depthwise {
        positions * ic
    } else {
        positions * ic * spec.oc.div_ceil(engine.oc_parallel) as u64
    })
}
