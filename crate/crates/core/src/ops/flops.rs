use super::{ConvSpec, Variant};

/// Bilinear interpolation cost charged per fractional sample.
pub const BILINEAR_MULS_PER_SAMPLE: u64 = 6;

/// Operation counts for one convolution, summed over the batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FlopBreakdown {
    /// Two operations (multiply + add) per MAC.
    pub mac_flops: u64,
    /// Extra cost of bilinear sampling; zero unless offsets are fractional.
    pub bilinear_flops: u64,
    pub total: u64,
}

pub fn flops_count(spec: &ConvSpec) -> FlopBreakdown {
    let (oh, ow) = spec.out_hw();
    let positions = (oh * ow) as u64;
    let taps = spec.taps() as u64;
    let ic = spec.ic() as u64;
    let n = spec.in_shape.n as u64;
    let macs = if spec.depthwise {
        positions * taps * ic
    } else {
        positions * taps * ic * spec.oc as u64
    };
    let mac_flops = 2 * macs * n;
    // samples are shared across output channels
    let bilinear_flops = match spec.variant {
        Variant::DeformBilinear => BILINEAR_MULS_PER_SAMPLE * positions * ic * taps * n,
        _ => 0,
    };
    FlopBreakdown {
        mac_flops,
        bilinear_flops,
        total: mac_flops + bilinear_flops,
    }
}
