//! Brute-force reference convolutions.
//!
//! Written separately from [`crate::ops`]: explicit nested loops over every
//! output, channel and tap, with bilinear sampling expressed as a tent-kernel
//! sum over the whole input plane instead of a four-neighbour lookup. Slow by
//! construction; only meant for small instances.

use crate::ops::{ConvSpec, OffsetField, Variant, Weights};
use crate::tensor::Tensor;

/// Evaluates `spec` on `x`. Deformable variants require `off`.
pub fn reference_conv(x: &Tensor, w: &Weights, off: Option<&OffsetField>, spec: &ConvSpec) -> Tensor {
    let s = spec.in_shape;
    let (oh, ow) = spec.out_hw();
    let k = spec.k as i64;
    let stride = spec.stride as i64;
    let pad = spec.padding as i64;
    let wt = w.tensor();
    let mut out = Tensor::zeros(spec.out_shape()).expect("valid output shape");

    for n in 0..s.n {
        for o in 0..spec.oc {
            for i in 0..oh {
                for j in 0..ow {
                    let mut acc = 0.0;
                    for c in 0..s.c {
                        if spec.depthwise && c != o {
                            continue;
                        }
                        let wc = if spec.depthwise { 0 } else { c };
                        for u in 0..k {
                            for v in 0..k {
                                let (y, xx) = tap_position(spec, off, n, i as i64, j as i64, u, v, k, stride, pad);
                                let value = tent_sample(x, n, c, y, xx);
                                acc += wt.at(o, wc, u as usize, v as usize) * value;
                            }
                        }
                    }
                    let idx = out.shape().index(n, o, i, j);
                    out.data_mut()[idx] = acc;
                }
            }
        }
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn tap_position(
    spec: &ConvSpec,
    off: Option<&OffsetField>,
    n: usize,
    i: i64,
    j: i64,
    u: i64,
    v: i64,
    k: i64,
    stride: i64,
    pad: i64,
) -> (f64, f64) {
    let (oi, oj) = (i as usize, j as usize);
    match spec.variant {
        Variant::Standard => ((i * stride + u - pad) as f64, (j * stride + v - pad) as f64),
        Variant::Dilated(d) => {
            let d = d as i64;
            ((i * stride + u * d - pad) as f64, (j * stride + v * d - pad) as f64)
        }
        Variant::DeformBilinear | Variant::DeformRounded | Variant::DeformBounded(_) => {
            let t = off.expect("deformable variant needs offsets").tensor();
            let tap = (u * k + v) as usize;
            let mut dy = t.at(n, 2 * tap, oi, oj);
            let mut dx = t.at(n, 2 * tap + 1, oi, oj);
            if spec.variant != Variant::DeformBilinear {
                dy = round_away(dy);
                dx = round_away(dx);
            }
            if let Variant::DeformBounded(b) = spec.variant {
                dy = bound(dy, b);
                dx = bound(dx, b);
            }
            ((i * stride + u - pad) as f64 + dy, (j * stride + v - pad) as f64 + dx)
        }
        Variant::DeformSquare(b) => {
            let t = off.expect("square variant needs offsets").tensor();
            let d = bound(round_away(t.at(n, 0, oi, oj)), b);
            let half = k / 2;
            let cy = (i * stride - pad + half) as f64;
            let cx = (j * stride - pad + half) as f64;
            (cy + d * (u - half) as f64, cx + d * (v - half) as f64)
        }
    }
}

fn round_away(v: f64) -> f64 {
    let t = v.trunc();
    let f = v - t;
    if f >= 0.5 {
        t + 1.0
    } else if f <= -0.5 {
        t - 1.0
    } else {
        t
    }
}

fn bound(v: f64, n: u32) -> f64 {
    if v < 0.0 {
        0.0
    } else if v > n as f64 {
        n as f64
    } else {
        v
    }
}

/// `sum_p max(0, 1 - |y - py|) * max(0, 1 - |x - px|) * x[p]` over every pixel.
fn tent_sample(x: &Tensor, n: usize, c: usize, y: f64, xx: f64) -> f64 {
    let s = x.shape();
    let mut acc = 0.0;
    for py in 0..s.h {
        let wy = 1.0 - (y - py as f64).abs();
        if wy <= 0.0 {
            continue;
        }
        for px in 0..s.w {
            let wx = 1.0 - (xx - px as f64).abs();
            if wx <= 0.0 {
                continue;
            }
            acc += wy * wx * x.at(n, c, py, px);
        }
    }
    acc
}
