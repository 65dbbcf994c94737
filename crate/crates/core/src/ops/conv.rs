use crate::tensor::Tensor;

use super::sample::sample;
use super::{check_input, ConvSpec, OpError, Variant, Weights};

/// Standard or dilated convolution with zero padding.
pub fn standard_conv(x: &Tensor, w: &Weights, spec: &ConvSpec) -> Result<Tensor, OpError> {
    if !matches!(spec.variant, Variant::Standard | Variant::Dilated(_)) {
        return Err(OpError::WrongVariant(spec.variant, "standard_conv"));
    }
    spec.validate()?;
    check_input(x, spec)?;
    w.check(spec)?;
    let (k, s, d, pad) = (spec.k, spec.stride, spec.dilation(), spec.padding as i64);
    Ok(gather_conv(x, w, spec, |_, i, j, pos| {
        for u in 0..k {
            for v in 0..k {
                let y = (i * s + u * d) as i64 - pad;
                let xx = (j * s + v * d) as i64 - pad;
                pos[u * k + v] = (y as f64, xx as f64);
            }
        }
    }))
}

/// 1x1 convolution: channel mixing only. Weights are `(oc, ic, 1, 1)`.
pub fn pointwise_conv(x: &Tensor, w: &Weights) -> Result<Tensor, OpError> {
    let ws = w.shape();
    if ws.h != 1 || ws.w != 1 {
        return Err(OpError::Shape(format!(
            "pointwise weights must be (oc, ic, 1, 1), got {ws}"
        )));
    }
    let spec = ConvSpec {
        padding: 0,
        ..ConvSpec::new(x.shape(), ws.n, 1)
    };
    if ws.c != x.shape().c {
        return Err(OpError::Shape(format!(
            "pointwise weights {ws} do not match {} input channels",
            x.shape().c
        )));
    }
    standard_conv(x, w, &spec)
}

/// Shared gather-then-reduce kernel.
///
/// `taps_for(n, i, j, pos)` fills the `(row, col)` sampling coordinate of
/// every kernel tap for output `(i, j)`. Integer coordinates read the input
/// directly; fractional ones are bilinearly interpolated. Each output is
/// reduced over channels, then taps, in a fixed order, so every variant
/// produces bit-identical results when it samples the same coordinates.
pub(crate) fn gather_conv<F>(x: &Tensor, w: &Weights, spec: &ConvSpec, mut taps_for: F) -> Tensor
where
    F: FnMut(usize, usize, usize, &mut [(f64, f64)]),
{
    let out_shape = spec.out_shape();
    let (oh, ow) = (out_shape.h, out_shape.w);
    let taps = spec.taps();
    let ic = spec.ic();
    let wd = w.tensor().data();

    let mut out = vec![0.0; out_shape.len()];
    let mut pos = vec![(0.0, 0.0); taps];
    let mut samples = vec![0.0; ic * taps];

    for n in 0..spec.in_shape.n {
        for i in 0..oh {
            for j in 0..ow {
                taps_for(n, i, j, &mut pos);
                for c in 0..ic {
                    let plane = x.plane(n, c);
                    let row = &mut samples[c * taps..(c + 1) * taps];
                    for (dst, &(y, xx)) in row.iter_mut().zip(&pos) {
                        *dst = sample(plane, y, xx);
                    }
                }
                if spec.depthwise {
                    for c in 0..ic {
                        let wc = &wd[c * taps..(c + 1) * taps];
                        let sc = &samples[c * taps..(c + 1) * taps];
                        out[out_shape.index(n, c, i, j)] = dot(wc, sc);
                    }
                } else {
                    let stride = ic * taps;
                    for o in 0..spec.oc {
                        let wo = &wd[o * stride..(o + 1) * stride];
                        out[out_shape.index(n, o, i, j)] = dot(wo, &samples);
                    }
                }
            }
        }
    }
    Tensor::from_vec(out_shape, out).expect("output shape is valid by construction")
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}
