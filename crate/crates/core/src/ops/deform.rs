use crate::tensor::Tensor;

use super::conv::gather_conv;
use super::offsets::{clamp_offsets, round_offsets, OffsetField, OffsetLayout};
use super::{check_input, ConvSpec, OpError, Variant, Weights};

/// Deformable convolution with a full `(dy, dx)`-per-tap offset field.
///
/// Each tap samples at its regular (dilation 1) grid position plus its
/// displacement. `DeformRounded` rounds the field first; `DeformBounded(N)`
/// rounds and then clamps to `[0, N]`. Samples outside the input read zero.
pub fn deform_conv(x: &Tensor, w: &Weights, off: &OffsetField, spec: &ConvSpec) -> Result<Tensor, OpError> {
    let field = match spec.variant {
        Variant::DeformBilinear => None,
        Variant::DeformRounded => Some(round_offsets(off)),
        Variant::DeformBounded(n) => Some(clamp_offsets(&round_offsets(off), n)),
        v => return Err(OpError::WrongVariant(v, "deform_conv")),
    };
    spec.validate()?;
    check_input(x, spec)?;
    w.check(spec)?;
    off.check(spec, OffsetLayout::Full)?;
    let field = field.as_ref().unwrap_or(off);
    check_finite(field)?;

    let (k, s, pad) = (spec.k, spec.stride, spec.padding as f64);
    Ok(gather_conv(x, w, spec, |n, i, j, pos| {
        for u in 0..k {
            for v in 0..k {
                let t = u * k + v;
                let (dy, dx) = field.full_at(n, t, i, j);
                pos[t] = ((i * s + u) as f64 - pad + dy, (j * s + v) as f64 - pad + dx);
            }
        }
    }))
}

/// Square-shape deformable convolution: one displacement `d` per output,
/// taps at `center + d * (u - k/2, v - k/2)`, i.e. a per-pixel dilation.
///
/// `d` is rounded and clamped to `[0, N]` before use; `d = 0` stacks every tap
/// on the center pixel.
pub fn square_deform_conv(x: &Tensor, w: &Weights, off: &OffsetField, spec: &ConvSpec) -> Result<Tensor, OpError> {
    let Variant::DeformSquare(bound) = spec.variant else {
        return Err(OpError::WrongVariant(spec.variant, "square_deform_conv"));
    };
    spec.validate()?;
    check_input(x, spec)?;
    w.check(spec)?;
    off.check(spec, OffsetLayout::Square)?;
    check_finite(off)?;
    let field = clamp_offsets(&round_offsets(off), bound);

    let (k, s, pad) = (spec.k, spec.stride, spec.padding as i64);
    let half = (k / 2) as i64;
    Ok(gather_conv(x, w, spec, |n, i, j, pos| {
        let d = field.square_at(n, i, j) as i64;
        let cy = (i * s) as i64 - pad + half;
        let cx = (j * s) as i64 - pad + half;
        for u in 0..k {
            for v in 0..k {
                let y = cy + d * (u as i64 - half);
                let xx = cx + d * (v as i64 - half);
                pos[u * k + v] = (y as f64, xx as f64);
            }
        }
    }))
}

fn check_finite(off: &OffsetField) -> Result<(), OpError> {
    match off.tensor().data().iter().find(|v| !v.is_finite()) {
        Some(&v) => Err(OpError::NonFiniteCoordinate { x: v, y: v }),
        None => Ok(()),
    }
}
