//! Convolution variants: standard, dilated, deformable (bilinear, rounded,
//! bounded), square-shape deformable, depthwise and pointwise, plus the
//! building block, FLOP accounting and the symmetric quantizer.

mod block;
mod conv;
mod deform;
mod flops;
mod offsets;
mod quant;
mod sample;

pub use block::{channel_shuffle, concat_channels, dcn_block, split_channels, DcnBlockParams};
pub use conv::{pointwise_conv, standard_conv};
pub use deform::{deform_conv, square_deform_conv};
pub use flops::{flops_count, FlopBreakdown};
pub use offsets::{
    clamp_offsets, offset_gen_conv, round_half_away, round_offsets, OffsetField, OffsetGenerator, OffsetLayout,
};
pub use quant::{dequantize, quantize_symmetric, QuantSpec, Quantized};
pub use sample::bilinear_sample;

/// Runs whichever op implements `spec.variant`. Deformable variants need
/// `off`.
pub fn convolve(x: &Tensor, w: &Weights, off: Option<&OffsetField>, spec: &ConvSpec) -> Result<Tensor, OpError> {
    let need = || off.ok_or_else(|| OpError::InvalidSpec(format!("variant {} needs an offset field", spec.variant)));
    match spec.variant {
        Variant::Standard | Variant::Dilated(_) => standard_conv(x, w, spec),
        Variant::DeformSquare(_) => square_deform_conv(x, w, need()?, spec),
        _ => deform_conv(x, w, need()?, spec),
    }
}

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::tensor::{Shape, Tensor, TensorError};

#[derive(Debug, Error)]
pub enum OpError {
    #[error("invalid convolution: {0}")]
    InvalidSpec(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("variant {0} is not handled by {1}")]
    WrongVariant(Variant, &'static str),
    #[error("offset layout mismatch: expected {expected:?}, got {got:?}")]
    LayoutMismatch { expected: OffsetLayout, got: OffsetLayout },
    #[error("sampling coordinate is not finite: ({x}, {y})")]
    NonFiniteCoordinate { x: f64, y: f64 },
    #[error("odd channel count {0}; the block splits channels in half")]
    OddChannels(usize),
    #[error("invalid quantizer: {0}")]
    InvalidQuant(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Which sampling rule a convolution uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Standard,
    Dilated(usize),
    /// Fractional offsets, bilinear sampling.
    DeformBilinear,
    /// Offsets rounded to integers before sampling.
    DeformRounded,
    /// Rounded, then clamped to `[0, N]`.
    DeformBounded(u32),
    /// One rounded, clamped displacement per output: a per-pixel dilation.
    DeformSquare(u32),
}

impl Variant {
    pub fn is_deformable(&self) -> bool {
        !matches!(self, Variant::Standard | Variant::Dilated(_))
    }

    pub fn bound(&self) -> Option<u32> {
        match *self {
            Variant::DeformBounded(n) | Variant::DeformSquare(n) => Some(n),
            _ => None,
        }
    }

    pub fn offset_layout(&self) -> Option<OffsetLayout> {
        match self {
            Variant::Standard | Variant::Dilated(_) => None,
            Variant::DeformSquare(_) => Some(OffsetLayout::Square),
            _ => Some(OffsetLayout::Full),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Standard => write!(f, "standard"),
            Variant::Dilated(d) => write!(f, "dilated:{d}"),
            Variant::DeformBilinear => write!(f, "bilinear"),
            Variant::DeformRounded => write!(f, "rounded"),
            Variant::DeformBounded(n) => write!(f, "bounded:{n}"),
            Variant::DeformSquare(n) => write!(f, "square:{n}"),
        }
    }
}

impl FromStr for Variant {
    type Err = String;

    /// Inverse of `Display`: `standard`, `dilated:2`, `bounded:7`, ...
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let num = |what: &str| -> Result<u32, String> {
            let a = arg.ok_or_else(|| format!("{what} needs a parameter, e.g. {what}:7"))?;
            a.parse().map_err(|_| format!("bad {what} parameter '{a}'"))
        };
        let v = match name {
            "standard" => Variant::Standard,
            "dilated" => Variant::Dilated(num("dilated")? as usize),
            "bilinear" => Variant::DeformBilinear,
            "rounded" => Variant::DeformRounded,
            "bounded" => Variant::DeformBounded(num("bounded")?),
            "square" => Variant::DeformSquare(num("square")?),
            _ => return Err(format!("unknown variant '{s}'")),
        };
        if arg.is_some() && matches!(v, Variant::Standard | Variant::DeformBilinear | Variant::DeformRounded) {
            return Err(format!("variant '{name}' takes no parameter"));
        }
        Ok(v)
    }
}

/// One convolution instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    /// `(n, ic, h, w)`
    pub in_shape: Shape,
    pub oc: usize,
    pub k: usize,
    pub stride: usize,
    pub padding: usize,
    pub depthwise: bool,
    pub variant: Variant,
}

impl ConvSpec {
    /// Standard convolution with stride 1 and "same" padding.
    pub fn new(in_shape: Shape, oc: usize, k: usize) -> Self {
        Self {
            in_shape,
            oc,
            k,
            stride: 1,
            padding: k / 2,
            depthwise: false,
            variant: Variant::Standard,
        }
    }

    /// Depthwise convolution (`oc == ic`) with stride 1 and "same" padding.
    pub fn depthwise(in_shape: Shape, k: usize) -> Self {
        Self {
            depthwise: true,
            ..Self::new(in_shape, in_shape.c, k)
        }
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_padding(mut self, padding: usize) -> Self {
        self.padding = padding;
        self
    }

    pub fn ic(&self) -> usize {
        self.in_shape.c
    }

    pub fn dilation(&self) -> usize {
        match self.variant {
            Variant::Dilated(d) => d,
            _ => 1,
        }
    }

    pub fn effective_k(&self) -> usize {
        (self.k - 1) * self.dilation() + 1
    }

    pub fn out_hw(&self) -> (usize, usize) {
        let ek = self.effective_k();
        let s = self.stride;
        let p2 = 2 * self.padding;
        ((self.in_shape.h + p2 - ek) / s + 1, (self.in_shape.w + p2 - ek) / s + 1)
    }

    pub fn out_shape(&self) -> Shape {
        let (oh, ow) = self.out_hw();
        Shape {
            n: self.in_shape.n,
            c: self.oc,
            h: oh,
            w: ow,
        }
    }

    pub fn weight_shape(&self) -> Shape {
        let ic = if self.depthwise { 1 } else { self.ic() };
        Shape {
            n: self.oc,
            c: ic,
            h: self.k,
            w: self.k,
        }
    }

    pub fn taps(&self) -> usize {
        self.k * self.k
    }

    pub fn validate(&self) -> Result<(), OpError> {
        self.in_shape.validate()?;
        let bad = |m: String| Err(OpError::InvalidSpec(m));
        if self.oc == 0 {
            return bad("oc must be at least 1".into());
        }
        if self.k == 0 || self.k.is_multiple_of(2) {
            return bad(format!("kernel size {} must be odd", self.k));
        }
        if self.stride == 0 {
            return bad("stride must be at least 1".into());
        }
        if self.depthwise && self.oc != self.ic() {
            return bad(format!(
                "depthwise requires oc == ic, got oc={} ic={}",
                self.oc,
                self.ic()
            ));
        }
        match self.variant {
            Variant::Dilated(0) => return bad("dilation must be at least 1".into()),
            Variant::DeformBounded(0) | Variant::DeformSquare(0) => {
                return bad("offset bound N must be at least 1".into())
            }
            _ => {}
        }
        let ek = self.effective_k();
        if self.in_shape.h + 2 * self.padding < ek || self.in_shape.w + 2 * self.padding < ek {
            return bad(format!(
                "effective kernel {ek} exceeds padded input {}x{}",
                self.in_shape.h + 2 * self.padding,
                self.in_shape.w + 2 * self.padding
            ));
        }
        Ok(())
    }
}

/// Convolution weights: `(oc, ic, k, k)`, `(ic, 1, k, k)` for depthwise, or
/// `(oc, ic, 1, 1)` for pointwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights(pub Tensor);

impl Weights {
    pub fn new(t: Tensor) -> Self {
        Self(t)
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn shape(&self) -> Shape {
        self.0.shape()
    }

    pub(crate) fn check(&self, spec: &ConvSpec) -> Result<(), OpError> {
        let want = spec.weight_shape();
        if self.shape() != want {
            return Err(OpError::Shape(format!(
                "weights {} do not match expected {want}",
                self.shape()
            )));
        }
        Ok(())
    }
}

pub(crate) fn check_input(x: &Tensor, spec: &ConvSpec) -> Result<(), OpError> {
    if x.shape() != spec.in_shape {
        return Err(OpError::Shape(format!(
            "input {} does not match spec {}",
            x.shape(),
            spec.in_shape
        )));
    }
    Ok(())
}
