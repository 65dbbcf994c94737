use crate::tensor::{Shape, Tensor};

use super::conv::standard_conv;
use super::{ConvSpec, OpError, Variant, Weights};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OffsetLayout {
    /// `2*k*k` channels: `(dy, dx)` per kernel tap, taps row-major.
    Full,
    /// One channel: the half-side of the sampling square.
    Square,
}

/// Per-output sampling displacements.
#[derive(Debug, Clone, PartialEq)]
pub struct OffsetField {
    layout: OffsetLayout,
    data: Tensor,
}

impl OffsetField {
    pub fn new(layout: OffsetLayout, data: Tensor) -> Result<Self, OpError> {
        let c = data.shape().c;
        let ok = match layout {
            OffsetLayout::Square => c == 1,
            OffsetLayout::Full => c.is_multiple_of(2) && is_odd_square(c / 2),
        };
        if !ok {
            return Err(OpError::Shape(format!(
                "{c} channels is not a valid {layout:?} offset layout"
            )));
        }
        Ok(Self { layout, data })
    }

    /// Infers the layout from the channel count (1 is square, `2k^2` full).
    pub fn from_tensor(data: Tensor) -> Result<Self, OpError> {
        let layout = if data.shape().c == 1 {
            OffsetLayout::Square
        } else {
            OffsetLayout::Full
        };
        Self::new(layout, data)
    }

    /// All-zero field sized for `spec`.
    pub fn zeros(spec: &ConvSpec, layout: OffsetLayout) -> Result<Self, OpError> {
        Self::new(layout, Tensor::zeros(offset_shape(spec, layout))?)
    }

    /// Constant field, e.g. `(dy, dx)` everywhere for `Full` (pass both) or
    /// `d` everywhere for `Square` (only `values[0]` is used).
    pub fn constant(spec: &ConvSpec, layout: OffsetLayout, values: (f64, f64)) -> Result<Self, OpError> {
        let shape = offset_shape(spec, layout);
        let mut t = Tensor::zeros(shape)?;
        let plane = shape.plane_len();
        for n in 0..shape.n {
            for ch in 0..shape.c {
                let v = if layout == OffsetLayout::Full && ch % 2 == 1 {
                    values.1
                } else {
                    values.0
                };
                let start = shape.index(n, ch, 0, 0);
                t.data_mut()[start..start + plane].fill(v);
            }
        }
        Self::new(layout, t)
    }

    pub fn layout(&self) -> OffsetLayout {
        self.layout
    }

    pub fn tensor(&self) -> &Tensor {
        &self.data
    }

    pub fn into_tensor(self) -> Tensor {
        self.data
    }

    pub fn values_per_position(&self) -> usize {
        self.data.shape().c
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            layout: self.layout,
            data: self.data.map(f),
        }
    }

    /// True when every value is an integer.
    pub fn is_integral(&self) -> bool {
        self.data.data().iter().all(|v| v.fract() == 0.0)
    }

    /// Checks layout, channel count and spatial extent against `spec`.
    pub fn check(&self, spec: &ConvSpec, layout: OffsetLayout) -> Result<(), OpError> {
        if self.layout != layout {
            return Err(OpError::LayoutMismatch {
                expected: layout,
                got: self.layout,
            });
        }
        let want = offset_shape(spec, layout);
        if self.data.shape() != want {
            return Err(OpError::Shape(format!(
                "offset field {} does not match expected {want}",
                self.data.shape()
            )));
        }
        Ok(())
    }

    /// `(dy, dx)` of tap `t` for output `(n, i, j)` in a full field.
    #[inline]
    pub(crate) fn full_at(&self, n: usize, t: usize, i: usize, j: usize) -> (f64, f64) {
        (self.data.at(n, 2 * t, i, j), self.data.at(n, 2 * t + 1, i, j))
    }

    #[inline]
    pub(crate) fn square_at(&self, n: usize, i: usize, j: usize) -> f64 {
        self.data.at(n, 0, i, j)
    }
}

fn is_odd_square(v: usize) -> bool {
    let r = (v as f64).sqrt().round() as usize;
    r * r == v && r % 2 == 1
}

pub(crate) fn offset_shape(spec: &ConvSpec, layout: OffsetLayout) -> Shape {
    let (oh, ow) = spec.out_hw();
    let c = match layout {
        OffsetLayout::Full => 2 * spec.taps(),
        OffsetLayout::Square => 1,
    };
    Shape {
        n: spec.in_shape.n,
        c,
        h: oh,
        w: ow,
    }
}

/// Round half away from zero.
#[inline]
pub fn round_half_away(v: f64) -> f64 {
    v.round()
}

/// Rounds every displacement to the nearest integer, ties away from zero.
pub fn round_offsets(off: &OffsetField) -> OffsetField {
    off.map(round_half_away)
}

/// Clamps every displacement into `[0, bound]`.
pub fn clamp_offsets(off: &OffsetField, bound: u32) -> OffsetField {
    let hi = bound as f64;
    off.map(|v| v.clamp(0.0, hi))
}

/// Offset-generation layer: a plain convolution producing `2k^2` (full) or
/// one (square) channel per output position.
#[derive(Debug, Clone)]
pub struct OffsetGenerator {
    /// `(2k^2 | 1, ic, k, k)`
    pub weights: Weights,
    /// One bias per output channel; empty means no bias.
    pub bias: Vec<f64>,
    pub layout: OffsetLayout,
}

impl OffsetGenerator {
    pub fn zeros(ic: usize, k: usize, layout: OffsetLayout) -> Result<Self, OpError> {
        let channels = match layout {
            OffsetLayout::Full => 2 * k * k,
            OffsetLayout::Square => 1,
        };
        Ok(Self {
            weights: Weights::new(Tensor::zeros(Shape::new(channels, ic, k, k)?)?),
            bias: Vec::new(),
            layout,
        })
    }
}

/// Runs the offset-generation convolution for the main convolution `main`
/// (same kernel size, stride and padding, so the field matches its output
/// grid). Bounded and square consumers get their values clamped to `[0, N]`.
pub fn offset_gen_conv(x: &Tensor, gen: &OffsetGenerator, main: &ConvSpec) -> Result<OffsetField, OpError> {
    let channels = match gen.layout {
        OffsetLayout::Full => 2 * main.taps(),
        OffsetLayout::Square => 1,
    };
    let ws = gen.weights.shape();
    if ws.n != channels {
        return Err(OpError::Shape(format!(
            "offset generator emits {} channels, {:?} layout needs {channels}",
            ws.n, gen.layout
        )));
    }
    if !gen.bias.is_empty() && gen.bias.len() != channels {
        return Err(OpError::Shape(format!(
            "offset generator has {} biases for {channels} channels",
            gen.bias.len()
        )));
    }
    let spec = ConvSpec {
        in_shape: x.shape(),
        oc: channels,
        k: main.k,
        stride: main.stride,
        padding: main.padding,
        depthwise: false,
        variant: Variant::Standard,
    };
    let mut t = standard_conv(x, &gen.weights, &spec)?;
    if !gen.bias.is_empty() {
        let s = t.shape();
        let plane = s.plane_len();
        for n in 0..s.n {
            for (ch, &b) in gen.bias.iter().enumerate() {
                let start = s.index(n, ch, 0, 0);
                t.data_mut()[start..start + plane].iter_mut().for_each(|v| *v += b);
            }
        }
    }
    let field = OffsetField::new(gen.layout, t)?;
    Ok(match main.variant.bound() {
        Some(n) => clamp_offsets(&field, n),
        None => field,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::SeedSpec;

    fn field(values: Vec<f64>) -> OffsetField {
        let s = Shape::new(1, 1, 1, values.len()).unwrap();
        OffsetField::new(OffsetLayout::Square, Tensor::from_vec(s, values).unwrap()).unwrap()
    }

    #[test]
    fn rounding_rule() {
        let r = round_offsets(&field(vec![1.4, -1.5, 2.5, -0.4, 0.5]));
        assert_eq!(r.tensor().data(), &[1.0, -2.0, 3.0, -0.0, 1.0]);
    }

    #[test]
    fn rounding_is_idempotent() {
        let f = field(vec![3.0, -2.0, 0.0]);
        assert_eq!(round_offsets(&f), f);
        let g = round_offsets(&field(vec![0.7, -3.2]));
        assert_eq!(round_offsets(&g), g);
    }

    #[test]
    fn clamp_rule() {
        let c = clamp_offsets(&field(vec![8.1, -2.3, 3.4]), 7);
        assert_eq!(c.tensor().data(), &[7.0, 0.0, 3.4]);
        assert_eq!(clamp_offsets(&c, 7), c);
        let inside = field(vec![0.0, 7.0, 2.5]);
        assert_eq!(clamp_offsets(&inside, 7), inside);
    }

    #[test]
    fn layout_channel_counts() {
        let s = |c| Tensor::zeros(Shape::new(1, c, 2, 2).unwrap()).unwrap();
        assert!(OffsetField::new(OffsetLayout::Full, s(18)).is_ok());
        assert!(OffsetField::new(OffsetLayout::Full, s(2)).is_ok());
        assert!(OffsetField::new(OffsetLayout::Full, s(8)).is_err());
        assert!(OffsetField::new(OffsetLayout::Square, s(2)).is_err());
        assert_eq!(OffsetField::from_tensor(s(1)).unwrap().layout(), OffsetLayout::Square);
        assert_eq!(OffsetField::from_tensor(s(50)).unwrap().layout(), OffsetLayout::Full);
    }

    #[test]
    fn generator_bias_only_square() {
        let x = Tensor::random(Shape::new(1, 2, 5, 5).unwrap(), SeedSpec::uniform(2, -1.0, 1.0)).unwrap();
        let main = ConvSpec::depthwise(x.shape(), 3).with_variant(Variant::DeformSquare(7));
        let mut gen = OffsetGenerator::zeros(2, 3, OffsetLayout::Square).unwrap();
        gen.bias = vec![2.0];
        let off = offset_gen_conv(&x, &gen, &main).unwrap();
        assert_eq!(off.layout(), OffsetLayout::Square);
        assert!(off.tensor().data().iter().all(|&v| v == 2.0));
        off.check(&main, OffsetLayout::Square).unwrap();
    }

    #[test]
    fn generator_random_weights_respect_bound() {
        let x = Tensor::random(Shape::new(1, 3, 6, 6).unwrap(), SeedSpec::uniform(8, -4.0, 4.0)).unwrap();
        let main = ConvSpec::new(x.shape(), 4, 3).with_variant(Variant::DeformBounded(7));
        let gen = OffsetGenerator {
            weights: Weights::new(
                Tensor::random(Shape::new(18, 3, 3, 3).unwrap(), SeedSpec::uniform(9, -2.0, 2.0)).unwrap(),
            ),
            bias: Vec::new(),
            layout: OffsetLayout::Full,
        };
        let off = offset_gen_conv(&x, &gen, &main).unwrap();
        assert!(off.tensor().data().iter().all(|&v| (0.0..=7.0).contains(&v)));
        // unbounded consumer sees the raw (signed) values
        let raw = offset_gen_conv(&x, &gen, &main.with_variant(Variant::DeformBilinear)).unwrap();
        assert!(raw.tensor().data().iter().any(|&v| !(0.0..=7.0).contains(&v)));
    }

    #[test]
    fn generator_channel_mismatch() {
        let x = Tensor::zeros(Shape::new(1, 2, 4, 4).unwrap()).unwrap();
        let main = ConvSpec::new(x.shape(), 2, 3).with_variant(Variant::DeformRounded);
        let mut gen = OffsetGenerator::zeros(2, 3, OffsetLayout::Full).unwrap();
        gen.layout = OffsetLayout::Square;
        assert!(offset_gen_conv(&x, &gen, &main).is_err());
    }
}
