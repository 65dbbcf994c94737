//! Dense NCHW tensors.

mod io;

pub use io::{read_tensor, tensor_from_bytes, tensor_to_bytes, write_tensor, FILE_MAGIC, FILE_VERSION};

use std::fmt;

use thiserror::Error;

use crate::rng::XorShift64Star;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("invalid shape {0}: every extent must be at least 1")]
    InvalidShape(Shape),
    #[error("element count of shape {0} overflows")]
    Overflow(Shape),
    #[error("data length {len} does not match shape {shape} ({expected} elements)")]
    LengthMismatch { shape: Shape, len: usize, expected: usize },
    #[error("shape mismatch: {0} vs {1}")]
    ShapeMismatch(Shape, Shape),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated header")]
    TruncatedHeader,
    #[error("truncated data: expected {expected} bytes, found {found}")]
    TruncatedData { expected: u64, found: u64 },
    #[error("extent overflow: {n}x{c}x{h}x{w}")]
    ExtentOverflow { n: u32, c: u32, h: u32, w: u32 },
    #[error("trailing bytes after tensor data")]
    TrailingBytes,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Extents of a 4-D tensor: batch, channels, rows, columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub fn new(n: usize, c: usize, h: usize, w: usize) -> Result<Self, TensorError> {
        let shape = Self { n, c, h, w };
        shape.validate()?;
        Ok(shape)
    }

    pub fn validate(&self) -> Result<(), TensorError> {
        if self.n == 0 || self.c == 0 || self.h == 0 || self.w == 0 {
            return Err(TensorError::InvalidShape(*self));
        }
        self.checked_len().map(|_| ()).ok_or(TensorError::Overflow(*self))
    }

    fn checked_len(&self) -> Option<usize> {
        self.n.checked_mul(self.c)?.checked_mul(self.h)?.checked_mul(self.w)
    }

    /// Number of elements. Only meaningful for validated shapes.
    pub fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn plane_len(&self) -> usize {
        self.h * self.w
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.c + c) * self.h + y) * self.w + x
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.n, self.c, self.h, self.w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Distribution {
    /// Reals in `[lo, hi)`.
    Uniform { lo: f64, hi: f64 },
    /// Integers in `[lo, hi]`, stored as reals.
    Integers { lo: i64, hi: i64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeedSpec {
    pub seed: u64,
    pub distribution: Distribution,
}

impl SeedSpec {
    pub fn uniform(seed: u64, lo: f64, hi: f64) -> Self {
        Self {
            seed,
            distribution: Distribution::Uniform { lo, hi },
        }
    }

    pub fn integers(seed: u64, lo: i64, hi: i64) -> Self {
        Self {
            seed,
            distribution: Distribution::Integers { lo, hi },
        }
    }
}

/// Dense 4-D array of `f64`, row-major with `w` fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl Tensor {
    pub fn from_vec(shape: Shape, data: Vec<f64>) -> Result<Self, TensorError> {
        shape.validate()?;
        if data.len() != shape.len() {
            return Err(TensorError::LengthMismatch {
                shape,
                len: data.len(),
                expected: shape.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Shape) -> Result<Self, TensorError> {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: Shape, value: f64) -> Result<Self, TensorError> {
        shape.validate()?;
        Ok(Self {
            shape,
            data: vec![value; shape.len()],
        })
    }

    /// Deterministic random tensor; a pure function of `(shape, spec)`.
    pub fn random(shape: Shape, spec: SeedSpec) -> Result<Self, TensorError> {
        shape.validate()?;
        let mut rng = XorShift64Star::new(spec.seed);
        let data = match spec.distribution {
            Distribution::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                    return Err(TensorError::InvalidDistribution(format!("uniform({lo}, {hi})")));
                }
                (0..shape.len()).map(|_| lo + (hi - lo) * rng.next_f64()).collect()
            }
            Distribution::Integers { lo, hi } => {
                if lo > hi {
                    return Err(TensorError::InvalidDistribution(format!("integers({lo}, {hi})")));
                }
                (0..shape.len()).map(|_| rng.range_inclusive(lo, hi) as f64).collect()
            }
        };
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.shape.index(n, c, y, x)]
    }

    /// The `h x w` plane of batch item `n`, channel `c`.
    pub fn plane(&self, n: usize, c: usize) -> Plane<'_> {
        let len = self.shape.plane_len();
        let start = self.shape.index(n, c, 0, 0);
        Plane {
            data: &self.data[start..start + len],
            h: self.shape.h,
            w: self.shape.w,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Borrowed 2-D slice of a tensor.
#[derive(Debug, Clone, Copy)]
pub struct Plane<'a> {
    pub data: &'a [f64],
    pub h: usize,
    pub w: usize,
}

impl<'a> Plane<'a> {
    pub fn new(data: &'a [f64], h: usize, w: usize) -> Self {
        assert_eq!(data.len(), h * w, "plane data does not match {h}x{w}");
        Self { data, h, w }
    }

    /// Value at integer coordinates, zero outside the plane.
    #[inline]
    pub fn get_or_zero(&self, y: i64, x: i64) -> f64 {
        if y < 0 || x < 0 || y >= self.h as i64 || x >= self.w as i64 {
            0.0
        } else {
            self.data[y as usize * self.w + x as usize]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mismatch {
    pub index: usize,
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Closeness {
    pub close: bool,
    pub first_mismatch: Option<Mismatch>,
    pub max_abs_diff: f64,
}

/// Elementwise comparison with `|a - b| <= abs_tol + rel_tol * max(|a|, |b|)`.
pub fn tensor_close(a: &Tensor, b: &Tensor, rel_tol: f64, abs_tol: f64) -> Result<Closeness, TensorError> {
    if a.shape != b.shape {
        return Err(TensorError::ShapeMismatch(a.shape, b.shape));
    }
    let mut first_mismatch = None;
    let mut max_abs_diff: f64 = 0.0;
    for (index, (&x, &y)) in a.data.iter().zip(&b.data).enumerate() {
        let diff = (x - y).abs();
        max_abs_diff = max_abs_diff.max(diff);
        let ok = diff <= abs_tol + rel_tol * x.abs().max(y.abs());
        // NaN never compares close
        if (!ok || diff.is_nan()) && first_mismatch.is_none() {
            first_mismatch = Some(Mismatch { index, a: x, b: y });
        }
    }
    Ok(Closeness {
        close: first_mismatch.is_none(),
        first_mismatch,
        max_abs_diff,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Tensor {
        Tensor::from_vec(Shape::new(1, 1, 1, 1).unwrap(), vec![v]).unwrap()
    }

    #[test]
    fn zero_extent_rejected() {
        assert!(matches!(Shape::new(1, 0, 2, 2), Err(TensorError::InvalidShape(_))));
        let bad = Shape { n: 1, c: 1, h: 0, w: 1 };
        assert!(Tensor::random(bad, SeedSpec::uniform(0, 0.0, 1.0)).is_err());
    }

    #[test]
    fn overflowing_shape_rejected() {
        let huge = usize::MAX / 2;
        assert!(matches!(Shape::new(huge, 4, 1, 1), Err(TensorError::Overflow(_))));
    }

    #[test]
    fn random_is_deterministic() {
        let s = Shape::new(1, 1, 1, 1).unwrap();
        let a = Tensor::random(s, SeedSpec::uniform(0, 0.0, 1.0)).unwrap();
        let b = Tensor::random(s, SeedSpec::uniform(0, 0.0, 1.0)).unwrap();
        assert_eq!(a.data()[0].to_bits(), b.data()[0].to_bits());
        assert!((0.0..1.0).contains(&a.data()[0]));
    }

    #[test]
    fn random_integers_in_range() {
        let s = Shape::new(1, 1, 2, 2).unwrap();
        let t = Tensor::random(s, SeedSpec::integers(42, 0, 7)).unwrap();
        for &v in t.data() {
            assert_eq!(v, v.trunc());
            assert!((0.0..=7.0).contains(&v));
        }
    }

    #[test]
    fn uniform_mean_near_half() {
        let s = Shape::new(1, 1, 64, 64).unwrap();
        let t = Tensor::random(s, SeedSpec::uniform(7, 0.0, 1.0)).unwrap();
        let mean = t.data().iter().sum::<f64>() / t.data().len() as f64;
        // 4096 samples: std error of the mean is about 0.0045
        assert!((mean - 0.5).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn close_identical_and_tolerances() {
        let a = scalar(1.0);
        assert!(tensor_close(&a, &a, 0.0, 0.0).unwrap().close);
        assert!(tensor_close(&a, &scalar(1.000_000_1), 1e-5, 0.0).unwrap().close);
        let r = tensor_close(&a, &scalar(2.0), 1e-5, 0.0).unwrap();
        assert!(!r.close);
        assert_eq!(r.first_mismatch.unwrap().index, 0);
    }

    #[test]
    fn close_shape_mismatch_names_both() {
        let a = scalar(1.0);
        let b = Tensor::zeros(Shape::new(1, 2, 1, 1).unwrap()).unwrap();
        let err = tensor_close(&a, &b, 0.0, 0.0).unwrap_err().to_string();
        assert!(err.contains("(1, 1, 1, 1)") && err.contains("(1, 2, 1, 1)"), "{err}");
    }

    #[test]
    fn close_rejects_nan() {
        assert!(
            !tensor_close(&scalar(f64::NAN), &scalar(f64::NAN), 1.0, 1.0)
                .unwrap()
                .close
        );
    }
}
