use crate::tensor::{Shape, Tensor};

use super::OpError;

/// Symmetric uniform quantizer settings. `scale = None` derives the scale
/// from `max|x|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantSpec {
    pub bits: u32,
    pub scale: Option<f64>,
}

impl QuantSpec {
    pub fn new(bits: u32) -> Self {
        Self { bits, scale: None }
    }

    /// Largest code magnitude, `2^(bits-1) - 1`.
    pub fn qmax(&self) -> i32 {
        (1i32 << (self.bits - 1)) - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Quantized {
    pub shape: Shape,
    pub codes: Vec<i32>,
    pub scale: f64,
}

pub fn quantize_symmetric(x: &Tensor, q: QuantSpec) -> Result<Quantized, OpError> {
    if !(2..=16).contains(&q.bits) {
        return Err(OpError::InvalidQuant(format!("bits {} outside [2, 16]", q.bits)));
    }
    if x.data().iter().any(|v| !v.is_finite()) {
        return Err(OpError::InvalidQuant("input contains non-finite values".into()));
    }
    let qmax = q.qmax();
    let scale = match q.scale {
        Some(s) if s > 0.0 && s.is_finite() => s,
        Some(s) => return Err(OpError::InvalidQuant(format!("scale {s} must be positive"))),
        None => {
            let m = x.max_abs();
            if m == 0.0 {
                1.0
            } else {
                m / qmax as f64
            }
        }
    };
    let lim = qmax as f64;
    let codes = x
        .data()
        .iter()
        .map(|&v| (v / scale).round_ties_even().clamp(-lim, lim) as i32)
        .collect();
    Ok(Quantized {
        shape: x.shape(),
        codes,
        scale,
    })
}

pub fn dequantize(q: &Quantized) -> Tensor {
    let data = q.codes.iter().map(|&c| c as f64 * q.scale).collect();
    Tensor::from_vec(q.shape, data).expect("quantized shape is valid")
}
