use crate::tensor::Plane;

use super::OpError;

/// Bilinear sample of `plane` at column `x`, row `y`.
///
/// Neighbours outside the plane contribute zero. Integer coordinates return
/// the stored value without any interpolation arithmetic.
pub fn bilinear_sample(plane: Plane<'_>, x: f64, y: f64) -> Result<f64, OpError> {
    if !x.is_finite() || !y.is_finite() {
        return Err(OpError::NonFiniteCoordinate { x, y });
    }
    Ok(sample(plane, y, x))
}

#[inline]
pub(crate) fn sample(plane: Plane<'_>, y: f64, x: f64) -> f64 {
    let y0 = y.floor();
    let x0 = x.floor();
    let fy = y - y0;
    let fx = x - x0;
    let (yi, xi) = (y0 as i64, x0 as i64);
    if fy == 0.0 && fx == 0.0 {
        return plane.get_or_zero(yi, xi);
    }
    let v00 = plane.get_or_zero(yi, xi);
    let v01 = plane.get_or_zero(yi, xi + 1);
    let v10 = plane.get_or_zero(yi + 1, xi);
    let v11 = plane.get_or_zero(yi + 1, xi + 1);
    (1.0 - fy) * ((1.0 - fx) * v00 + fx * v01) + fy * ((1.0 - fx) * v10 + fx * v11)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SQUARE: [f64; 4] = [0.0, 1.0, 2.0, 3.0];

    #[test]
    fn center_is_mean_of_corners() {
        let p = Plane::new(&SQUARE, 2, 2);
        assert_eq!(bilinear_sample(p, 0.5, 0.5).unwrap(), 1.5);
    }

    #[test]
    fn integer_coordinates_pass_through() {
        let p = Plane::new(&SQUARE, 2, 2);
        assert_eq!(bilinear_sample(p, 1.0, 0.0).unwrap(), 1.0);
        assert_eq!(bilinear_sample(p, 0.0, 1.0).unwrap(), 2.0);
        assert_eq!(bilinear_sample(p, 5.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn half_outside_is_half_value() {
        let data = [4.0];
        let p = Plane::new(&data, 1, 1);
        assert_eq!(bilinear_sample(p, -0.5, 0.0).unwrap(), 2.0);
    }

    #[test]
    fn nan_rejected() {
        let p = Plane::new(&SQUARE, 2, 2);
        assert!(bilinear_sample(p, f64::NAN, 0.0).is_err());
        assert!(bilinear_sample(p, 0.0, f64::INFINITY).is_err());
    }

    #[test]
    fn far_outside_is_zero() {
        let p = Plane::new(&SQUARE, 2, 2);
        assert_eq!(bilinear_sample(p, -3.25, 7.5).unwrap(), 0.0);
    }
}
