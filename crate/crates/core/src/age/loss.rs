use crate::error::{Error, Result};

/// Truth ages in this inclusive band get their loss multiplied.
pub const WEIGHTED_BAND: (f64, f64) = (10.0, 29.0);
pub const WEIGHTED_BAND_FACTOR: f64 = 3.0;

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("beta must be positive, got {beta}")))
    }
}

/// Quadratic within `beta` of zero error, linear beyond. Continuous at the junction.
pub fn smoothed_l1(a: f64, a_hat: f64, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    let d = (a - a_hat).abs();
    Ok(if d < beta { 0.5 * d * d / beta } else { d - 0.5 * beta })
}

/// Derivative of [`smoothed_l1`] with respect to `a_hat`.
pub fn smoothed_l1_grad(a: f64, a_hat: f64, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    let d = a_hat - a;
    Ok(if d.abs() < beta { d / beta } else { d.signum() })
}

pub fn band_weight(a: f64) -> f64 {
    if (WEIGHTED_BAND.0..=WEIGHTED_BAND.1).contains(&a) {
        WEIGHTED_BAND_FACTOR
    } else {
        1.0
    }
}

pub fn weighted_loss(a: f64, a_hat: f64, beta: f64) -> Result<f64> {
    Ok(band_weight(a) * smoothed_l1(a, a_hat, beta)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn branch_values() {
        assert_eq!(smoothed_l1(20.0, 20.0, 1.0).unwrap(), 0.0);
        assert!((smoothed_l1(0.0, 0.5, 1.0).unwrap() - 0.125).abs() < 1e-12);
        assert!((smoothed_l1(0.0, 3.0, 1.0).unwrap() - 2.5).abs() < 1e-12);
        assert!((smoothed_l1(20.0, 15.0, 1.0).unwrap() - 4.5).abs() < 1e-12);
        let below = smoothed_l1(0.0, 2.0 - 1e-12, 2.0).unwrap();
        let at = smoothed_l1(0.0, 2.0, 2.0).unwrap();
        assert!((at - 1.0).abs() < 1e-12 && (below - at).abs() < 1e-9);
    }

    #[test]
    fn band_weighting() {
        assert!((weighted_loss(15.0, 20.0, 1.0).unwrap() - 13.5).abs() < 1e-12);
        assert!((weighted_loss(40.0, 45.0, 1.0).unwrap() - 4.5).abs() < 1e-12);
        let r = weighted_loss(29.0, 33.0, 1.0).unwrap() / weighted_loss(30.0, 34.0, 1.0).unwrap();
        assert_eq!(r, 3.0);
        assert!(smoothed_l1(1.0, 2.0, 0.0).is_err());
        assert!(weighted_loss(1.0, 2.0, -1.0).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for &(a, ah, b) in &[(10.0, 10.3, 1.0), (10.0, 7.0, 1.0), (3.0, 3.9, 2.0), (50.0, 60.0, 0.5)] {
            let h = 1e-6;
            let fd = (smoothed_l1(a, ah + h, b).unwrap() - smoothed_l1(a, ah - h, b).unwrap()) / (2.0 * h);
            let g = smoothed_l1_grad(a, ah, b).unwrap();
            assert!((fd - g).abs() <= 1e-5 * g.abs().max(1e-3));
        }
    }
}
