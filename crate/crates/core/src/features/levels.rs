//! Magnitude-spectrum comparisons of aligned reference and test spectrograms.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Upper bound on the signal-to-error ratio, reached by identical inputs.
pub const SER_CAP_DB: f64 = 80.0;

fn check_shapes(reference: &Array2<f64>, test: &Array2<f64>) -> Result<()> {
    if reference.dim() != test.dim() {
        return Err(Error::DimensionMismatch {
            expected: reference.len(),
            got: test.len(),
        });
    }
    Ok(())
}

/// Signal-to-error ratio in dB, capped at [`SER_CAP_DB`].
///
/// `10·log10(Σ|X_T|² / Σ(|X_R| - |X_T|)²)`. A zero numerator with a nonzero
/// error gives the smallest positive normal value in place of zero, so the
/// result stays finite.
pub fn ser(reference: &Array2<f64>, test: &Array2<f64>) -> Result<f64> {
    check_shapes(reference, test)?;
    let signal: f64 = test.iter().map(|t| t * t).sum();
    let error: f64 = reference
        .iter()
        .zip(test)
        .map(|(r, t)| (r - t) * (r - t))
        .sum();
    if error == 0.0 {
        return Ok(SER_CAP_DB);
    }
    let ratio = signal.max(f64::MIN_POSITIVE) / error;
    Ok((10.0 * ratio.log10()).min(SER_CAP_DB))
}

/// Squared magnitude difference normalized by reference energy.
pub fn dm(reference: &Array2<f64>, test: &Array2<f64>) -> Result<f64> {
    check_shapes(reference, test)?;
    let energy: f64 = reference.iter().map(|r| r * r).sum();
    if energy == 0.0 {
        return Err(Error::SilentReferenceSpectrum);
    }
    let error: f64 = reference
        .iter()
        .zip(test)
        .map(|(r, t)| (t - r) * (t - r))
        .sum();
    Ok(error / energy)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(v: &[f64]) -> Array2<f64> {
        Array2::from_shape_vec((2, v.len() / 2), v.to_vec()).unwrap()
    }

    #[test]
    fn identical_inputs() {
        let a = m(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(ser(&a, &a).unwrap(), 80.0);
        assert_eq!(dm(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn half_test_gives_zero_db() {
        let a = m(&[1.0, 2.0, 3.0, 4.0]);
        let b = a.mapv(|x| 0.5 * x);
        assert!(ser(&a, &b).unwrap().abs() < 1e-12);
    }

    #[test]
    fn doubled_test_gives_unit_dm() {
        let a = m(&[1.0, 2.0, 3.0, 4.0]);
        let b = a.mapv(|x| 2.0 * x);
        assert!((dm(&a, &b).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn silent_cases() {
        let a = m(&[1.0, 2.0, 3.0, 4.0]);
        let z = m(&[0.0; 4]);
        let v = ser(&a, &z).unwrap();
        assert!(v.is_finite() && v < -3000.0);
        assert!(matches!(dm(&z, &a), Err(Error::SilentReferenceSpectrum)));
        assert!(ser(&a, &Array2::zeros((1, 4))).is_err());
    }
}
