use alloc::vec::Vec;

use super::NumericsError;

/// `|a - n| / max(1e-8, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = libm::fabs(analytic) + libm::fabs(numeric);
    libm::fabs(analytic - numeric) / denom.max(1e-8)
}

/// Compare `analytic` against central differences of `loss` around `theta`
/// and return the worst relative error over all coordinates.
pub fn grad_check<F>(theta: &[f64], analytic: &[f64], step: f64, mut loss: F) -> Result<f64, NumericsError>
where
    F: FnMut(&[f64]) -> f64,
{
    if theta.len() != analytic.len() {
        return Err(NumericsError::Shape {
            op: "grad_check",
            expected: theta.len(),
            found: analytic.len(),
        });
    }
    let mut probe: Vec<f64> = theta.to_vec();
    let mut worst = 0.0f64;
    for idx in 0..theta.len() {
        let orig = probe[idx];
        probe[idx] = orig + step;
        let plus = loss(&probe);
        probe[idx] = orig - step;
        let minus = loss(&probe);
        probe[idx] = orig;
        for value in [plus, minus] {
            if !value.is_finite() {
                return Err(NumericsError::NonFiniteLoss { index: idx, value });
            }
        }
        let numeric = (plus - minus) / (2.0 * step);
        worst = worst.max(relative_error(analytic[idx], numeric));
    }
    Ok(worst)
}
