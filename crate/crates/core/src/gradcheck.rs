//! Central finite differences, the reference every analytic gradient in the
//! crate is checked against.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// `(f(x + h·e_k) − f(x − h·e_k)) / 2h` for every coordinate `k`.
pub fn finite_diff_grad<F>(mut f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidInput(alloc::format!(
            "step size must be positive, got {h}"
        )));
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for k in 0..x.len() {
        let orig = probe[k];
        probe[k] = orig + h;
        let plus = f(&probe);
        probe[k] = orig - h;
        let minus = f(&probe);
        probe[k] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Oracle { coordinate: k });
        }
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}

/// `‖a − b‖₂ / max(‖a‖₂, ‖b‖₂)`, or 0 when both vectors vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    let na: f64 = a.iter().map(|x| x * x).sum();
    let nb: f64 = b.iter().map(|x| x * x).sum();
    let denom = libm::sqrt(na.max(nb));
    if denom == 0.0 {
        0.0
    } else {
        libm::sqrt(diff) / denom
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_function_has_zero_gradient() {
        let g = finite_diff_grad(|_| 3.5, &[1.0, -2.0, 0.0], 1e-5).unwrap();
        assert_eq!(g, alloc::vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn square_at_three() {
        let g = finite_diff_grad(|x| x[0] * x[0], &[3.0], 1e-5).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-6);
    }

    #[test]
    fn non_finite_value_names_coordinate() {
        let err = finite_diff_grad(
            |x| if x[1] > 1.0 { f64::NAN } else { 0.0 },
            &[0.0, 1.0],
            1e-3,
        )
        .unwrap_err();
        assert_eq!(err, Error::Oracle { coordinate: 1 });
    }

    #[test]
    fn rejects_bad_step() {
        assert!(finite_diff_grad(|_| 0.0, &[0.0], 0.0).is_err());
        assert!(finite_diff_grad(|_| 0.0, &[0.0], -1.0).is_err());
    }

    #[test]
    fn relative_error_basics() {
        assert_eq!(relative_error(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert_eq!(relative_error(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert!((relative_error(&[1.0, 0.0], &[0.0, 0.0]) - 1.0).abs() < 1e-15);
    }
}
