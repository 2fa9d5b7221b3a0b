//! Central-difference gradient estimation, the oracle every analytic
//! backward pass in this crate is tested against.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Central-difference gradient of a scalar function of a tensor list:
/// `(f(p + h·e_i) − f(p − h·e_i)) / (2h)` per coordinate.
///
/// The returned tensors mirror the shapes of `params`. A non-finite value of
/// `f` aborts with the flat coordinate index at which it occurred.
pub fn finite_diff_gradient<F>(mut f: F, params: &[Tensor], h: f64) -> Result<Vec<Tensor>>
where
    F: FnMut(&[Tensor]) -> Result<f64>,
{
    if h <= 0.0 {
        return Err(Error::config("h", format!("step must be positive, got {h}")));
    }
    let mut work: Vec<Tensor> = params.to_vec();
    let mut grads: Vec<Tensor> = params.iter().map(|t| Tensor::zeros(t.shape())).collect();
    let mut flat = 0usize;
    for ti in 0..work.len() {
        for k in 0..work[ti].len() {
            let orig = work[ti].data()[k];
            work[ti].data_mut()[k] = orig + h;
            let plus = f(&work)?;
            work[ti].data_mut()[k] = orig - h;
            let minus = f(&work)?;
            work[ti].data_mut()[k] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite {
                    context: "finite_diff_gradient".to_string(),
                    index: Some(flat),
                });
            }
            grads[ti].data_mut()[k] = (plus - minus) / (2.0 * h);
            flat += 1;
        }
    }
    Ok(grads)
}

/// Worst per-coordinate relative error between two gradient lists, with
/// denominator `max(|a|, |b|, 1e-8)`.
pub fn max_relative_error(analytic: &[Tensor], estimate: &[Tensor]) -> f64 {
    assert_eq!(analytic.len(), estimate.len(), "gradient lists differ in length");
    let mut worst = 0.0f64;
    for (a, b) in analytic.iter().zip(estimate) {
        assert_eq!(a.shape(), b.shape(), "gradient shapes differ");
        for (&x, &y) in a.data().iter().zip(b.data()) {
            let denom = x.abs().max(y.abs()).max(1e-8);
            worst = worst.max((x - y).abs() / denom);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_function_has_zero_gradient() {
        let params = vec![Tensor::vector(vec![1.0, -2.0, 3.0])];
        let grads = finite_diff_gradient(|_| Ok(7.5), &params, 1e-5).unwrap();
        assert!(grads[0].data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn half_squared_norm_gradient_is_the_point() {
        // f(p) = 0.5 * ||p||^2 is quadratic, so central differences are exact
        // up to rounding.
        let params = vec![Tensor::vector(vec![1.0, 2.0])];
        let grads = finite_diff_gradient(
            |p| Ok(0.5 * p[0].data().iter().map(|v| v * v).sum::<f64>()),
            &params,
            1e-5,
        )
        .unwrap();
        assert!((grads[0].data()[0] - 1.0).abs() < 1e-9);
        assert!((grads[0].data()[1] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn non_finite_value_reports_coordinate() {
        let params = vec![Tensor::vector(vec![0.5, 0.5])];
        let err = finite_diff_gradient(
            |p| {
                let v = p[0].data()[1];
                if v > 0.5 {
                    Ok(f64::INFINITY)
                } else {
                    Ok(v)
                }
            },
            &params,
            1e-3,
        )
        .unwrap_err();
        match err {
            Error::NonFinite { index, .. } => assert_eq!(index, Some(1)),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn rejects_nonpositive_step() {
        let params = vec![Tensor::vector(vec![1.0])];
        assert!(finite_diff_gradient(|_| Ok(0.0), &params, 0.0).is_err());
        assert!(finite_diff_gradient(|_| Ok(0.0), &params, -1e-5).is_err());
    }
}
