//! Central-difference gradient oracle.
//!
//! Deliberately independent of the tape: it only evaluates the target
//! function, so it can vouch for the backward rules.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Estimate the gradient of a scalar-valued function by central differences,
/// `(f(x + step e_i) - f(x - step e_i)) / (2 step)` per coordinate.
pub fn finite_difference_gradient<F>(mut f: F, x: &Tensor, step: f64) -> Result<Tensor>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    if !step.is_finite() || step <= 0.0 {
        return Err(Error::Config(format!(
            "finite-difference step {step} must be > 0"
        )));
    }
    let mut grad = Tensor::zeros(x.shape().to_vec());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + step;
        let plus = f(&probe)?;
        probe.data_mut()[i] = orig - step;
        let minus = f(&probe)?;
        probe.data_mut()[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite function value at coordinate {i} during finite differences"
            )));
        }
        grad.data_mut()[i] = (plus - minus) / (2.0 * step);
    }
    Ok(grad)
}

/// Relative error with an absolute floor, `|a - b| / max(|b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / b.abs().max(floor)
}

/// Largest relative error between two gradients of equal shape.
pub fn max_relative_error(autodiff: &Tensor, oracle: &Tensor, floor: f64) -> f64 {
    autodiff
        .data()
        .iter()
        .zip(oracle.data())
        .map(|(&a, &b)| relative_error(a, b, floor))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient() {
        // f(x) = x^2 at x = 3 has derivative 6.
        let f = |t: &Tensor| Ok(t.data()[0] * t.data()[0]);
        let x = Tensor::scalar(3.0);
        let g = finite_difference_gradient(f, &x, 1e-5).unwrap();
        assert!((g.data()[0] - 6.0).abs() < 1e-8);
    }

    #[test]
    fn constant_function_gives_zeros() {
        let f = |_: &Tensor| Ok(7.0);
        let x = Tensor::from_vec(vec![3], vec![1.0, -2.0, 0.5]).unwrap();
        let g = finite_difference_gradient(f, &x, 1e-5).unwrap();
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn relu_sum_gradient_is_sign_mask() {
        let f = |t: &Tensor| Ok(t.data().iter().map(|&v| v.max(0.0)).sum());
        let x = Tensor::from_vec(vec![2], vec![-1.0, 1.0]).unwrap();
        let g = finite_difference_gradient(f, &x, 1e-5).unwrap();
        assert!((g.data()[0]).abs() < 1e-10);
        assert!((g.data()[1] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn rejects_nonpositive_step() {
        let f = |t: &Tensor| Ok(t.data()[0]);
        assert!(finite_difference_gradient(f, &Tensor::scalar(1.0), 0.0).is_err());
        assert!(finite_difference_gradient(f, &Tensor::scalar(1.0), -1e-5).is_err());
    }

    #[test]
    fn rejects_non_finite_output() {
        let f = |t: &Tensor| Ok(1.0 / (t.data()[0] - t.data()[0]));
        assert!(finite_difference_gradient(f, &Tensor::scalar(1.0), 1e-5).is_err());
    }
}
