//! Central finite-difference utilities used by the test suites.
//!
//! Every backward pass in this crate is checked against these routines.
//! They depend only on forward evaluations, never on the analytic
//! gradients they verify.

/// Central finite differences of a scalar function at `x`, step `eps`.
///
/// `f` must be a pure function of its argument; `x` is restored between
/// evaluations, so `f` may be called with perturbed copies freely.
pub fn central_diff<F>(mut f: F, x: &[f64], eps: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut xs = x.to_vec();
    let mut grad = vec![0.0; x.len()];
    for i in 0..x.len() {
        let orig = xs[i];
        xs[i] = orig + eps;
        let fp = f(&xs);
        xs[i] = orig - eps;
        let fm = f(&xs);
        xs[i] = orig;
        grad[i] = (fp - fm) / (2.0 * eps);
    }
    grad
}

/// Max relative error between analytic and numeric gradients.
///
/// The denominator is floored at 1e-4 so near-zero components are compared
/// absolutely at the same precision the relative threshold demands.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient length mismatch");
    analytic
        .iter()
        .zip(numeric.iter())
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-4))
        .fold(0.0, f64::max)
}

/// Default step for all finite-difference checks in the crate.
pub const FD_EPS: f64 = 1e-5;

/// Default relative-error ceiling for gradient checks.
pub const FD_TOL: f64 = 1e-4;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient() {
        // f(x) = sum x_i^2, grad = 2x
        let x = [0.3, -1.2, 2.5];
        let num = central_diff(|v| v.iter().map(|a| a * a).sum(), &x, FD_EPS);
        let ana: Vec<f64> = x.iter().map(|a| 2.0 * a).collect();
        assert!(max_rel_err(&ana, &num) < 1e-8);
    }
}
