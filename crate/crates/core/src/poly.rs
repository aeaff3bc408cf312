//! Complex polynomial roots via companion-matrix eigenvalues.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

const SCHUR_EPS: f64 = 1e-15;
const SCHUR_MAX_ITER: usize = 10_000;

/// Evaluates `sum coeffs[k] x^k` and its derivative (Horner).
pub fn eval_with_derivative(coeffs: &[Complex64], x: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &a in coeffs.iter().rev() {
        dp = dp * x + p;
        p = p * x + a;
    }
    (p, dp)
}

/// Roots of `sum coeffs[k] x^k` (coefficients in ascending degree).
///
/// The leading coefficient must be nonzero. Each eigenvalue of the
/// companion matrix gets one Newton step, kept only if it lowers `|P(x)|`.
pub fn roots(coeffs: &[Complex64]) -> Result<Vec<Complex64>> {
    let degree = coeffs.len().saturating_sub(1);
    if degree == 0 {
        return Ok(Vec::new());
    }
    let lead = coeffs[degree];
    if lead.norm() == 0.0 {
        return Err(Error::input("leading polynomial coefficient is zero"));
    }
    if degree == 1 {
        return Ok(vec![-coeffs[0] / lead]);
    }
    let mut companion = DMatrix::<Complex64>::zeros(degree, degree);
    for i in 1..degree {
        companion[(i, i - 1)] = Complex64::new(1.0, 0.0);
    }
    for i in 0..degree {
        companion[(i, degree - 1)] = -coeffs[i] / lead;
    }
    let schur = companion
        .try_schur(SCHUR_EPS, SCHUR_MAX_ITER)
        .ok_or_else(|| Error::NoConvergence {
            message: format!("Schur iteration for degree-{degree} companion matrix"),
            residual: f64::NAN,
        })?;
    let (_, t) = schur.unpack();
    let mut out = Vec::with_capacity(degree);
    for i in 0..degree {
        let x = t[(i, i)];
        let (p, dp) = eval_with_derivative(coeffs, x);
        let mut best = x;
        if dp.norm() > 0.0 {
            let polished = x - p / dp;
            if polished.is_finite() && eval_with_derivative(coeffs, polished).0.norm() < p.norm() {
                best = polished;
            }
        }
        if !best.is_finite() {
            return Err(Error::numerical("non-finite polynomial root"));
        }
        out.push(best);
    }
    Ok(out)
}
