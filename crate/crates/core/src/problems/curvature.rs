//! The curvature term `𝒞_{J_B}(θ) = ∇²J_B(θ) ∇J_B(θ)` and its expectation
//! over uniformly drawn mini-batches.

use crate::error::{Error, Result};
use crate::oracle::{batch_grad, batch_hvp, Problem};
use crate::params::{axpy, ParamVector};
use crate::rng::MiniBatch;

/// `∇²J_B(θ) ∇J_B(θ)`, i.e. the gradient of `½‖∇J_B(θ)‖²`.
pub fn curvature_term<P: Problem + ?Sized>(
    problem: &P,
    theta: &[f64],
    batch: &MiniBatch,
) -> Result<ParamVector> {
    if !problem.has_hvp() {
        return Err(Error::Unsupported("Hessian-vector products"));
    }
    let g = batch_grad(problem, theta, batch)?;
    batch_hvp(problem, theta, batch, &g)
}

/// `E_S[∇²J_S(θ) ∇J_S(θ)]` over uniform size-`b` subsets `S`.
///
/// Expanding the product over pairs of samples gives
/// `(1/(bN)) Σ_n H_n g_n + (b−1)/(bN(N−1)) · (Σ_n H_n g_tot − Σ_n H_n g_n)`
/// with `g_tot = Σ_n g_n`, costing `2N` per-sample Hessian-vector products.
pub fn expected_curvature<P: Problem + ?Sized>(
    problem: &P,
    theta: &[f64],
    b: usize,
) -> Result<ParamVector> {
    if !problem.has_hvp() {
        return Err(Error::Unsupported("Hessian-vector products"));
    }
    let n = problem.num_samples();
    let dim = problem.dim();
    if b < 1 || b > n {
        return Err(Error::invalid(format!("batch size {b} must lie in [1, {n}]")));
    }
    if theta.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: theta.len() });
    }

    let mut grads = vec![0.0; n * dim];
    let mut g_tot = vec![0.0; dim];
    for i in 0..n {
        let g = &mut grads[i * dim..(i + 1) * dim];
        problem.sample_grad(i, theta, g);
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericOverflow { index: i });
        }
        axpy(1.0, g, &mut g_tot);
    }

    let mut diag = vec![0.0; dim];
    let mut cross = vec![0.0; dim];
    let mut scratch = vec![0.0; dim];
    for i in 0..n {
        problem.sample_hvp(i, theta, &grads[i * dim..(i + 1) * dim], &mut scratch)?;
        axpy(1.0, &scratch, &mut diag);
        problem.sample_hvp(i, theta, &g_tot, &mut scratch)?;
        axpy(1.0, &scratch, &mut cross);
    }

    let (nf, bf) = (n as f64, b as f64);
    let w_diag = 1.0 / (bf * nf);
    let w_cross = if n > 1 {
        (bf - 1.0) / (bf * nf * (nf - 1.0))
    } else {
        0.0
    };
    Ok(diag
        .iter()
        .zip(&cross)
        .map(|(d, c)| w_diag * d + w_cross * (c - d))
        .collect::<Vec<_>>()
        .into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{generate_regression, QuadraticProblem};
    use approx::assert_abs_diff_eq;

    #[test]
    fn full_batch_equals_exact_curvature() {
        let p = generate_regression(1, 6, 3).unwrap();
        let theta = [0.4, -0.2, 1.1];
        let expected = expected_curvature(&p, &theta, 6).unwrap();
        let exact = curvature_term(&p, &theta, &MiniBatch::full(6)).unwrap();
        for (a, b) in expected.iter().zip(exact.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn singleton_batches_average_per_sample_terms() {
        let p = generate_regression(2, 5, 3).unwrap();
        let theta = [0.1, 0.2, -0.3];
        let expected = expected_curvature(&p, &theta, 1).unwrap();
        let mut mean = vec![0.0; 3];
        for n in 0..5 {
            let c = curvature_term(&p, &theta, &MiniBatch::new(vec![n], 5).unwrap()).unwrap();
            axpy(0.2, &c, &mut mean);
        }
        for (a, b) in expected.iter().zip(&mean) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn quadratic_curvature_is_h_squared_theta() {
        let q = QuadraticProblem::diagonal(&[1.0, 4.0], 3);
        let c = curvature_term(&q, &[1.0, 1.0], &MiniBatch::full(3)).unwrap();
        assert_eq!(c.as_slice(), &[1.0, 16.0]);
    }

    #[test]
    fn rejects_oversized_batch() {
        let p = generate_regression(2, 5, 3).unwrap();
        assert!(matches!(
            expected_curvature(&p, &[0.0; 3], 6),
            Err(Error::InvalidArgument(_))
        ));
    }
}
