//! Finite-sum objectives `J(θ) = (1/N) Σ_n J_n(θ)` and their mini-batch
//! restrictions.

use crate::error::{Error, Result};
use crate::params::{axpy, ParamVector};
use crate::rng::MiniBatch;

/// A finite-sum objective exposed sample by sample.
///
/// Implementations are immutable after construction and may be shared
/// across concurrent runs.
pub trait Problem: Sync {
    /// Number of samples `N`.
    fn num_samples(&self) -> usize;

    /// Parameter dimension `P`.
    fn dim(&self) -> usize;

    /// `J_n(θ)`
    fn sample_loss(&self, n: usize, theta: &[f64]) -> f64;

    /// Writes `∇J_n(θ)` into `out`, overwriting it.
    fn sample_grad(&self, n: usize, theta: &[f64], out: &mut [f64]);

    /// Whether [`Problem::sample_hvp`] is implemented.
    fn has_hvp(&self) -> bool {
        false
    }

    /// Writes `∇²J_n(θ) v` into `out`.
    fn sample_hvp(&self, _n: usize, _theta: &[f64], _v: &[f64], _out: &mut [f64]) -> Result<()> {
        Err(Error::Unsupported("Hessian-vector products"))
    }
}

fn check_dim<P: Problem + ?Sized>(problem: &P, theta: &[f64]) -> Result<()> {
    if theta.len() != problem.dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.dim(),
            got: theta.len(),
        });
    }
    Ok(())
}

fn check_batch<P: Problem + ?Sized>(problem: &P, batch: &MiniBatch) -> Result<()> {
    match batch.indices().last() {
        None => Err(Error::invalid("empty mini-batch")),
        Some(&i) if i >= problem.num_samples() => Err(Error::invalid(format!(
            "batch index {i} out of range for {} samples",
            problem.num_samples()
        ))),
        _ => Ok(()),
    }
}

fn mean_grad<P, I>(problem: &P, theta: &[f64], indices: I, count: usize) -> Result<ParamVector>
where
    P: Problem + ?Sized,
    I: IntoIterator<Item = usize>,
{
    let dim = problem.dim();
    let mut acc = ParamVector::zeros(dim);
    let mut scratch = vec![0.0; dim];
    for n in indices {
        problem.sample_grad(n, theta, &mut scratch);
        if scratch.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericOverflow { index: n });
        }
        axpy(1.0, &scratch, &mut acc);
    }
    let inv = 1.0 / count as f64;
    acc.iter_mut().for_each(|v| *v *= inv);
    Ok(acc)
}

fn mean_loss<P, I>(problem: &P, theta: &[f64], indices: I, count: usize) -> Result<f64>
where
    P: Problem + ?Sized,
    I: IntoIterator<Item = usize>,
{
    let mut acc = 0.0;
    for n in indices {
        let v = problem.sample_loss(n, theta);
        if !v.is_finite() {
            return Err(Error::NumericOverflow { index: n });
        }
        acc += v;
    }
    Ok(acc / count as f64)
}

/// `∇J_B(θ) = (1/|B|) Σ_{n∈B} ∇J_n(θ)`, accumulated in ascending index order.
pub fn batch_grad<P: Problem + ?Sized>(
    problem: &P,
    theta: &[f64],
    batch: &MiniBatch,
) -> Result<ParamVector> {
    check_dim(problem, theta)?;
    check_batch(problem, batch)?;
    mean_grad(problem, theta, batch.indices().iter().copied(), batch.len())
}

/// `∇J(θ)`, the mean of all per-sample gradients.
pub fn full_grad<P: Problem + ?Sized>(problem: &P, theta: &[f64]) -> Result<ParamVector> {
    check_dim(problem, theta)?;
    let n = problem.num_samples();
    mean_grad(problem, theta, 0..n, n)
}

/// `J(θ)`, the exact objective used for trace logging.
pub fn eval_loss<P: Problem + ?Sized>(problem: &P, theta: &[f64]) -> Result<f64> {
    check_dim(problem, theta)?;
    let n = problem.num_samples();
    mean_loss(problem, theta, 0..n, n)
}

/// `J_B(θ)`
pub fn eval_batch_loss<P: Problem + ?Sized>(
    problem: &P,
    theta: &[f64],
    batch: &MiniBatch,
) -> Result<f64> {
    check_dim(problem, theta)?;
    check_batch(problem, batch)?;
    mean_loss(problem, theta, batch.indices().iter().copied(), batch.len())
}

/// `∇²J_B(θ) v`
pub fn batch_hvp<P: Problem + ?Sized>(
    problem: &P,
    theta: &[f64],
    batch: &MiniBatch,
    v: &[f64],
) -> Result<ParamVector> {
    check_dim(problem, theta)?;
    check_batch(problem, batch)?;
    let dim = problem.dim();
    let mut acc = ParamVector::zeros(dim);
    let mut scratch = vec![0.0; dim];
    for &n in batch.indices() {
        problem.sample_hvp(n, theta, v, &mut scratch)?;
        axpy(1.0, &scratch, &mut acc);
    }
    let inv = 1.0 / batch.len() as f64;
    acc.iter_mut().for_each(|x| *x *= inv);
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::QuadraticProblem;

    /// N=2, J₁(θ)=½θ², J₂(θ)=θ.
    fn two_sample() -> QuadraticProblem {
        QuadraticProblem::new(1, vec![(vec![1.0], vec![0.0]), (vec![0.0], vec![1.0])]).unwrap()
    }

    #[test]
    fn batch_grad_two_sample() {
        let p = two_sample();
        let full = MiniBatch::full(2);
        assert_eq!(batch_grad(&p, &[1.0], &full).unwrap().as_slice(), &[1.0]);
        let second = MiniBatch::new(vec![1], 2).unwrap();
        assert_eq!(batch_grad(&p, &[1.0], &second).unwrap().as_slice(), &[1.0]);
    }

    #[test]
    fn quadratic_minimum() {
        let p = QuadraticProblem::isotropic(3, 1.0, 4);
        let zero = [0.0; 3];
        assert_eq!(eval_loss(&p, &zero).unwrap(), 0.0);
        assert_eq!(full_grad(&p, &zero).unwrap().as_slice(), &zero);
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = two_sample();
        assert!(matches!(
            full_grad(&p, &[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        let bad = MiniBatch::full(3);
        assert!(batch_grad(&p, &[1.0], &bad).is_err());
    }

    struct Exploding;

    impl Problem for Exploding {
        fn num_samples(&self) -> usize {
            3
        }
        fn dim(&self) -> usize {
            1
        }
        fn sample_loss(&self, n: usize, _theta: &[f64]) -> f64 {
            if n == 2 { f64::INFINITY } else { 0.0 }
        }
        fn sample_grad(&self, n: usize, _theta: &[f64], out: &mut [f64]) {
            out[0] = if n == 2 { f64::NAN } else { 0.0 };
        }
    }

    #[test]
    fn non_finite_sample_reports_index() {
        match full_grad(&Exploding, &[0.0]) {
            Err(Error::NumericOverflow { index }) => assert_eq!(index, 2),
            other => panic!("unexpected {other:?}"),
        }
        match eval_loss(&Exploding, &[0.0]) {
            Err(Error::NumericOverflow { index }) => assert_eq!(index, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            batch_hvp(&Exploding, &[0.0], &MiniBatch::full(3), &[1.0]),
            Err(Error::Unsupported(_))
        ));
    }
}
