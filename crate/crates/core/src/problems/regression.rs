//! Robust non-convex regression `J(θ) = (1/N) Σ_n φ(A_nᵀθ − b_n)` with the
//! bounded loss `φ(t) = t²/(1+t²)`.

use crate::error::{Error, Result};
use crate::oracle::Problem;
use crate::params::dot;
use crate::rng::{streams, RngStream};

/// `φ(t) = t² / (1 + t²)`
pub fn phi(t: f64) -> f64 {
    let t2 = t * t;
    t2 / (1.0 + t2)
}

/// `φ′(t) = 2t / (1 + t²)²`
pub fn phi_prime(t: f64) -> f64 {
    let d = 1.0 + t * t;
    2.0 * t / (d * d)
}

/// `φ″(t) = (2 − 6t²) / (1 + t²)³`; negative for `|t| > 1/√3`.
pub fn phi_second(t: f64) -> f64 {
    let t2 = t * t;
    let d = 1.0 + t2;
    (2.0 - 6.0 * t2) / (d * d * d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionProblem {
    n: usize,
    p: usize,
    /// Row-major `N × P`.
    a: Vec<f64>,
    b: Vec<f64>,
    seed: u64,
}

impl RegressionProblem {
    pub fn new(n: usize, p: usize, a: Vec<f64>, b: Vec<f64>, seed: u64) -> Result<Self> {
        if n == 0 || p == 0 {
            return Err(Error::invalid("regression needs N, P >= 1"));
        }
        if a.len() != n * p {
            return Err(Error::DimensionMismatch { expected: n * p, got: a.len() });
        }
        if b.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: b.len() });
        }
        Ok(RegressionProblem { n, p, a, b, seed })
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.a[n * self.p..(n + 1) * self.p]
    }

    pub fn matrix(&self) -> &[f64] {
        &self.a
    }

    pub fn targets(&self) -> &[f64] {
        &self.b
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn residual(&self, n: usize, theta: &[f64]) -> f64 {
        dot(self.row(n), theta) - self.b[n]
    }
}

impl Problem for RegressionProblem {
    fn num_samples(&self) -> usize {
        self.n
    }

    fn dim(&self) -> usize {
        self.p
    }

    fn sample_loss(&self, n: usize, theta: &[f64]) -> f64 {
        phi(self.residual(n, theta))
    }

    fn sample_grad(&self, n: usize, theta: &[f64], out: &mut [f64]) {
        let scale = phi_prime(self.residual(n, theta));
        for (o, a) in out.iter_mut().zip(self.row(n)) {
            *o = scale * a;
        }
    }

    fn has_hvp(&self) -> bool {
        true
    }

    fn sample_hvp(&self, n: usize, theta: &[f64], v: &[f64], out: &mut [f64]) -> Result<()> {
        let row = self.row(n);
        let scale = phi_second(self.residual(n, theta)) * dot(row, v);
        for (o, a) in out.iter_mut().zip(row) {
            *o = scale * a;
        }
        Ok(())
    }
}

/// Seeded synthetic instance: `A_ij ~ N(0,1)/√P`, `b_n ~ 2·N(0,1)`.
///
/// `A` is drawn row-major first, then `b`, from the `PROBLEM` stream.
pub fn generate_regression(seed: u64, n: usize, p: usize) -> Result<RegressionProblem> {
    if n == 0 || p == 0 {
        return Err(Error::invalid("regression needs N, P >= 1"));
    }
    let mut rng = RngStream::with_stream(seed, streams::PROBLEM);
    let scale = 1.0 / (p as f64).sqrt();
    let a: Vec<f64> = (0..n * p).map(|_| rng.standard_normal() * scale).collect();
    let b: Vec<f64> = (0..n).map(|_| 2.0 * rng.standard_normal()).collect();
    RegressionProblem::new(n, p, a, b, seed)
}
