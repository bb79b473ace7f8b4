use crate::error::{Error, Result};
use crate::oracle::Problem;
use crate::params::dot;

/// Mean of per-sample quadratics `J_n(θ) = ½ θᵀH_nθ + c_nᵀθ`.
///
/// Each `H_n` is symmetric, stored row-major, and may be indefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProblem {
    dim: usize,
    samples: Vec<(Vec<f64>, Vec<f64>)>,
}

impl QuadraticProblem {
    pub fn new(dim: usize, samples: Vec<(Vec<f64>, Vec<f64>)>) -> Result<Self> {
        if dim == 0 || samples.is_empty() {
            return Err(Error::invalid("quadratic needs P >= 1 and N >= 1"));
        }
        for (h, c) in &samples {
            if h.len() != dim * dim {
                return Err(Error::DimensionMismatch { expected: dim * dim, got: h.len() });
            }
            if c.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: c.len() });
            }
            for i in 0..dim {
                for j in 0..i {
                    if h[i * dim + j] != h[j * dim + i] {
                        return Err(Error::invalid("per-sample Hessian must be symmetric"));
                    }
                }
            }
        }
        Ok(QuadraticProblem { dim, samples })
    }

    /// `n` identical copies of `½ θᵀHθ`.
    pub fn from_matrix(dim: usize, h: Vec<f64>, n: usize) -> Result<Self> {
        Self::new(dim, vec![(h, vec![0.0; dim]); n.max(1)])
    }

    /// `n` identical copies of `(scale/2) ‖θ‖²`.
    pub fn isotropic(dim: usize, scale: f64, n: usize) -> Self {
        Self::diagonal(&vec![scale; dim], n)
    }

    pub fn diagonal(diag: &[f64], n: usize) -> Self {
        let dim = diag.len();
        let mut h = vec![0.0; dim * dim];
        for (i, d) in diag.iter().enumerate() {
            h[i * dim + i] = *d;
        }
        Self::from_matrix(dim, h, n).expect("diagonal matrices are symmetric")
    }

    /// Identically zero objective.
    pub fn zero(dim: usize, n: usize) -> Self {
        Self::isotropic(dim, 0.0, n)
    }

    /// Mean Hessian, row-major.
    pub fn mean_hessian(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim * self.dim];
        for (h, _) in &self.samples {
            for (o, v) in out.iter_mut().zip(h) {
                *o += v;
            }
        }
        let inv = 1.0 / self.samples.len() as f64;
        out.iter_mut().for_each(|v| *v *= inv);
        out
    }

    fn mat_vec(&self, h: &[f64], v: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(&h[i * self.dim..(i + 1) * self.dim], v);
        }
    }
}

impl Problem for QuadraticProblem {
    fn num_samples(&self) -> usize {
        self.samples.len()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn sample_loss(&self, n: usize, theta: &[f64]) -> f64 {
        let (h, c) = &self.samples[n];
        let mut ht = vec![0.0; self.dim];
        self.mat_vec(h, theta, &mut ht);
        0.5 * dot(theta, &ht) + dot(c, theta)
    }

    fn sample_grad(&self, n: usize, theta: &[f64], out: &mut [f64]) {
        let (h, c) = &self.samples[n];
        self.mat_vec(h, theta, out);
        for (o, ci) in out.iter_mut().zip(c) {
            *o += ci;
        }
    }

    fn has_hvp(&self) -> bool {
        true
    }

    fn sample_hvp(&self, n: usize, _theta: &[f64], v: &[f64], out: &mut [f64]) -> Result<()> {
        self.mat_vec(&self.samples[n].0, v, out);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{eval_loss, full_grad};

    #[test]
    fn gradient_is_exact() {
        let q = QuadraticProblem::new(
            2,
            vec![
                (vec![2.0, 1.0, 1.0, 3.0], vec![1.0, 0.0]),
                (vec![0.0, 0.0, 0.0, -1.0], vec![0.0, 2.0]),
            ],
        )
        .unwrap();
        let theta = [1.0, -1.0];
        // sample 0: Hθ + c = (2-1+1, 1-3) = (2, -2); sample 1: (0, 1+2) = (0, 3)
        assert_eq!(full_grad(&q, &theta).unwrap().as_slice(), &[1.0, 0.5]);
        // sample 0: ½(2 - 2 + 3) + 1 = 2.5; sample 1: ½(-1) - 2 = -2.5
        assert_eq!(eval_loss(&q, &theta).unwrap(), 0.0);
    }

    #[test]
    fn rejects_asymmetric() {
        assert!(QuadraticProblem::new(2, vec![(vec![1.0, 2.0, 0.0, 1.0], vec![0.0, 0.0])]).is_err());
    }
}
