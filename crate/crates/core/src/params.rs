//! Dense parameter vectors and the handful of BLAS-1 style kernels the
//! optimizers need.
//!
//! All reductions run left to right so results are reproducible bit for bit.

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

/// The iterate `θ ∈ ℝ^P`, or any other vector living in parameter space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn zeros(dim: usize) -> Self {
        ParamVector(vec![0.0; dim])
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        ParamVector(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        dot(&self.0, other)
    }

    pub fn norm_sq(&self) -> f64 {
        dot(&self.0, &self.0)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `self - other`
    pub fn sub(&self, other: &[f64]) -> ParamVector {
        debug_assert_eq!(self.0.len(), other.len());
        ParamVector(self.0.iter().zip(other).map(|(a, b)| a - b).collect())
    }

    /// `self - step * direction`
    pub fn step(&self, step: f64, direction: &[f64]) -> ParamVector {
        debug_assert_eq!(self.0.len(), direction.len());
        ParamVector(
            self.0
                .iter()
                .zip(direction)
                .map(|(t, d)| t - step * d)
                .collect(),
        )
    }

    pub fn scale(&self, factor: f64) -> ParamVector {
        ParamVector(self.0.iter().map(|v| v * factor).collect())
    }
}

impl Deref for ParamVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ParamVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(values: Vec<f64>) -> Self {
        ParamVector(values)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// `y += a * x`
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}
