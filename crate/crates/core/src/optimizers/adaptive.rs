//! ADAM and RMSprop with their usual framework defaults and no decay.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizers::{BatchSource, StepInfo, Stepper};
use crate::oracle::{batch_grad, Problem};
use crate::params::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RmsPropConfig {
    pub rho: f64,
    pub eps: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        RmsPropConfig { rho: 0.99, eps: 1e-8 }
    }
}

fn check_rate(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::Config("learning rate must be positive".into()))
    }
}

pub struct Adam<'a, P: Problem + ?Sized> {
    problem: &'a P,
    alpha: f64,
    config: AdamConfig,
    theta: ParamVector,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl<'a, P: Problem + ?Sized> Adam<'a, P> {
    pub fn new(problem: &'a P, theta0: ParamVector, alpha: f64, config: AdamConfig) -> Result<Self> {
        check_rate(alpha)?;
        if !((0.0..1.0).contains(&config.beta1) && (0.0..1.0).contains(&config.beta2) && config.eps > 0.0) {
            return Err(Error::Config("adam needs beta1, beta2 in [0,1) and eps > 0".into()));
        }
        let dim = theta0.dim();
        Ok(Adam {
            problem,
            alpha,
            config,
            theta: theta0,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            t: 0,
        })
    }

    /// Applies one update from an externally supplied gradient.
    pub fn apply(&mut self, grad: &[f64]) {
        let AdamConfig { beta1, beta2, eps } = self.config;
        self.t = self.t.saturating_add(1);
        let c1 = 1.0 - beta1.powi(self.t);
        let c2 = 1.0 - beta2.powi(self.t);
        for i in 0..grad.len() {
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * grad[i];
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            self.theta[i] -= self.alpha * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

impl<P: Problem + ?Sized> Stepper for Adam<'_, P> {
    fn theta(&self) -> &ParamVector {
        &self.theta
    }

    fn step(&mut self, _k: u64, batches: &mut dyn BatchSource) -> Result<StepInfo> {
        let batch = batches.next_batch()?;
        let grad = batch_grad(self.problem, &self.theta, &batch)?;
        self.apply(&grad);
        Ok(StepInfo {
            eta: Some(self.alpha),
            grad_evals: 1,
            ..StepInfo::default()
        })
    }
}

pub struct RmsProp<'a, P: Problem + ?Sized> {
    problem: &'a P,
    alpha: f64,
    config: RmsPropConfig,
    theta: ParamVector,
    v: Vec<f64>,
}

impl<'a, P: Problem + ?Sized> RmsProp<'a, P> {
    pub fn new(problem: &'a P, theta0: ParamVector, alpha: f64, config: RmsPropConfig) -> Result<Self> {
        check_rate(alpha)?;
        if !((0.0..1.0).contains(&config.rho) && config.eps > 0.0) {
            return Err(Error::Config("rmsprop needs rho in [0,1) and eps > 0".into()));
        }
        let dim = theta0.dim();
        Ok(RmsProp {
            problem,
            alpha,
            config,
            theta: theta0,
            v: vec![0.0; dim],
        })
    }

    pub fn apply(&mut self, grad: &[f64]) {
        let RmsPropConfig { rho, eps } = self.config;
        for i in 0..grad.len() {
            self.v[i] = rho * self.v[i] + (1.0 - rho) * grad[i] * grad[i];
            self.theta[i] -= self.alpha * grad[i] / (self.v[i].sqrt() + eps);
        }
    }
}

impl<P: Problem + ?Sized> Stepper for RmsProp<'_, P> {
    fn theta(&self) -> &ParamVector {
        &self.theta
    }

    fn step(&mut self, _k: u64, batches: &mut dyn BatchSource) -> Result<StepInfo> {
        let batch = batches.next_batch()?;
        let grad = batch_grad(self.problem, &self.theta, &batch)?;
        self.apply(&grad);
        Ok(StepInfo {
            eta: Some(self.alpha),
            grad_evals: 1,
            ..StepInfo::default()
        })
    }
}
