use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizers::{BatchSource, RunStatus, StepInfo, Stepper};
use crate::oracle::{eval_loss, full_grad, Problem};
use crate::params::ParamVector;

/// Backtracking stops (and the run fails) after this many reductions.
pub const MAX_BACKTRACKS: u32 = 60;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArmijoConfig {
    pub step0: f64,
    /// Sufficient-decrease constant.
    pub c: f64,
    /// Backtracking factor.
    pub tau: f64,
}

impl Default for ArmijoConfig {
    fn default() -> Self {
        ArmijoConfig {
            step0: 1.0,
            c: 1e-4,
            tau: 0.5,
        }
    }
}

/// Full-batch gradient descent with Armijo backtracking restarted from
/// `step0` at every iterate.
pub struct ArmijoGd<'a, P: Problem + ?Sized> {
    problem: &'a P,
    config: ArmijoConfig,
    theta: ParamVector,
}

impl<'a, P: Problem + ?Sized> ArmijoGd<'a, P> {
    pub fn new(problem: &'a P, theta0: ParamVector, config: ArmijoConfig) -> Result<Self> {
        if !(config.step0 > 0.0 && config.c > 0.0 && config.c < 1.0 && config.tau > 0.0 && config.tau < 1.0) {
            return Err(Error::Config(
                "armijo needs step0 > 0, c in (0,1), tau in (0,1)".into(),
            ));
        }
        Ok(ArmijoGd {
            problem,
            config,
            theta: theta0,
        })
    }
}

impl<P: Problem + ?Sized> Stepper for ArmijoGd<'_, P> {
    fn theta(&self) -> &ParamVector {
        &self.theta
    }

    fn step(&mut self, _k: u64, _batches: &mut dyn BatchSource) -> Result<StepInfo> {
        let grad = full_grad(self.problem, &self.theta)?;
        let f0 = eval_loss(self.problem, &self.theta)?;
        let slope = grad.norm_sq();
        let mut s = self.config.step0;
        let mut fn_evals = 1;
        let mut backtracks = 0;
        loop {
            let trial = self.theta.step(s, &grad);
            fn_evals += 1;
            // a non-finite trial value simply fails the test
            let f = eval_loss(self.problem, &trial).unwrap_or(f64::INFINITY);
            if f <= f0 - self.config.c * s * slope {
                self.theta = trial;
                break;
            }
            backtracks += 1;
            if backtracks > MAX_BACKTRACKS {
                return Ok(StepInfo {
                    grad_evals: 1,
                    fn_evals,
                    failure: Some(RunStatus::LineSearchFailure),
                    ..StepInfo::default()
                });
            }
            s *= self.config.tau;
        }
        Ok(StepInfo {
            eta: Some(s),
            grad_evals: 1,
            fn_evals,
            ..StepInfo::default()
        })
    }
}
