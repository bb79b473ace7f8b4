use crate::error::Result;
use crate::optimizers::{BatchSource, StepInfo, Stepper};
use crate::oracle::{batch_grad, Problem};
use crate::params::ParamVector;
use crate::schedule::TunerConfig;

/// Plain mini-batch SGD with the Robbins-Monro decay of the tuner config.
pub struct Sgd<'a, P: Problem + ?Sized> {
    problem: &'a P,
    config: TunerConfig,
    iters_per_epoch: u64,
    theta: ParamVector,
}

impl<'a, P: Problem + ?Sized> Sgd<'a, P> {
    pub fn new(problem: &'a P, theta0: ParamVector, config: TunerConfig, iters_per_epoch: u64) -> Self {
        Sgd {
            problem,
            config,
            iters_per_epoch,
            theta: theta0,
        }
    }
}

impl<P: Problem + ?Sized> Stepper for Sgd<'_, P> {
    fn theta(&self) -> &ParamVector {
        &self.theta
    }

    fn step(&mut self, k: u64, batches: &mut dyn BatchSource) -> Result<StepInfo> {
        let batch = batches.next_batch()?;
        let grad = batch_grad(self.problem, &self.theta, &batch)?;
        let eta = self.config.decay_at(k, self.iters_per_epoch);
        self.theta = self.theta.step(eta, &grad);
        Ok(StepInfo {
            eta: Some(eta),
            grad_evals: 1,
            ..StepInfo::default()
        })
    }
}
