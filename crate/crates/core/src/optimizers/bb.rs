use crate::error::Result;
use crate::optimizers::{BatchSource, StepInfo, Stepper};
use crate::oracle::{batch_grad, Problem};
use crate::params::{dot, ParamVector};
use crate::schedule::bb_raw_step;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BbVariant {
    /// `ν` whenever `⟨Δg, Δθ⟩ ≤ 0`.
    Nonconvex { nu: f64 },
    /// `|‖Δθ‖² / ⟨Δg, Δθ⟩|`; keeps the previous ratio when the inner
    /// product is exactly zero.
    Absolute,
}

/// Barzilai-Borwein gradient descent scaled by `α`, without clamping or
/// decay.
///
/// `θ₁ = θ₀ − α∇J(θ₀)`, then `θ_{k+1} = θ_k − αγ_k∇J(θ_k)` with `γ_k` from
/// the last iterate and gradient differences. With a full-batch source this
/// is the deterministic algorithm; with mini-batches each gradient comes
/// from that iteration's batch.
pub struct FullBatchTuned<'a, P: Problem + ?Sized> {
    problem: &'a P,
    alpha: f64,
    variant: BbVariant,
    theta: ParamVector,
    prev: Option<(ParamVector, ParamVector)>,
    gamma: f64,
}

impl<'a, P: Problem + ?Sized> FullBatchTuned<'a, P> {
    pub fn new(problem: &'a P, theta0: ParamVector, alpha: f64, variant: BbVariant) -> Self {
        FullBatchTuned {
            problem,
            alpha,
            variant,
            theta: theta0,
            prev: None,
            gamma: 1.0,
        }
    }

    /// `γ` used by the last step.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

impl<P: Problem + ?Sized> Stepper for FullBatchTuned<'_, P> {
    fn theta(&self) -> &ParamVector {
        &self.theta
    }

    fn step(&mut self, _k: u64, batches: &mut dyn BatchSource) -> Result<StepInfo> {
        let batch = batches.next_batch()?;
        let grad = batch_grad(self.problem, &self.theta, &batch)?;
        let mut curv_inner = None;
        if let Some((prev_theta, prev_grad)) = &self.prev {
            let delta_theta = self.theta.sub(prev_theta);
            let delta_g = grad.sub(prev_grad);
            let inner = dot(&delta_g, &delta_theta);
            curv_inner = Some(inner);
            self.gamma = match self.variant {
                BbVariant::Nonconvex { nu } => bb_raw_step(&delta_theta, &delta_g, nu),
                BbVariant::Absolute if inner != 0.0 => (delta_theta.norm_sq() / inner).abs(),
                BbVariant::Absolute => self.gamma,
            };
        }
        let eta = self.alpha * self.gamma;
        let next = self.theta.step(eta, &grad);
        self.prev = Some((std::mem::replace(&mut self.theta, next), grad));
        Ok(StepInfo {
            gamma: Some(self.gamma),
            eta: Some(eta),
            curv_inner,
            grad_evals: 1,
            ..StepInfo::default()
        })
    }
}
