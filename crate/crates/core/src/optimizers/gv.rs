//! Single-step heuristics that feed different gradient-variation estimates
//! into the clamped BB ratio.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizers::{iters_per_epoch, BatchSource, StepInfo, Stepper};
use crate::oracle::{batch_grad, full_grad, Problem};
use crate::params::{dot, ParamVector};
use crate::problems::expected_curvature;
use crate::schedule::{bb_raw_step, clamp_step, TunerConfig};

/// Numerator of the expected-variation ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExpectedGvNumerator {
    /// `‖Δθ_k‖² / ⟨G_k, Δθ_k⟩` with `G_k = −η_{k−1} E[𝒞(θ_{k−1})]`.
    #[default]
    Squared,
    /// `‖Δθ_k‖ ‖∇J_{B_{k−1}}(θ_{k−1})‖ / ⟨−E[𝒞(θ_{k−1})], Δθ_k⟩`.
    Homogeneous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GvKind {
    /// `∇J_{B_k}(θ_k) − ∇J_{B_{k−1}}(θ_{k−1})`
    Stochastic,
    /// `∇J(θ_k) − ∇J(θ_{k−1})`
    Exact,
    /// `−η_{k−1} E_S[𝒞_{J_S}(θ_{k−1})]`
    Expected(ExpectedGvNumerator),
}

struct Previous {
    theta: ParamVector,
    batch_grad: ParamVector,
    full_grad: Option<ParamVector>,
    eta: f64,
}

/// Decayed, clamped SGD whose step multiplier comes from one gradient
/// variation estimate per iteration. `γ₀ = 1`.
pub struct GvSgd<'a, P: Problem + ?Sized> {
    problem: &'a P,
    config: TunerConfig,
    kind: GvKind,
    batch_size: usize,
    iters_per_epoch: u64,
    theta: ParamVector,
    prev: Option<Previous>,
    gamma: f64,
}

impl<'a, P: Problem + ?Sized> GvSgd<'a, P> {
    pub fn new(
        problem: &'a P,
        theta0: ParamVector,
        config: TunerConfig,
        kind: GvKind,
        batch_size: usize,
    ) -> Result<Self> {
        if matches!(kind, GvKind::Expected(_)) && !problem.has_hvp() {
            return Err(Error::Unsupported("Hessian-vector products"));
        }
        Ok(GvSgd {
            problem,
            config,
            kind,
            batch_size,
            iters_per_epoch: iters_per_epoch(problem.num_samples(), batch_size),
            theta: theta0,
            prev: None,
            gamma: 1.0,
        })
    }

    /// Batch-equivalent cost of one full gradient.
    fn full_cost(&self) -> u64 {
        self.iters_per_epoch
    }
}

impl<P: Problem + ?Sized> Stepper for GvSgd<'_, P> {
    fn theta(&self) -> &ParamVector {
        &self.theta
    }

    fn step(&mut self, k: u64, batches: &mut dyn BatchSource) -> Result<StepInfo> {
        let batch = batches.next_batch()?;
        let grad = batch_grad(self.problem, &self.theta, &batch)?;
        let mut grad_evals = 1;

        let full = if self.kind == GvKind::Exact {
            grad_evals += self.full_cost();
            Some(full_grad(self.problem, &self.theta)?)
        } else {
            None
        };

        let mut curv_inner = None;
        if let Some(prev) = &self.prev {
            let delta_theta = self.theta.sub(&prev.theta);
            let nu = self.config.nu;
            let raw = match self.kind {
                GvKind::Stochastic => {
                    let var = grad.sub(&prev.batch_grad);
                    curv_inner = Some(dot(&var, &delta_theta));
                    bb_raw_step(&delta_theta, &var, nu)
                }
                GvKind::Exact => {
                    let prev_full = prev.full_grad.as_ref().expect("exact variant keeps full gradients");
                    let var = full.as_ref().expect("computed above").sub(prev_full);
                    curv_inner = Some(dot(&var, &delta_theta));
                    bb_raw_step(&delta_theta, &var, nu)
                }
                GvKind::Expected(numerator) => {
                    let curv = expected_curvature(self.problem, &prev.theta, self.batch_size)?;
                    let var = curv.scale(-prev.eta);
                    let inner = dot(&var, &delta_theta);
                    curv_inner = Some(inner);
                    match numerator {
                        ExpectedGvNumerator::Squared => bb_raw_step(&delta_theta, &var, nu),
                        ExpectedGvNumerator::Homogeneous => {
                            let denom = -dot(&curv, &delta_theta);
                            if denom > 0.0 {
                                delta_theta.norm() * prev.batch_grad.norm() / denom
                            } else {
                                nu
                            }
                        }
                    }
                }
            };
            self.gamma = clamp_step(raw, self.config.m_lo, self.config.effective_hi());
        }

        let eta = self.config.decay_at(k, self.iters_per_epoch) * self.gamma;
        let next = self.theta.step(eta, &grad);
        let theta = std::mem::replace(&mut self.theta, next);
        self.prev = Some(Previous {
            theta,
            batch_grad: grad,
            full_grad: full,
            eta,
        });
        Ok(StepInfo {
            gamma: Some(self.gamma),
            eta: Some(eta),
            curv_inner,
            grad_evals,
            ..StepInfo::default()
        })
    }
}
