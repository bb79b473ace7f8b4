use crate::error::Result;
use crate::optimizers::{BatchSource, StepInfo, Stepper};
use crate::oracle::{batch_grad, Problem};
use crate::params::ParamVector;
use crate::schedule::{StepState, TunerConfig, TunerUpdate};

/// Step-Tuned SGD.
///
/// Each outer iteration draws one batch `B_k` and uses it twice with the
/// same step `η_k = decay(k)·γ_k`:
///
/// ```text
/// θ_{k+½} = θ_k     − η_k ∇J_{B_k}(θ_k)
/// θ_{k+1} = θ_{k+½} − η_k ∇J_{B_k}(θ_{k+½})
/// ```
///
/// The pair `(Δθ, Δg) = (θ_{k+½} − θ_k, ∇J_{B_k}(θ_{k+½}) − ∇J_{B_k}(θ_k))`
/// feeds the debiased moving average and the clamped BB ratio that gives
/// `γ_{k+1}`. The second gradient is computed once and shared, so an outer
/// iteration costs exactly two batch gradients.
pub struct StepTunedSgd<'a, P: Problem + ?Sized> {
    problem: &'a P,
    config: TunerConfig,
    iters_per_epoch: u64,
    theta: ParamVector,
    state: StepState,
    half: Option<ParamVector>,
    last_delta_g: Option<ParamVector>,
    last_update: Option<TunerUpdate>,
}

impl<'a, P: Problem + ?Sized> StepTunedSgd<'a, P> {
    pub fn new(problem: &'a P, theta0: ParamVector, config: TunerConfig, iters_per_epoch: u64) -> Self {
        let state = StepState::new(theta0.dim());
        StepTunedSgd {
            problem,
            config,
            iters_per_epoch,
            theta: theta0,
            state,
            half: None,
            last_delta_g: None,
            last_update: None,
        }
    }

    pub fn state(&self) -> &StepState {
        &self.state
    }

    /// `θ_{k+½}` of the last iteration.
    pub fn half_iterate(&self) -> Option<&ParamVector> {
        self.half.as_ref()
    }

    /// `Δg_{B_k}` of the last iteration.
    pub fn last_delta_g(&self) -> Option<&ParamVector> {
        self.last_delta_g.as_ref()
    }

    pub fn last_update(&self) -> Option<&TunerUpdate> {
        self.last_update.as_ref()
    }
}

impl<P: Problem + ?Sized> Stepper for StepTunedSgd<'_, P> {
    fn theta(&self) -> &ParamVector {
        &self.theta
    }

    fn pending_gamma(&self) -> Option<f64> {
        Some(self.state.gamma)
    }

    fn step(&mut self, k: u64, batches: &mut dyn BatchSource) -> Result<StepInfo> {
        let batch = batches.next_batch()?;
        let gamma = self.state.gamma;
        let eta = self.config.decay_at(k, self.iters_per_epoch) * gamma;

        let g0 = batch_grad(self.problem, &self.theta, &batch)?;
        let half = self.theta.step(eta, &g0);
        let g1 = batch_grad(self.problem, &half, &batch)?;
        let next = half.step(eta, &g1);

        let delta_theta = half.sub(&self.theta);
        let delta_g = g1.sub(&g0);
        let update = self.state.update(&delta_theta, &delta_g, &self.config)?;
        let inner = update.inner;

        self.theta = next;
        self.half = Some(half);
        self.last_delta_g = Some(delta_g);
        self.last_update = Some(update);
        Ok(StepInfo {
            gamma: Some(gamma),
            eta: Some(eta),
            curv_inner: Some(inner),
            grad_evals: 2,
            ..StepInfo::default()
        })
    }
}
