//! Step-size machinery: the Barzilai-Borwein ratio with a concavity
//! fallback, clamping, the debiased moving average of gradient variations,
//! and the Robbins-Monro decay factor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{dot, norm_sq, ParamVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecayMode {
    /// `α / (k+1)^{1/2+δ}` with `k` the outer iteration.
    #[default]
    PerIter,
    /// `α / q^{1/2+δ}` with `q` the 1-based epoch index.
    PerEpoch,
}

impl std::str::FromStr for DecayMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-iter" => Ok(DecayMode::PerIter),
            "per-epoch" => Ok(DecayMode::PerEpoch),
            other => Err(Error::Config(format!("unknown decay mode `{other}`"))),
        }
    }
}

/// Hyper-parameters of the step tuner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TunerConfig {
    pub alpha: f64,
    /// Step used when the estimated curvature is non-positive.
    pub nu: f64,
    pub beta: f64,
    pub m_lo: f64,
    pub m_hi: f64,
    pub delta: f64,
    pub decay_mode: DecayMode,
}

impl Default for TunerConfig {
    fn default() -> Self {
        TunerConfig {
            alpha: 0.1,
            nu: 2.0,
            beta: 0.9,
            m_lo: 0.5,
            m_hi: 2.0,
            delta: 0.001,
            decay_mode: DecayMode::PerIter,
        }
    }
}

impl TunerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be positive");
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return bad("nu must be positive");
        }
        if !(0.0..1.0).contains(&self.beta) {
            return bad("beta must lie in [0, 1)");
        }
        if !(self.m_lo > 0.0 && self.m_lo <= self.m_hi && self.m_hi.is_finite()) {
            return bad("clamp bounds must satisfy 0 < m_lo <= m_hi");
        }
        if !(self.delta > 0.0 && self.delta < 0.5) {
            return bad("delta must lie in (0, 1/2)");
        }
        Ok(())
    }

    /// Upper clamp actually applied: `max(m_hi, nu)`.
    pub fn effective_hi(&self) -> f64 {
        self.m_hi.max(self.nu)
    }

    /// Decay factor (including `α`) for outer iteration `k` given the
    /// number of iterations per epoch.
    pub fn decay_at(&self, k: u64, iters_per_epoch: u64) -> f64 {
        let epoch = k / iters_per_epoch.max(1) + 1;
        decay_factor(k, self.alpha, self.delta, self.decay_mode, epoch)
    }
}

/// Barzilai-Borwein ratio `‖Δθ‖² / ⟨g_var, Δθ⟩`, or `ν` when the inner
/// product is not strictly positive.
pub fn bb_raw_step(delta_theta: &[f64], g_var: &[f64], nu: f64) -> f64 {
    let inner = dot(g_var, delta_theta);
    if inner > 0.0 {
        norm_sq(delta_theta) / inner
    } else {
        nu
    }
}

pub fn clamp_step(gamma: f64, lo: f64, hi: f64) -> f64 {
    gamma.max(lo).min(hi)
}

/// Exponential moving average update and its debiased version.
///
/// Returns `(G, Ĝ)` with `G = β G_prev + (1-β) Δg` and
/// `Ĝ = G / (1 - β^{k+1})`.
pub fn ema_update(
    g_prev: &[f64],
    delta_g: &[f64],
    beta: f64,
    k: u64,
) -> Result<(ParamVector, ParamVector)> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::invalid(format!("beta = {beta} outside [0, 1)")));
    }
    if g_prev.len() != delta_g.len() {
        return Err(Error::DimensionMismatch {
            expected: g_prev.len(),
            got: delta_g.len(),
        });
    }
    let g: ParamVector = g_prev
        .iter()
        .zip(delta_g)
        .map(|(p, d)| beta * p + (1.0 - beta) * d)
        .collect::<Vec<_>>()
        .into();
    let g_hat = if k == 0 {
        // G / (1-β) rearranged so that G_{-1} = 0 gives Ĝ₀ = Δg₀ exactly.
        g_prev
            .iter()
            .zip(delta_g)
            .map(|(p, d)| beta * p / (1.0 - beta) + d)
            .collect::<Vec<_>>()
    } else {
        let exponent = i32::try_from(k.saturating_add(1)).unwrap_or(i32::MAX);
        let denom = 1.0 - beta.powi(exponent);
        g.iter().map(|v| v / denom).collect::<Vec<_>>()
    };
    Ok((g, g_hat.into()))
}

/// Robbins-Monro decay factor, `α` included.
///
/// `epoch` is the 1-based epoch index and is only read in per-epoch mode.
pub fn decay_factor(k: u64, alpha: f64, delta: f64, mode: DecayMode, epoch: u64) -> f64 {
    let q = match mode {
        DecayMode::PerIter => k + 1,
        DecayMode::PerEpoch => {
            assert!(epoch >= 1, "epoch index is 1-based");
            epoch
        }
    };
    alpha / (q as f64).powf(0.5 + delta)
}

/// Memory of the tuner: biased moving average `G`, iteration counter and
/// current step multiplier.
#[derive(Debug, Clone, PartialEq)]
pub struct StepState {
    pub g: ParamVector,
    pub k: u64,
    pub gamma: f64,
}

/// What one tuner update saw and produced.
#[derive(Debug, Clone, PartialEq)]
pub struct TunerUpdate {
    pub g_hat: ParamVector,
    /// `⟨Ĝ_k, Δθ_k⟩`
    pub inner: f64,
    /// Ratio before clamping (`ν` on the concave branch).
    pub raw: f64,
    pub gamma: f64,
}

impl StepState {
    pub fn new(dim: usize) -> Self {
        StepState {
            g: ParamVector::zeros(dim),
            k: 0,
            gamma: 1.0,
        }
    }

    /// Folds one `(Δθ, Δg)` pair into the state and sets the next `γ`.
    pub fn update(
        &mut self,
        delta_theta: &[f64],
        delta_g: &[f64],
        config: &TunerConfig,
    ) -> Result<TunerUpdate> {
        let (g, g_hat) = ema_update(&self.g, delta_g, config.beta, self.k)?;
        let inner = dot(&g_hat, delta_theta);
        let raw = bb_raw_step(delta_theta, &g_hat, config.nu);
        let gamma = clamp_step(raw, config.m_lo, config.effective_hi());
        self.g = g;
        self.k += 1;
        self.gamma = gamma;
        Ok(TunerUpdate {
            g_hat,
            inner,
            raw,
            gamma,
        })
    }
}
