use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::optimizers::Algorithm;
use crate::params::ParamVector;
use crate::rng::MiniBatch;
use crate::schedule::TunerConfig;

/// One logged row.
///
/// Row `k` carries the loss at `θ_k`, the step quantities used by outer
/// iteration `k`, and the curvature inner product measured during it.
/// `grad_evals` counts batch-gradient evaluations spent to reach `θ_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: u64,
    pub epoch: f64,
    pub grad_evals: u64,
    pub loss: f64,
    pub grad_norm_sq: Option<f64>,
    pub gamma: Option<f64>,
    pub eta: Option<f64>,
    pub curv_inner: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Completed,
    /// Non-finite iterate or loss above the divergence threshold.
    Diverged,
    LineSearchFailure,
}

/// Receives records as they are produced.
pub trait TraceSink {
    fn record(&mut self, record: &TraceRecord) -> Result<()>;

    /// Asked after every recorded row; `true` ends the run as completed.
    fn should_stop(&self) -> bool {
        false
    }
}

impl TraceSink for Vec<TraceRecord> {
    fn record(&mut self, record: &TraceRecord) -> Result<()> {
        self.push(record.clone());
        Ok(())
    }
}

/// Discards everything.
pub struct NullSink;

impl TraceSink for NullSink {
    fn record(&mut self, _record: &TraceRecord) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Trace {
    pub algorithm: Algorithm,
    pub records: Vec<TraceRecord>,
    pub status: RunStatus,
    pub theta0: ParamVector,
    pub final_theta: ParamVector,
    /// Outer iterations actually completed.
    pub iterations: u64,
    pub grad_evals: u64,
    /// Objective evaluations made by the algorithm itself (line searches);
    /// logging is not counted.
    pub fn_evals: u64,
    pub batch_size: usize,
    pub iters_per_epoch: u64,
    pub seed: u64,
    pub tuner: Option<TunerConfig>,
    /// `(m_lo, max(m_hi, ν))` for clamped algorithms.
    pub clamp: Option<(f64, f64)>,
    /// Every mini-batch drawn, in order, when requested.
    pub batches: Option<Vec<MiniBatch>>,
}

impl Trace {
    pub fn final_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.loss)
    }

    pub fn diverged(&self) -> bool {
        self.status == RunStatus::Diverged
    }

    /// Final loss, or `+∞` for runs that did not complete normally.
    pub fn score(&self) -> f64 {
        match (self.status, self.final_loss()) {
            (RunStatus::Completed, Some(l)) if l.is_finite() => l,
            _ => f64::INFINITY,
        }
    }

    /// Smallest iteration whose logged loss satisfies `pred`.
    pub fn first_iteration_where(&self, pred: impl Fn(f64) -> bool) -> Option<u64> {
        self.records.iter().find(|r| pred(r.loss)).map(|r| r.k)
    }
}
