//! Optimization loops.
//!
//! Every algorithm is a small state machine implementing [`Stepper`]; a
//! shared driver owns the iteration budget, logging, cost accounting and
//! the divergence guard.

mod adaptive;
mod armijo;
mod bb;
mod gv;
mod sgd;
mod step_tuned;
mod trace;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use adaptive::{Adam, AdamConfig, RmsProp, RmsPropConfig};
pub use armijo::{ArmijoConfig, ArmijoGd, MAX_BACKTRACKS};
pub use bb::{BbVariant, FullBatchTuned};
pub use gv::{ExpectedGvNumerator, GvKind, GvSgd};
pub use sgd::Sgd;
pub use step_tuned::StepTunedSgd;
pub use trace::{NullSink, RunStatus, Trace, TraceRecord, TraceSink};

use crate::error::{Error, Result};
use crate::oracle::{eval_loss, full_grad, Problem};
use crate::params::ParamVector;
use crate::rng::{sample_minibatch, streams, MiniBatch, RngStream};
use crate::schedule::{DecayMode, TunerConfig};

/// Runs whose logged loss exceeds this are aborted as diverged.
pub const DIVERGENCE_LOSS: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    FullBatchTuned,
    StepTunedSgd,
    Sgd,
    BbAbs,
    Armijo,
    Adam,
    Rmsprop,
    StochasticGv,
    ExactGv,
    ExpectedGv,
}

impl Algorithm {
    pub const ALL: [Algorithm; 10] = [
        Algorithm::FullBatchTuned,
        Algorithm::StepTunedSgd,
        Algorithm::Sgd,
        Algorithm::BbAbs,
        Algorithm::Armijo,
        Algorithm::Adam,
        Algorithm::Rmsprop,
        Algorithm::StochasticGv,
        Algorithm::ExactGv,
        Algorithm::ExpectedGv,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::FullBatchTuned => "full-batch-tuned",
            Algorithm::StepTunedSgd => "step-tuned-sgd",
            Algorithm::Sgd => "sgd",
            Algorithm::BbAbs => "bb-abs",
            Algorithm::Armijo => "armijo",
            Algorithm::Adam => "adam",
            Algorithm::Rmsprop => "rmsprop",
            Algorithm::StochasticGv => "stochastic-gv",
            Algorithm::ExactGv => "exact-gv",
            Algorithm::ExpectedGv => "expected-gv",
        }
    }

    /// Algorithms that always use the full gradient.
    pub fn is_full_batch(self) -> bool {
        matches!(self, Algorithm::FullBatchTuned | Algorithm::Armijo)
    }

    /// Algorithms with a `ν` hyper-parameter worth tuning.
    pub fn uses_nu(self) -> bool {
        matches!(
            self,
            Algorithm::FullBatchTuned
                | Algorithm::StepTunedSgd
                | Algorithm::StochasticGv
                | Algorithm::ExactGv
                | Algorithm::ExpectedGv
        )
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Budget {
    Iterations(u64),
    /// One epoch is `⌈N/b⌉` outer iterations.
    Epochs(u64),
}

impl Budget {
    pub fn iterations(self, iters_per_epoch: u64) -> u64 {
        match self {
            Budget::Iterations(k) => k,
            Budget::Epochs(e) => e * iters_per_epoch,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TraceOptions {
    /// Log a row every this many outer iterations (the last one always).
    pub record_every: u64,
    /// Also log `‖∇J(θ_k)‖²` every this many iterations. Not counted in
    /// `grad_evals`.
    pub grad_norm_every: Option<u64>,
    /// Keep every drawn mini-batch in the trace.
    pub keep_batches: bool,
}

impl Default for TraceOptions {
    fn default() -> Self {
        TraceOptions {
            record_every: 1,
            grad_norm_every: None,
            keep_batches: false,
        }
    }
}

/// Everything needed to reproduce one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub tuner: TunerConfig,
    /// `None` means the full data set.
    pub batch_size: Option<usize>,
    pub budget: Budget,
    pub seed: u64,
    pub trace: TraceOptions,
    pub adam: AdamConfig,
    pub rmsprop: RmsPropConfig,
    pub armijo: ArmijoConfig,
    pub expected_gv_numerator: ExpectedGvNumerator,
}

impl RunConfig {
    pub fn new(algorithm: Algorithm, tuner: TunerConfig, budget: Budget) -> Self {
        RunConfig {
            algorithm,
            tuner,
            batch_size: None,
            budget,
            seed: 0,
            trace: TraceOptions::default(),
            adam: AdamConfig::default(),
            rmsprop: RmsPropConfig::default(),
            armijo: ArmijoConfig::default(),
            expected_gv_numerator: ExpectedGvNumerator::default(),
        }
    }

    pub fn with_batch_size(mut self, b: usize) -> Self {
        self.batch_size = Some(b);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_trace(mut self, trace: TraceOptions) -> Self {
        self.trace = trace;
        self
    }

    /// Effective batch size for a problem with `n` samples.
    pub fn effective_batch(&self, n: usize) -> usize {
        if self.algorithm.is_full_batch() {
            n
        } else {
            self.batch_size.unwrap_or(n)
        }
    }
}

/// Number of outer iterations per epoch, `⌈N/b⌉`.
pub fn iters_per_epoch(n: usize, b: usize) -> u64 {
    n.div_ceil(b.max(1)) as u64
}

/// Supplies the mini-batch for each outer iteration.
pub trait BatchSource {
    fn next_batch(&mut self) -> Result<MiniBatch>;
}

/// Independent uniform size-`b` subsets drawn from a seeded stream.
pub struct RandomBatches {
    rng: RngStream,
    n: usize,
    b: usize,
}

impl RandomBatches {
    pub fn new(seed: u64, n: usize, b: usize) -> Result<Self> {
        if b < 1 || b > n {
            return Err(Error::invalid(format!("batch size {b} must lie in [1, {n}]")));
        }
        Ok(RandomBatches {
            rng: RngStream::with_stream(seed, streams::BATCHES),
            n,
            b,
        })
    }
}

impl BatchSource for RandomBatches {
    fn next_batch(&mut self) -> Result<MiniBatch> {
        sample_minibatch(&mut self.rng, self.n, self.b)
    }
}

/// Replays a recorded batch sequence; errors once it runs out.
pub struct ReplayBatches<'a> {
    batches: &'a [MiniBatch],
    pos: usize,
}

impl<'a> ReplayBatches<'a> {
    pub fn new(batches: &'a [MiniBatch]) -> Self {
        ReplayBatches { batches, pos: 0 }
    }
}

impl BatchSource for ReplayBatches<'_> {
    fn next_batch(&mut self) -> Result<MiniBatch> {
        let batch = self
            .batches
            .get(self.pos)
            .cloned()
            .ok_or(Error::BatchLogExhausted(self.pos as u64))?;
        self.pos += 1;
        Ok(batch)
    }
}

struct Recording<'a> {
    inner: &'a mut dyn BatchSource,
    log: Option<Vec<MiniBatch>>,
}

impl BatchSource for Recording<'_> {
    fn next_batch(&mut self) -> Result<MiniBatch> {
        let batch = self.inner.next_batch()?;
        if let Some(log) = self.log.as_mut() {
            log.push(batch.clone());
        }
        Ok(batch)
    }
}

/// What one outer iteration did.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepInfo {
    pub gamma: Option<f64>,
    pub eta: Option<f64>,
    pub curv_inner: Option<f64>,
    /// Batch-gradient evaluations consumed (a full gradient counts `⌈N/b⌉`).
    pub grad_evals: u64,
    pub fn_evals: u64,
    /// Set when the step could not be taken.
    pub failure: Option<RunStatus>,
}

/// One outer iteration of an optimizer.
pub trait Stepper {
    fn theta(&self) -> &ParamVector;

    fn step(&mut self, k: u64, batches: &mut dyn BatchSource) -> Result<StepInfo>;

    /// `γ` the next call to `step` will use, if already known.
    fn pending_gamma(&self) -> Option<f64> {
        None
    }
}

/// Static facts about a run that the driver copies into the trace.
pub struct RunMeta {
    pub algorithm: Algorithm,
    pub batch_size: usize,
    pub seed: u64,
    pub tuner: Option<TunerConfig>,
    pub clamp: Option<(f64, f64)>,
}

/// Runs `stepper` for `iterations` outer iterations.
pub fn drive<P: Problem + ?Sized>(
    problem: &P,
    stepper: &mut dyn Stepper,
    batches: &mut dyn BatchSource,
    iterations: u64,
    options: &TraceOptions,
    meta: RunMeta,
    sink: &mut dyn TraceSink,
) -> Result<Trace> {
    let ipe = iters_per_epoch(problem.num_samples(), meta.batch_size);
    let record_every = options.record_every.max(1);
    let mut source = Recording {
        inner: batches,
        log: options.keep_batches.then(Vec::new),
    };
    let theta0 = stepper.theta().clone();
    let mut records = Vec::new();
    let mut grad_evals = 0u64;
    let mut fn_evals = 0u64;
    let mut status = RunStatus::Completed;
    let mut done = 0u64;

    for k in 0..=iterations {
        let last = k == iterations;
        let grad_norm_due = options
            .grad_norm_every
            .is_some_and(|every| k % every.max(1) == 0);
        let due = last || k % record_every == 0 || grad_norm_due;

        let mut row = None;
        if due {
            let theta = stepper.theta();
            let loss = match eval_loss(problem, theta) {
                Ok(l) => l,
                Err(Error::NumericOverflow { .. }) => {
                    status = RunStatus::Diverged;
                    break;
                }
                Err(e) => return Err(e),
            };
            let grad_norm_sq = if grad_norm_due {
                match full_grad(problem, theta) {
                    Ok(g) => Some(g.norm_sq()),
                    Err(Error::NumericOverflow { .. }) => None,
                    Err(e) => return Err(e),
                }
            } else {
                None
            };
            row = Some(TraceRecord {
                k,
                epoch: k as f64 / ipe as f64,
                grad_evals,
                loss,
                grad_norm_sq,
                gamma: None,
                eta: None,
                curv_inner: None,
            });
            if loss.is_nan() || loss > DIVERGENCE_LOSS {
                let mut r = row.take().unwrap();
                r.gamma = stepper.pending_gamma();
                sink.record(&r)?;
                records.push(r);
                status = RunStatus::Diverged;
                break;
            }
        }

        if last {
            if let Some(mut r) = row {
                r.gamma = stepper.pending_gamma();
                sink.record(&r)?;
                records.push(r);
            }
            break;
        }

        let info = match stepper.step(k, &mut source) {
            Ok(info) => info,
            Err(Error::NumericOverflow { .. }) => {
                status = RunStatus::Diverged;
                break;
            }
            Err(e) => return Err(e),
        };
        if let Some(mut r) = row {
            r.gamma = info.gamma;
            r.eta = info.eta;
            r.curv_inner = info.curv_inner;
            sink.record(&r)?;
            records.push(r);
        }
        grad_evals += info.grad_evals;
        let stop = due && sink.should_stop();
        fn_evals += info.fn_evals;
        if let Some(failure) = info.failure {
            status = failure;
            break;
        }
        done = k + 1;
        if !stepper.theta().is_finite() {
            status = RunStatus::Diverged;
            break;
        }
        if stop {
            break;
        }
    }

    Ok(Trace {
        algorithm: meta.algorithm,
        records,
        status,
        theta0,
        final_theta: stepper.theta().clone(),
        iterations: done,
        grad_evals,
        fn_evals,
        batch_size: meta.batch_size,
        iters_per_epoch: ipe,
        seed: meta.seed,
        tuner: meta.tuner,
        clamp: meta.clamp,
        batches: source.log,
    })
}

/// Runs the algorithm named in `config` from `theta0`.
pub fn run<P: Problem + ?Sized>(problem: &P, theta0: &[f64], config: &RunConfig) -> Result<Trace> {
    run_with_sink(problem, theta0, config, &mut NullSink)
}

pub fn run_with_sink<P: Problem + ?Sized>(
    problem: &P,
    theta0: &[f64],
    config: &RunConfig,
    sink: &mut dyn TraceSink,
) -> Result<Trace> {
    let n = problem.num_samples();
    if theta0.len() != problem.dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.dim(),
            got: theta0.len(),
        });
    }
    let b = config.effective_batch(n);
    if b < 1 || b > n {
        return Err(Error::invalid(format!("batch size {b} must lie in [1, {n}]")));
    }
    let ipe = iters_per_epoch(n, b);
    let iterations = config.budget.iterations(ipe);
    if iterations == 0 {
        return Err(Error::invalid("budget must be positive"));
    }
    let tuner = config.tuner;
    let theta0 = ParamVector::from_vec(theta0.to_vec());
    let mut batches = RandomBatches::new(config.seed, n, b)?;
    let clamped = Some((tuner.m_lo, tuner.effective_hi()));

    let (mut stepper, tuner_meta, clamp): (Box<dyn Stepper + '_>, _, _) = match config.algorithm {
        Algorithm::FullBatchTuned => {
            tuner.validate()?;
            (
                Box::new(FullBatchTuned::new(problem, theta0, tuner.alpha, BbVariant::Nonconvex { nu: tuner.nu })),
                Some(tuner),
                None,
            )
        }
        Algorithm::BbAbs => {
            tuner.validate()?;
            (
                Box::new(FullBatchTuned::new(problem, theta0, tuner.alpha, BbVariant::Absolute)),
                Some(tuner),
                None,
            )
        }
        Algorithm::StepTunedSgd => {
            tuner.validate()?;
            (
                Box::new(StepTunedSgd::new(problem, theta0, tuner, ipe)),
                Some(tuner),
                clamped,
            )
        }
        Algorithm::Sgd => {
            tuner.validate()?;
            (Box::new(Sgd::new(problem, theta0, tuner, ipe)), Some(tuner), None)
        }
        Algorithm::Armijo => (
            Box::new(ArmijoGd::new(problem, theta0, config.armijo)?),
            None,
            None,
        ),
        Algorithm::Adam => (
            Box::new(Adam::new(problem, theta0, tuner.alpha, config.adam)?),
            None,
            None,
        ),
        Algorithm::Rmsprop => (
            Box::new(RmsProp::new(problem, theta0, tuner.alpha, config.rmsprop)?),
            None,
            None,
        ),
        Algorithm::StochasticGv | Algorithm::ExactGv | Algorithm::ExpectedGv => {
            tuner.validate()?;
            let kind = match config.algorithm {
                Algorithm::StochasticGv => GvKind::Stochastic,
                Algorithm::ExactGv => GvKind::Exact,
                _ => GvKind::Expected(config.expected_gv_numerator),
            };
            (
                Box::new(GvSgd::new(problem, theta0, tuner, kind, b)?),
                Some(tuner),
                clamped,
            )
        }
    };

    let meta = RunMeta {
        algorithm: config.algorithm,
        batch_size: b,
        seed: config.seed,
        tuner: tuner_meta,
        clamp,
    };
    drive(
        problem,
        stepper.as_mut(),
        &mut batches,
        iterations,
        &config.trace,
        meta,
        sink,
    )
}

fn tuner_with(alpha: f64, nu: f64) -> TunerConfig {
    TunerConfig {
        alpha,
        nu,
        ..TunerConfig::default()
    }
}

/// Full-batch tuned gradient descent: BB ratio with the `ν` fallback, no
/// clamping and no decay.
pub fn run_full_batch_tuned<P: Problem + ?Sized>(
    problem: &P,
    theta0: &[f64],
    alpha: f64,
    nu: f64,
    iterations: u64,
) -> Result<Trace> {
    let cfg = RunConfig::new(
        Algorithm::FullBatchTuned,
        tuner_with(alpha, nu),
        Budget::Iterations(iterations),
    );
    run(problem, theta0, &cfg)
}

/// Step-Tuned SGD.
pub fn run_step_tuned_sgd<P: Problem + ?Sized>(
    problem: &P,
    theta0: &[f64],
    config: TunerConfig,
    batch_size: usize,
    iterations: u64,
    seed: u64,
) -> Result<Trace> {
    let cfg = RunConfig::new(Algorithm::StepTunedSgd, config, Budget::Iterations(iterations))
        .with_batch_size(batch_size)
        .with_seed(seed);
    run(problem, theta0, &cfg)
}

#[allow(clippy::too_many_arguments)]
pub fn run_sgd<P: Problem + ?Sized>(
    problem: &P,
    theta0: &[f64],
    alpha: f64,
    delta: f64,
    batch_size: usize,
    iterations: u64,
    seed: u64,
    decay_mode: DecayMode,
) -> Result<Trace> {
    let tuner = TunerConfig {
        alpha,
        delta,
        decay_mode,
        ..TunerConfig::default()
    };
    let cfg = RunConfig::new(Algorithm::Sgd, tuner, Budget::Iterations(iterations))
        .with_batch_size(batch_size)
        .with_seed(seed);
    run(problem, theta0, &cfg)
}

/// BB with absolute values; full batch when `batch_size == N`.
pub fn run_bb_abs<P: Problem + ?Sized>(
    problem: &P,
    theta0: &[f64],
    alpha: f64,
    batch_size: usize,
    iterations: u64,
    seed: u64,
) -> Result<Trace> {
    let cfg = RunConfig::new(
        Algorithm::BbAbs,
        tuner_with(alpha, TunerConfig::default().nu),
        Budget::Iterations(iterations),
    )
    .with_batch_size(batch_size)
    .with_seed(seed);
    run(problem, theta0, &cfg)
}

pub fn run_armijo_gd<P: Problem + ?Sized>(
    problem: &P,
    theta0: &[f64],
    step0: f64,
    c: f64,
    tau: f64,
    iterations: u64,
) -> Result<Trace> {
    let mut cfg = RunConfig::new(
        Algorithm::Armijo,
        TunerConfig::default(),
        Budget::Iterations(iterations),
    );
    cfg.armijo = ArmijoConfig { step0, c, tau };
    run(problem, theta0, &cfg)
}

pub fn run_adam<P: Problem + ?Sized>(
    problem: &P,
    theta0: &[f64],
    alpha: f64,
    batch_size: usize,
    iterations: u64,
    seed: u64,
) -> Result<Trace> {
    let cfg = RunConfig::new(Algorithm::Adam, tuner_with(alpha, 2.0), Budget::Iterations(iterations))
        .with_batch_size(batch_size)
        .with_seed(seed);
    run(problem, theta0, &cfg)
}

pub fn run_rmsprop<P: Problem + ?Sized>(
    problem: &P,
    theta0: &[f64],
    alpha: f64,
    batch_size: usize,
    iterations: u64,
    seed: u64,
) -> Result<Trace> {
    let cfg = RunConfig::new(
        Algorithm::Rmsprop,
        tuner_with(alpha, 2.0),
        Budget::Iterations(iterations),
    )
    .with_batch_size(batch_size)
    .with_seed(seed);
    run(problem, theta0, &cfg)
}

fn run_gv<P: Problem + ?Sized>(
    algorithm: Algorithm,
    problem: &P,
    theta0: &[f64],
    config: TunerConfig,
    batch_size: usize,
    iterations: u64,
    seed: u64,
) -> Result<Trace> {
    let cfg = RunConfig::new(algorithm, config, Budget::Iterations(iterations))
        .with_batch_size(batch_size)
        .with_seed(seed);
    run(problem, theta0, &cfg)
}

pub fn run_stochastic_gv<P: Problem + ?Sized>(
    problem: &P,
    theta0: &[f64],
    config: TunerConfig,
    batch_size: usize,
    iterations: u64,
    seed: u64,
) -> Result<Trace> {
    run_gv(Algorithm::StochasticGv, problem, theta0, config, batch_size, iterations, seed)
}

pub fn run_exact_gv<P: Problem + ?Sized>(
    problem: &P,
    theta0: &[f64],
    config: TunerConfig,
    batch_size: usize,
    iterations: u64,
    seed: u64,
) -> Result<Trace> {
    run_gv(Algorithm::ExactGv, problem, theta0, config, batch_size, iterations, seed)
}

pub fn run_expected_gv<P: Problem + ?Sized>(
    problem: &P,
    theta0: &[f64],
    config: TunerConfig,
    batch_size: usize,
    iterations: u64,
    seed: u64,
) -> Result<Trace> {
    run_gv(Algorithm::ExpectedGv, problem, theta0, config, batch_size, iterations, seed)
}
