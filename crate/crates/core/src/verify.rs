//! Independent numerical oracles: finite differences, brute-force
//! enumeration of mini-batch expectations, Taylor-order estimation, and
//! replay of Step-Tuned SGD step sizes from a batch log.
//!
//! Nothing here reuses the optimizer loops; the replay is a separate
//! transcription built from the schedule primitives.

use itertools::Itertools;

use crate::error::{Error, Result};
use crate::optimizers::{Algorithm, Trace};
use crate::oracle::{batch_grad, Problem};
use crate::params::{axpy, ParamVector};
use crate::problems::curvature_term;
use crate::rng::MiniBatch;
use crate::schedule::{bb_raw_step, clamp_step, ema_update, TunerConfig};

/// Step for central-difference gradients.
pub const FD_STEP: f64 = 1e-6;
/// Step for second differences of scalar functions.
pub const FD_STEP_SECOND: f64 = 1e-4;
/// Largest number of subsets [`enumerate_expectation`] will visit.
pub const MAX_SUBSETS: u64 = 100_000;

/// Central differences `(f(θ+he_i) − f(θ−he_i)) / 2h`.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, theta: &[f64], h: f64) -> Result<ParamVector> {
    if !(h > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let mut probe = theta.to_vec();
    let mut out = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        probe[i] = theta[i] + h;
        let plus = f(&probe);
        probe[i] = theta[i] - h;
        let minus = f(&probe);
        probe[i] = theta[i];
        out.push((plus - minus) / (2.0 * h));
    }
    Ok(out.into())
}

/// `f″(t)` by the symmetric second difference.
pub fn fd_second(f: impl Fn(f64) -> f64, t: f64, h: f64) -> f64 {
    (f(t + h) - 2.0 * f(t) + f(t - h)) / (h * h)
}

/// `‖a − b‖ / max(‖b‖, floor)`
pub fn relative_error(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let scale: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / scale.max(floor)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    /// `∇J_S(θ)`
    Grad,
    /// `𝒞_{J_S}(θ) = ∇²J_S(θ) ∇J_S(θ)`
    Curvature,
}

fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * u128::from(n - i) / u128::from(i + 1);
        if acc > u128::from(u64::MAX) {
            return u64::MAX;
        }
    }
    acc as u64
}

/// Exact average of `quantity` over every size-`b` subset of the samples.
pub fn enumerate_expectation<P: Problem + ?Sized>(
    problem: &P,
    theta: &[f64],
    b: usize,
    quantity: Quantity,
) -> Result<ParamVector> {
    let n = problem.num_samples();
    if b < 1 || b > n {
        return Err(Error::invalid(format!("batch size {b} must lie in [1, {n}]")));
    }
    let count = binomial(n as u64, b as u64);
    if count > MAX_SUBSETS {
        return Err(Error::invalid(format!(
            "{count} subsets exceeds the enumeration limit {MAX_SUBSETS}"
        )));
    }
    let mut acc = vec![0.0; problem.dim()];
    for subset in (0..n).combinations(b) {
        let batch = MiniBatch::new(subset, n)?;
        let value = match quantity {
            Quantity::Grad => batch_grad(problem, theta, &batch)?,
            Quantity::Curvature => curvature_term(problem, theta, &batch)?,
        };
        axpy(1.0, &value, &mut acc);
    }
    let inv = 1.0 / count as f64;
    Ok(acc.into_iter().map(|v| v * inv).collect::<Vec<_>>().into())
}

/// `e(η) = ‖[∇J_B(θ − η∇J_B(θ)) − ∇J_B(θ)] + η 𝒞_{J_B}(θ)‖` for each `η`.
pub fn taylor_errors<P: Problem + ?Sized>(
    problem: &P,
    theta: &[f64],
    batch: &MiniBatch,
    etas: &[f64],
) -> Result<Vec<f64>> {
    let g = batch_grad(problem, theta, batch)?;
    let curv = curvature_term(problem, theta, batch)?;
    let base = ParamVector::from_vec(theta.to_vec());
    etas.iter()
        .map(|&eta| {
            let moved = batch_grad(problem, &base.step(eta, &g), batch)?;
            let mut residual = moved.sub(&g);
            axpy(eta, &curv, &mut residual);
            Ok(residual.norm())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaylorOrder {
    pub etas: Vec<f64>,
    pub errors: Vec<f64>,
    /// `log(e_i / e_{i+1}) / log(η_i / η_{i+1})` for consecutive pairs.
    pub pairwise: Vec<f64>,
    /// Least-squares slope of `log e` against `log η`.
    pub fitted: f64,
}

impl TaylorOrder {
    pub fn min_order(&self) -> f64 {
        self.pairwise.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Empirical order of the curvature finite-difference error.
pub fn taylor_order<P: Problem + ?Sized>(
    problem: &P,
    theta: &[f64],
    batch: &MiniBatch,
    etas: &[f64],
) -> Result<TaylorOrder> {
    if etas.len() < 2 {
        return Err(Error::invalid("need at least two step sizes to estimate an order"));
    }
    if etas.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::invalid("step sizes must be positive"));
    }
    let errors = taylor_errors(problem, theta, batch, etas)?;
    let pairwise = etas
        .windows(2)
        .zip(errors.windows(2))
        .map(|(eta, err)| (err[0] / err[1]).ln() / (eta[0] / eta[1]).ln())
        .collect();
    let xs: Vec<f64> = etas.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(TaylorOrder {
        etas: etas.to_vec(),
        errors,
        pairwise,
        fitted: sxy / sxx,
    })
}

/// `η₀, η₀/2, …` with `halvings + 1` entries.
pub fn halving_sequence(eta0: f64, halvings: usize) -> Vec<f64> {
    (0..=halvings).map(|i| eta0 / f64::powi(2.0, i as i32)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    /// `γ_0, …, γ_K` recomputed from the batch log.
    pub gammas: Vec<f64>,
    /// First iteration whose logged `γ` differs from the replayed one.
    pub first_mismatch: Option<u64>,
}

/// Recomputes every `γ_{k+1}` of a Step-Tuned SGD trace from `θ₀`, the
/// tuner config and the batch prefix `B_0 … B_k`, then compares with the
/// logged values bit for bit.
pub fn replay_gamma<P: Problem + ?Sized>(
    trace: &Trace,
    problem: &P,
    batch_log: &[MiniBatch],
) -> Result<ReplayReport> {
    if trace.algorithm != Algorithm::StepTunedSgd {
        return Err(Error::invalid("replay needs a step-tuned-sgd trace"));
    }
    let cfg: TunerConfig = trace
        .tuner
        .ok_or_else(|| Error::invalid("trace carries no tuner config"))?;
    let iterations = trace.iterations;
    if (batch_log.len() as u64) < iterations {
        return Err(Error::BatchLogExhausted(batch_log.len() as u64));
    }

    let hi = cfg.effective_hi();
    let mut theta = trace.theta0.clone();
    let mut g_avg = vec![0.0; theta.dim()];
    let mut gamma = 1.0;
    let mut gammas = vec![gamma];
    for (k, batch) in batch_log.iter().take(iterations as usize).enumerate() {
        let k = k as u64;
        let eta = cfg.decay_at(k, trace.iters_per_epoch) * gamma;
        let g0 = batch_grad(problem, &theta, batch)?;
        let half = theta.step(eta, &g0);
        let g1 = batch_grad(problem, &half, batch)?;
        let delta_theta = half.sub(&theta);
        let delta_g = g1.sub(&g0);
        let (g_next, g_hat) = ema_update(&g_avg, &delta_g, cfg.beta, k)?;
        gamma = clamp_step(bb_raw_step(&delta_theta, &g_hat, cfg.nu), cfg.m_lo, hi);
        gammas.push(gamma);
        g_avg = g_next.into_vec();
        theta = half.step(eta, &g1);
    }

    let first_mismatch = trace
        .records
        .iter()
        .filter_map(|r| r.gamma.map(|g| (r.k, g)))
        .find(|&(k, logged)| {
            gammas
                .get(k as usize)
                .is_some_and(|&replayed| replayed.to_bits() != logged.to_bits())
        })
        .map(|(k, _)| k);
    Ok(ReplayReport {
        gammas,
        first_mismatch,
    })
}

/// Outcome of one oracle check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Runs the full oracle suite on small seeded instances.
pub fn run_suite() -> Result<Vec<CheckOutcome>> {
    use crate::optimizers::{RunConfig, Budget, TraceOptions};
    use crate::oracle::full_grad;
    use crate::problems::{expected_curvature, generate_regression, phi, phi_prime, phi_second};
    use crate::rng::{init_theta, sample_minibatch, RngStream};

    let mut out = Vec::new();

    // per-sample gradients against central differences
    let mut worst = 0.0f64;
    for probe in 0..20u64 {
        let problem = generate_regression(probe, 40, 8)?;
        let theta = init_theta(1000 + probe, 8);
        for n in [0usize, 13, 39] {
            let fd = fd_gradient(|t| problem.sample_loss(n, t), &theta, FD_STEP)?;
            let mut g = vec![0.0; 8];
            problem.sample_grad(n, &theta, &mut g);
            worst = worst.max(relative_error(&fd, &g, 1e-12));
        }
    }
    out.push(CheckOutcome {
        name: "per-sample gradient vs finite differences",
        passed: worst <= 1e-5,
        detail: format!("max relative error {worst:.3e} (limit 1e-5)"),
    });

    let mut worst_phi = 0.0f64;
    for i in -40..=40 {
        let t = i as f64 * 0.1;
        let d1 = (phi(t + FD_STEP) - phi(t - FD_STEP)) / (2.0 * FD_STEP);
        worst_phi = worst_phi
            .max((d1 - phi_prime(t)).abs())
            .max((fd_second(phi, t, FD_STEP_SECOND) - phi_second(t)).abs());
    }
    out.push(CheckOutcome {
        name: "phi derivatives vs finite differences",
        passed: worst_phi <= 1e-6,
        detail: format!("max absolute error {worst_phi:.3e} (limit 1e-6)"),
    });

    let problem = generate_regression(3, 8, 4)?;
    let theta = init_theta(3, 4);
    let full = full_grad(&problem, &theta)?;
    let mut worst_grad = 0.0f64;
    let mut worst_curv = 0.0f64;
    for b in 1..=3 {
        let e_grad = enumerate_expectation(&problem, &theta, b, Quantity::Grad)?;
        worst_grad = worst_grad.max(e_grad.sub(&full).iter().fold(0.0, |m, v| m.max(v.abs())));
        let e_curv = enumerate_expectation(&problem, &theta, b, Quantity::Curvature)?;
        let closed = expected_curvature(&problem, &theta, b)?;
        worst_curv = worst_curv.max(e_curv.sub(&closed).iter().fold(0.0, |m, v| m.max(v.abs())));
    }
    out.push(CheckOutcome {
        name: "enumerated batch gradient equals full gradient",
        passed: worst_grad <= 1e-12,
        detail: format!("max deviation {worst_grad:.3e} (limit 1e-12)"),
    });
    out.push(CheckOutcome {
        name: "enumerated curvature equals pairwise decomposition",
        passed: worst_curv <= 1e-10,
        detail: format!("max deviation {worst_curv:.3e} (limit 1e-10)"),
    });

    let problem = generate_regression(0, 500, 30)?;
    let theta = init_theta(0, 30);
    let batch = sample_minibatch(&mut RngStream::new(0), 500, 50)?;
    let order = taylor_order(&problem, &theta, &batch, &halving_sequence(1e-2, 4))?;
    out.push(CheckOutcome {
        name: "curvature difference error order",
        passed: order.min_order() >= 1.9,
        detail: format!("min pairwise order {:.4} (limit 1.9)", order.min_order()),
    });

    let problem = generate_regression(0, 100, 10)?;
    let mut cfg = RunConfig::new(Algorithm::StepTunedSgd, TunerConfig { alpha: 0.5, ..TunerConfig::default() }, Budget::Iterations(200))
        .with_batch_size(10)
        .with_seed(7);
    cfg.trace = TraceOptions { keep_batches: true, ..TraceOptions::default() };
    let trace = crate::optimizers::run(&problem, &init_theta(7, 10), &cfg)?;
    let log = trace.batches.clone().unwrap_or_default();
    let report = replay_gamma(&trace, &problem, &log)?;
    out.push(CheckOutcome {
        name: "step-size replay from batch log",
        passed: report.first_mismatch.is_none(),
        detail: format!("{} step sizes replayed", report.gammas.len()),
    });

    Ok(out)
}
