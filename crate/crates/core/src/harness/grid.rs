use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::harness::GridSpec;
use crate::optimizers::{run, Algorithm, Budget, RunConfig, RunStatus, Trace};
use crate::oracle::Problem;

/// What a tuning run is scored on; lower is better.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Criterion {
    /// Last logged training loss.
    FinalLoss,
    /// First logged iteration with `|J − target| < threshold`.
    IterationsTo { target: f64, threshold: f64 },
}

impl Criterion {
    /// `+∞` for diverged runs and for runs that never meet the threshold.
    pub fn score(&self, trace: &Trace) -> f64 {
        match *self {
            Criterion::FinalLoss => trace.score(),
            Criterion::IterationsTo { target, threshold } => {
                if trace.status == RunStatus::Diverged {
                    return f64::INFINITY;
                }
                trace
                    .first_iteration_where(|l| (l - target).abs() < threshold)
                    .map_or(f64::INFINITY, |k| k as f64)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub alpha: f64,
    pub nu: f64,
    pub score: f64,
}

#[derive(Debug, Clone)]
pub struct GridResult {
    /// Every grid point in evaluation order.
    pub points: Vec<GridPoint>,
    pub selected: GridPoint,
    /// Full-budget run of the selected point.
    pub trace: Trace,
}

/// `(α, ν)` pairs to try. Algorithms without `ν` get the base config's.
pub fn grid_points(algorithm: Algorithm, grid: &GridSpec, default_nu: f64) -> Vec<(f64, f64)> {
    let nus = if algorithm.uses_nu() {
        grid.nu.clone()
    } else {
        vec![default_nu]
    };
    grid.alpha
        .iter()
        .flat_map(|&a| nus.iter().map(move |&n| (a, n)))
        .collect()
}

/// `base` with the grid values applied. For Armijo `α` is the initial
/// trial step of the line search.
pub fn configure(base: &RunConfig, alpha: f64, nu: f64) -> RunConfig {
    let mut cfg = base.clone();
    cfg.tuner.alpha = alpha;
    cfg.tuner.nu = nu;
    cfg.armijo.step0 = alpha;
    cfg
}

fn order(a: &GridPoint, b: &GridPoint) -> Ordering {
    a.score
        .total_cmp(&b.score)
        .then(a.alpha.total_cmp(&b.alpha))
        .then(a.nu.total_cmp(&b.nu))
}

/// Scores every grid point on `tune_budget`, keeps the minimizer (ties go
/// to the smaller `α`, then the smaller `ν`) and reruns it on the budget of
/// `base`.
pub fn run_grid_search<P: Problem + ?Sized>(
    problem: &P,
    theta0: &[f64],
    base: &RunConfig,
    grid: &GridSpec,
    tune_budget: Budget,
    criterion: Criterion,
    execution: Execution,
) -> Result<GridResult> {
    grid.validate()?;
    let pairs = grid_points(base.algorithm, grid, base.tuner.nu);
    let scored: Vec<Result<GridPoint>> = execution.map(pairs, |(alpha, nu)| {
        let mut cfg = configure(base, alpha, nu);
        cfg.budget = tune_budget;
        let score = match run(problem, theta0, &cfg) {
            Ok(trace) => criterion.score(&trace),
            // an invalid combination, e.g. a step the line search rejects
            Err(Error::InvalidArgument(_)) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        Ok(GridPoint { alpha, nu, score })
    });
    let points = scored.into_iter().collect::<Result<Vec<_>>>()?;
    let selected = *points
        .iter()
        .filter(|p| p.score.is_finite())
        .min_by(|a, b| order(a, b))
        .ok_or(Error::GridExhausted)?;
    let trace = run(problem, theta0, &configure(base, selected.alpha, selected.nu))?;
    Ok(GridResult {
        points,
        selected,
        trace,
    })
}
