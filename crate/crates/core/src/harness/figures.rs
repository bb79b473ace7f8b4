use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::harness::{
    average_traces, configure, grid_points, run_grid_search, write_trace_csv, Criterion,
    ExperimentConfig, GridPoint,
};
use crate::optimizers::{
    iters_per_epoch, run, run_with_sink, Algorithm, Budget, RunConfig, Trace, TraceOptions,
    TraceRecord, TraceSink,
};
use crate::oracle::Problem;
use crate::problems::{RegressionProblem, RECIPE_VERSION};
use crate::rng::init_theta;

/// Reference optimum for the full-batch experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JStar {
    pub value: f64,
    pub problem_seed: u64,
    pub init_seed: u64,
    pub n: usize,
    pub p: usize,
    pub recipe: u32,
    pub iterations: u64,
}

const J_STAR_LOG_PERIOD: u64 = 100;
/// A reference run stops once its best loss has not dropped by more than
/// `J_STAR_TOL` for `J_STAR_STALL` iterations.
const J_STAR_STALL: u64 = 10_000;
const J_STAR_TOL: f64 = 1e-12;

struct BestLoss {
    best: f64,
    improved_at: u64,
    last: u64,
}

impl TraceSink for BestLoss {
    fn record(&mut self, record: &TraceRecord) -> Result<()> {
        if record.loss.is_finite() && record.loss < self.best - J_STAR_TOL {
            self.improved_at = record.k;
        }
        if record.loss.is_finite() {
            self.best = self.best.min(record.loss);
        }
        self.last = record.k;
        Ok(())
    }

    fn should_stop(&self) -> bool {
        self.last - self.improved_at >= J_STAR_STALL
    }
}

fn base_config(config: &ExperimentConfig, algorithm: Algorithm, budget: Budget) -> RunConfig {
    let mut cfg = RunConfig::new(algorithm, config.tuner, budget).with_seed(config.seed);
    cfg.batch_size = config.batch_size;
    cfg
}

/// Smallest loss seen by any algorithm of `config`, run full batch at each
/// of its grid points for up to `config.j_star_iterations` iterations.
/// Runs that have stalled stop early.
pub fn compute_j_star(
    problem: &RegressionProblem,
    config: &ExperimentConfig,
    execution: Execution,
) -> Result<JStar> {
    let theta0 = init_theta(config.seed, problem.dim());
    let mut jobs = Vec::new();
    for &alg in &config.algorithms {
        for (alpha, nu) in grid_points(alg, config.grid_for(alg), config.tuner.nu) {
            let mut cfg = configure(
                &base_config(config, alg, Budget::Iterations(config.j_star_iterations)),
                alpha,
                nu,
            );
            cfg.batch_size = None;
            cfg.trace = TraceOptions {
                record_every: J_STAR_LOG_PERIOD,
                ..TraceOptions::default()
            };
            jobs.push(cfg);
        }
    }
    let bests = execution.map(jobs, |cfg| -> Result<f64> {
        let mut sink = BestLoss {
            best: f64::INFINITY,
            improved_at: 0,
            last: 0,
        };
        run_with_sink(problem, &theta0, &cfg, &mut sink)?;
        Ok(sink.best)
    });
    let mut value = f64::INFINITY;
    for best in bests {
        value = value.min(best?);
    }
    if !value.is_finite() {
        return Err(Error::GridExhausted);
    }
    Ok(JStar {
        value,
        problem_seed: problem.seed(),
        init_seed: config.seed,
        n: problem.num_samples(),
        p: problem.dim(),
        recipe: RECIPE_VERSION,
        iterations: config.j_star_iterations,
    })
}

fn j_star_path(dir: &Path, problem: &RegressionProblem, config: &ExperimentConfig) -> PathBuf {
    dir.join(format!(
        "jstar-r{}-s{}-n{}-p{}-init{}-it{}.json",
        RECIPE_VERSION,
        problem.seed(),
        problem.num_samples(),
        problem.dim(),
        config.seed,
        config.j_star_iterations
    ))
}

/// Reads `J*` from the cache in `dir`, computing and storing it if absent.
pub fn load_or_compute_j_star(
    problem: &RegressionProblem,
    config: &ExperimentConfig,
    dir: &Path,
    execution: Execution,
) -> Result<JStar> {
    let path = j_star_path(dir, problem, config);
    if let Ok(file) = File::open(&path) {
        if let Ok(cached) = serde_json::from_reader::<_, JStar>(BufReader::new(file)) {
            return Ok(cached);
        }
    }
    let j_star = compute_j_star(problem, config, execution)?;
    fs::create_dir_all(dir)?;
    serde_json::to_writer_pretty(BufWriter::new(File::create(&path)?), &j_star)?;
    Ok(j_star)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Figure2Row {
    pub algorithm: Algorithm,
    pub alpha: f64,
    pub nu: f64,
    pub iterations_to_threshold: Option<u64>,
    pub final_loss: f64,
    pub fn_evals: u64,
}

#[derive(Debug, Clone)]
pub struct Figure2Report {
    pub j_star: JStar,
    pub threshold: f64,
    pub rows: Vec<Figure2Row>,
    pub grids: Vec<Vec<GridPoint>>,
    pub traces: Vec<Trace>,
}

impl Figure2Report {
    pub fn row(&self, algorithm: Algorithm) -> Option<&Figure2Row> {
        self.rows.iter().find(|r| r.algorithm == algorithm)
    }
}

fn write_csv_file(path: &Path, trace: &[TraceRecord]) -> Result<()> {
    write_trace_csv(trace, BufWriter::new(File::create(path)?))
}

/// Full-batch comparison: each algorithm is tuned to reach
/// `|J − J*| < threshold` in as few iterations as possible. An algorithm
/// that never reaches it at any grid point is tuned on final loss instead.
pub fn run_figure2(config: &ExperimentConfig, execution: Execution) -> Result<Figure2Report> {
    config.validate()?;
    let problem = config.problem.load()?;
    let j_star = load_or_compute_j_star(&problem, config, &config.out, execution)?;
    let theta0 = init_theta(config.seed, problem.dim());
    let budget = Budget::Epochs(config.epochs);
    let criterion = Criterion::IterationsTo {
        target: j_star.value,
        threshold: config.threshold,
    };

    let mut rows = Vec::new();
    let mut grids = Vec::new();
    let mut traces = Vec::new();
    for &alg in &config.algorithms {
        let mut base = base_config(config, alg, budget);
        base.batch_size = None;
        base.trace = config.trace_options(1);
        let grid = config.grid_for(alg);
        let result = match run_grid_search(&problem, &theta0, &base, grid, budget, criterion, execution) {
            Err(Error::GridExhausted) => run_grid_search(
                &problem, &theta0, &base, grid, budget, Criterion::FinalLoss, execution,
            )?,
            other => other?,
        };
        let reached = criterion.score(&result.trace);
        rows.push(Figure2Row {
            algorithm: alg,
            alpha: result.selected.alpha,
            nu: result.selected.nu,
            iterations_to_threshold: reached.is_finite().then_some(reached as u64),
            final_loss: result.trace.final_loss().unwrap_or(f64::NAN),
            fn_evals: result.trace.fn_evals,
        });
        grids.push(result.points);
        traces.push(result.trace);
    }

    fs::create_dir_all(&config.out)?;
    for trace in &traces {
        write_csv_file(
            &config.out.join(format!("figure2-{}.csv", trace.algorithm)),
            &trace.records,
        )?;
    }
    let mut table = csv::Writer::from_path(config.out.join("figure2.csv"))?;
    for row in &rows {
        table.serialize(row)?;
    }
    table.flush()?;

    Ok(Figure2Report {
        j_star,
        threshold: config.threshold,
        rows,
        grids,
        traces,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Figure3Row {
    pub algorithm: Algorithm,
    pub alpha: f64,
    pub nu: f64,
    /// Seed-averaged training loss at the end of the budget.
    pub final_loss: f64,
    pub grad_evals: u64,
    pub diverged_seeds: u64,
}

#[derive(Debug, Clone)]
pub struct Figure3Report {
    pub rows: Vec<Figure3Row>,
    pub grids: Vec<Vec<GridPoint>>,
    /// Seed-averaged trace per algorithm.
    pub traces: Vec<(Algorithm, Vec<TraceRecord>)>,
}

impl Figure3Report {
    pub fn row(&self, algorithm: Algorithm) -> Option<&Figure3Row> {
        self.rows.iter().find(|r| r.algorithm == algorithm)
    }
}

/// Tunes every algorithm on the loss after `tune_epochs`, reruns the
/// winner for the full budget from each seed and averages the traces.
/// Files are named `<prefix>-<algorithm>.csv` and `<prefix>.csv`.
pub fn run_comparison(
    config: &ExperimentConfig,
    prefix: &str,
    execution: Execution,
) -> Result<Figure3Report> {
    config.validate()?;
    let problem = config.problem.load()?;
    let n = problem.num_samples();
    let theta0 = init_theta(config.seed, problem.dim());

    let mut rows = Vec::new();
    let mut grids = Vec::new();
    let mut traces = Vec::new();
    for &alg in &config.algorithms {
        let mut base = base_config(config, alg, Budget::Epochs(config.epochs));
        let ipe = iters_per_epoch(n, base.effective_batch(n));
        base.trace = config.trace_options(ipe);
        let result = run_grid_search(
            &problem,
            &theta0,
            &base,
            config.grid_for(alg),
            Budget::Epochs(config.tune_epochs()),
            Criterion::FinalLoss,
            execution,
        )?;
        let winner = configure(&base, result.selected.alpha, result.selected.nu);
        let seeds: Vec<u64> = config.run_seeds().collect();
        let runs = execution.map(seeds, |s| {
            let cfg = winner.clone().with_seed(s);
            run(&problem, &init_theta(s, problem.dim()), &cfg)
        });
        let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
        let diverged_seeds = runs.iter().filter(|t| t.diverged()).count() as u64;
        let averaged = average_traces(&runs)?;
        let (final_loss, grad_evals) = if diverged_seeds > 0 {
            (f64::INFINITY, averaged.last().map_or(0, |r| r.grad_evals))
        } else {
            let last = averaged.last().ok_or_else(|| Error::invalid("empty trace"))?;
            (last.loss, last.grad_evals)
        };
        rows.push(Figure3Row {
            algorithm: alg,
            alpha: result.selected.alpha,
            nu: result.selected.nu,
            final_loss,
            grad_evals,
            diverged_seeds,
        });
        grids.push(result.points);
        traces.push((alg, averaged));
    }

    fs::create_dir_all(&config.out)?;
    for (alg, trace) in &traces {
        write_csv_file(&config.out.join(format!("{prefix}-{alg}.csv")), trace)?;
    }
    let mut table = csv::Writer::from_path(config.out.join(format!("{prefix}.csv")))?;
    for row in &rows {
        table.serialize(row)?;
    }
    table.flush()?;
    Ok(Figure3Report {
        rows,
        grids,
        traces,
    })
}

/// Mini-batch comparison of SGD, the gradient-variation heuristics and
/// Step-Tuned SGD.
pub fn run_figure3(config: &ExperimentConfig, execution: Execution) -> Result<Figure3Report> {
    run_comparison(config, "figure3", execution)
}
