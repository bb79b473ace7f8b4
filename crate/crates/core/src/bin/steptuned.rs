use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use steptuned::harness::{
    run_comparison, run_figure2, run_figure3, CsvSink, ExperimentConfig,
};
use steptuned::optimizers::{run_with_sink, Algorithm, Budget, RunConfig};
use steptuned::problems::{generate_regression, write_problem};
use steptuned::rng::init_theta;
use steptuned::schedule::DecayMode;
use steptuned::{verify, Error, Execution, Problem};

#[derive(Parser)]
#[command(name = "steptuned", version, about = "Step-tuned SGD experiments on synthetic problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one algorithm and stream its trace to CSV.
    Run(Overrides),
    /// Tune every selected algorithm on its grid and compare the winners.
    Grid(Overrides),
    /// Full-batch comparison: tuned step vs BB with absolute values vs Armijo.
    Figure2(Overrides),
    /// Mini-batch comparison: SGD, gradient-variation heuristics, Step-Tuned SGD.
    Figure3(Overrides),
    /// Write a regression instance to a text file.
    GenProblem {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = 30)]
        p: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the numerical oracle suite.
    #[command(hide = true)]
    Verify,
}

/// Flags applied on top of the JSON configuration.
#[derive(Args)]
struct Overrides {
    /// JSON experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Problem file written by `gen-problem`.
    #[arg(long)]
    problem: Option<PathBuf>,
    /// Seed of the generated problem instance.
    #[arg(long)]
    problem_seed: Option<u64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    /// Seed for initialization and mini-batch sampling.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated algorithm names.
    #[arg(long, value_delimiter = ',')]
    alg: Vec<Algorithm>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    clamp_lo: Option<f64>,
    #[arg(long)]
    clamp_hi: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<u64>,
    #[arg(long)]
    tune_epochs: Option<u64>,
    /// per-iter or per-epoch
    #[arg(long)]
    decay_mode: Option<DecayMode>,
    /// Full-gradient norm logging period in epochs (0 disables).
    #[arg(long)]
    log_period: Option<u64>,
    #[arg(long)]
    seeds: Option<u64>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run grid points and seeds one after another.
    #[arg(long)]
    sequential: bool,
}

impl Overrides {
    fn resolve(&self, default: ExperimentConfig) -> Result<ExperimentConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_path(path)?,
            None => default,
        };
        if let Some(path) = &self.problem {
            cfg.problem.path = Some(path.clone());
        }
        if let Some(s) = self.problem_seed {
            cfg.problem.seed = s;
        }
        if let Some(n) = self.n {
            cfg.problem.n = n;
        }
        if let Some(p) = self.p {
            cfg.problem.p = p;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if !self.alg.is_empty() {
            cfg.algorithms = self.alg.clone();
        }
        let grids = std::iter::once(&mut cfg.grid).chain(cfg.grids.values_mut());
        for grid in grids {
            if let Some(a) = self.alpha {
                grid.alpha = vec![a];
            }
            if let Some(v) = self.nu {
                grid.nu = vec![v];
            }
        }
        let t = &mut cfg.tuner;
        if let Some(a) = self.alpha {
            t.alpha = a;
        }
        if let Some(v) = self.nu {
            t.nu = v;
        }
        if let Some(b) = self.beta {
            t.beta = b;
        }
        if let Some(lo) = self.clamp_lo {
            t.m_lo = lo;
        }
        if let Some(hi) = self.clamp_hi {
            t.m_hi = hi;
        }
        if let Some(d) = self.delta {
            t.delta = d;
        }
        if let Some(m) = self.decay_mode {
            t.decay_mode = m;
        }
        if let Some(b) = self.batch_size {
            cfg.batch_size = Some(b);
        }
        if let Some(e) = self.epochs {
            cfg.epochs = e;
        }
        if let Some(e) = self.tune_epochs {
            cfg.tune_epochs = Some(e);
        }
        if let Some(l) = self.log_period {
            cfg.log_period = l;
        }
        if let Some(s) = self.seeds {
            cfg.seeds = s;
        }
        if let Some(t) = self.threshold {
            cfg.threshold = t;
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn execution(&self) -> Execution {
        if self.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }
}

fn single_run(cfg: &ExperimentConfig) -> Result<bool, Error> {
    let problem = cfg.problem.load()?;
    let algorithm = cfg.algorithms[0];
    let mut run_cfg = RunConfig::new(algorithm, cfg.tuner, Budget::Epochs(cfg.epochs)).with_seed(cfg.seed);
    run_cfg.batch_size = cfg.batch_size;
    run_cfg.armijo.step0 = cfg.tuner.alpha;
    let n = problem.num_samples();
    let ipe = steptuned::optimizers::iters_per_epoch(n, run_cfg.effective_batch(n));
    run_cfg.trace = cfg.trace_options(ipe);

    std::fs::create_dir_all(&cfg.out)?;
    let path = cfg.out.join(format!("run-{algorithm}-seed{}.csv", cfg.seed));
    let mut sink = CsvSink::create(&path)?;
    let trace = run_with_sink(&problem, &init_theta(cfg.seed, problem.dim()), &run_cfg, &mut sink)?;
    sink.finish()?;
    println!(
        "{algorithm}: status {:?}, iterations {}, grad_evals {}, final loss {}",
        trace.status,
        trace.iterations,
        trace.grad_evals,
        trace.final_loss().unwrap_or(f64::NAN)
    );
    println!("trace written to {}", path.display());
    Ok(!trace.diverged())
}

fn execute(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::Run(o) => {
            let cfg = o.resolve(ExperimentConfig::default())?;
            Ok(if single_run(&cfg)? { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Command::Grid(o) => {
            let cfg = o.resolve(ExperimentConfig::default())?;
            let report = run_comparison(&cfg, "grid", o.execution())?;
            println!("algorithm,alpha,nu,final_loss,grad_evals,diverged_seeds");
            for r in &report.rows {
                println!("{},{},{},{},{},{}", r.algorithm, r.alpha, r.nu, r.final_loss, r.grad_evals, r.diverged_seeds);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Figure2(o) => {
            let cfg = o.resolve(ExperimentConfig::figure2())?;
            let report = run_figure2(&cfg, o.execution())?;
            println!("J* = {} (threshold {})", report.j_star.value, report.threshold);
            println!("algorithm,alpha,nu,iterations_to_threshold,final_loss");
            for r in &report.rows {
                let its = r.iterations_to_threshold.map_or("never".to_string(), |k| k.to_string());
                println!("{},{},{},{},{}", r.algorithm, r.alpha, r.nu, its, r.final_loss);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Figure3(o) => {
            let cfg = o.resolve(ExperimentConfig::figure3())?;
            let report = run_figure3(&cfg, o.execution())?;
            println!("algorithm,alpha,nu,final_loss,grad_evals,diverged_seeds");
            for r in &report.rows {
                println!("{},{},{},{},{},{}", r.algorithm, r.alpha, r.nu, r.final_loss, r.grad_evals, r.diverged_seeds);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::GenProblem { seed, n, p, out } => {
            let problem = generate_regression(seed, n, p).map_err(|e| Error::Config(e.to_string()))?;
            write_problem(&problem, BufWriter::new(File::create(&out)?))?;
            println!("wrote {n}x{p} instance (seed {seed}) to {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify => {
            let checks = verify::run_suite()?;
            let mut ok = true;
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                ok &= c.passed;
            }
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::InvalidArgument(_) => ExitCode::from(3),
                Error::GridExhausted => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
