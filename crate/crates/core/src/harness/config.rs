use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizers::{Algorithm, TraceOptions};
use crate::problems::{generate_regression, read_problem, RegressionProblem};
use crate::schedule::TunerConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    #[default]
    Regression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub seed: u64,
    pub n: usize,
    pub p: usize,
    /// Load the instance from a file written by `gen-problem` instead of
    /// generating it.
    pub path: Option<PathBuf>,
}

impl Default for ProblemSpec {
    fn default() -> Self {
        ProblemSpec {
            kind: ProblemKind::Regression,
            seed: 0,
            n: 500,
            p: 30,
            path: None,
        }
    }
}

impl ProblemSpec {
    pub fn load(&self) -> Result<RegressionProblem> {
        match &self.path {
            Some(path) => read_problem(BufReader::new(File::open(path)?)),
            None => generate_regression(self.seed, self.n, self.p),
        }
    }
}

/// Hyper-parameter values to try. Algorithms without a `ν` ignore `nu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub alpha: Vec<f64>,
    pub nu: Vec<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            alpha: vec![1e-4, 1e-3, 1e-2, 1e-1, 1e0],
            nu: vec![1.0, 2.0, 5.0],
        }
    }
}

impl GridSpec {
    pub fn singleton(alpha: f64, nu: f64) -> Self {
        GridSpec {
            alpha: vec![alpha],
            nu: vec![nu],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha.is_empty() || self.nu.is_empty() {
            return Err(Error::Config("grids must be non-empty".into()));
        }
        if self.alpha.iter().chain(&self.nu).any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config("grid values must be positive and finite".into()));
        }
        Ok(())
    }
}

/// One experiment, read from a single JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub algorithms: Vec<Algorithm>,
    /// Grid shared by every algorithm unless overridden in `grids`.
    pub grid: GridSpec,
    pub grids: BTreeMap<Algorithm, GridSpec>,
    /// Fixed hyper-parameters; `alpha` and `nu` are replaced by grid values.
    pub tuner: TunerConfig,
    /// `None` means full batch.
    pub batch_size: Option<usize>,
    pub epochs: u64,
    /// Tuning budget; defaults to 10% of `epochs`, at least one.
    pub tune_epochs: Option<u64>,
    /// Full-gradient norm logging period, in epochs. Zero disables it.
    pub log_period: u64,
    /// Log a trace row every this many outer iterations.
    pub record_every: u64,
    /// Number of initializations averaged per algorithm.
    pub seeds: u64,
    /// First run seed; seeds `seed .. seed + seeds` are used.
    pub seed: u64,
    /// Iteration budget of the reference runs that estimate `J*`.
    pub j_star_iterations: u64,
    pub threshold: f64,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            problem: ProblemSpec::default(),
            algorithms: vec![Algorithm::StepTunedSgd],
            grid: GridSpec::default(),
            grids: BTreeMap::new(),
            tuner: TunerConfig::default(),
            batch_size: None,
            epochs: 250,
            tune_epochs: None,
            log_period: 1,
            record_every: 1,
            seeds: 3,
            seed: 0,
            j_star_iterations: 100_000,
            threshold: 0.1,
            out: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let file = File::open(path)
            .map_err(|e| Error::Config(format!("cannot open {}: {e}", path.display())))?;
        serde_json::from_reader(BufReader::new(file))
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Default setup of the full-batch comparison.
    pub fn figure2() -> Self {
        ExperimentConfig {
            algorithms: vec![Algorithm::FullBatchTuned, Algorithm::BbAbs, Algorithm::Armijo],
            batch_size: None,
            epochs: 250,
            seeds: 1,
            log_period: 0,
            ..ExperimentConfig::default()
        }
    }

    /// Default setup of the mini-batch comparison.
    pub fn figure3() -> Self {
        ExperimentConfig {
            algorithms: vec![
                Algorithm::Sgd,
                Algorithm::StochasticGv,
                Algorithm::ExactGv,
                Algorithm::ExpectedGv,
                Algorithm::StepTunedSgd,
            ],
            batch_size: Some(50),
            epochs: 250,
            tune_epochs: Some(50),
            ..ExperimentConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.algorithms.is_empty() {
            return Err(Error::Config("no algorithms selected".into()));
        }
        if self.epochs < 1 {
            return Err(Error::Config("budget must be at least one epoch".into()));
        }
        if self.tune_epochs == Some(0) {
            return Err(Error::Config("tuning budget must be at least one epoch".into()));
        }
        if self.seeds < 1 {
            return Err(Error::Config("need at least one seed".into()));
        }
        if self.batch_size == Some(0) {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if self.problem.path.is_none() && (self.problem.n == 0 || self.problem.p == 0) {
            return Err(Error::Config("problem shape must be positive".into()));
        }
        if !(self.threshold > 0.0) {
            return Err(Error::Config("threshold must be positive".into()));
        }
        self.grid.validate()?;
        for grid in self.grids.values() {
            grid.validate()?;
        }
        self.tuner.validate().map_err(|e| Error::Config(e.to_string()))
    }

    pub fn grid_for(&self, algorithm: Algorithm) -> &GridSpec {
        self.grids.get(&algorithm).unwrap_or(&self.grid)
    }

    pub fn tune_epochs(&self) -> u64 {
        self.tune_epochs.unwrap_or((self.epochs / 10).max(1))
    }

    pub fn trace_options(&self, iters_per_epoch: u64) -> TraceOptions {
        TraceOptions {
            record_every: self.record_every.max(1),
            grad_norm_every: (self.log_period > 0).then(|| self.log_period * iters_per_epoch),
            keep_batches: false,
        }
    }

    pub fn run_seeds(&self) -> impl Iterator<Item = u64> + '_ {
        self.seed..self.seed + self.seeds
    }
}
