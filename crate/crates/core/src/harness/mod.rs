//! Experiment runner: JSON configuration, grid search, trace CSVs, the two
//! synthetic comparison experiments and convergence-rate statistics.

mod config;
mod csv;
mod figures;
mod grid;
mod stats;

pub use self::config::{ExperimentConfig, GridSpec, ProblemKind, ProblemSpec};
pub use self::csv::{read_trace_csv, write_trace_csv, CsvSink};
pub use self::figures::{
    compute_j_star, load_or_compute_j_star, run_comparison, run_figure2, run_figure3, Figure2Report, Figure2Row,
    Figure3Report, Figure3Row, JStar,
};
pub use self::grid::{configure, grid_points, run_grid_search, Criterion, GridPoint, GridResult};
pub use self::stats::{average_traces, rate_statistic, RatePoint};
