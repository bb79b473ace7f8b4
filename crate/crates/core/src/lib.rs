//! Curvature-aware step-size tuning for mini-batch SGD.
//!
//! The crate provides
//!
//! - finite-sum problem oracles and seeded mini-batch sampling
//!   ([`oracle`], [`rng`], [`problems`]),
//! - the step-size machinery ([`schedule`]): a Barzilai-Borwein ratio with
//!   a large-step fallback on non-positive curvature, clamping, a debiased
//!   moving average and Robbins-Monro decay,
//! - optimizers ([`optimizers`]): Step-Tuned SGD, its full-batch ancestor,
//!   three gradient-variation heuristics, and the SGD, BB-with-absolute
//!   values, Armijo, ADAM and RMSprop baselines,
//! - an experiment harness ([`harness`]) with grid search, CSV traces and
//!   convergence-rate statistics,
//! - independent numerical oracles ([`verify`]).
//!
//! ```
//! use steptuned::{problems::generate_regression, optimizers, schedule::TunerConfig};
//!
//! let problem = generate_regression(0, 100, 5).unwrap();
//! let theta0 = vec![0.0; 5];
//! let trace = optimizers::run_step_tuned_sgd(
//!     &problem, &theta0, TunerConfig { alpha: 0.5, ..TunerConfig::default() }, 10, 50, 1,
//! ).unwrap();
//! assert_eq!(trace.grad_evals, 100);
//! ```

pub mod error;
pub mod exec;
pub mod harness;
pub mod optimizers;
pub mod oracle;
pub mod params;
pub mod problems;
pub mod rng;
pub mod schedule;
pub mod verify;

pub use error::{Error, Result};
pub use exec::Execution;
pub use oracle::Problem;
pub use params::ParamVector;
pub use rng::{MiniBatch, RngStream};
