//! Concrete finite-sum objectives.

mod curvature;
mod io;
mod quadratic;
mod regression;

pub use curvature::{curvature_term, expected_curvature};
pub use io::{read_problem, write_problem, RECIPE_VERSION};
pub use quadratic::QuadraticProblem;
pub use regression::{generate_regression, phi, phi_prime, phi_second, RegressionProblem};
