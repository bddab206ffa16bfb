//! Convex Tikhonov regularization `min ½‖Kx − y‖² + αR(x)` with
//! Bregman-distance error analysis and heuristic parameter choice.

pub mod bregman;
pub mod error;
pub mod experiments;
pub mod io;
pub mod linops;
pub mod penalty;
pub mod problems;
pub mod rng;
pub mod rules;
pub mod solver;
pub mod vector;

pub use error::{Error, Result};
pub use linops::LinearOperator;
pub use penalty::Penalty;
pub use solver::{RegularizationPath, SolverOptions, TikhonovSolution, TikhonovSolver};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/operators.md")]
    struct Operators;
    #[doc = include_str!("../../../book/src/penalties.md")]
    struct Penalties;
    #[doc = include_str!("../../../book/src/solver.md")]
    struct Solver;
    #[doc = include_str!("../../../book/src/bregman.md")]
    struct Bregman;
    #[doc = include_str!("../../../book/src/rules.md")]
    struct Rules;
    #[doc = include_str!("../../../book/src/problems.md")]
    struct Problems;
    #[doc = include_str!("../../../book/src/cli.md")]
    struct Cli;
}
