//! Path-following Bregman proximal augmented Lagrangian method with a Newton
//! inner solver for convex composite problems `min f(x) + g(Ax - b)`.
//!
//! The pieces, bottom up:
//!
//! * [`legendre`]: separable Legendre functions and Bregman distances.
//! * [`problem`]: the composite problem, its Lagrangian and KKT residuals.
//! * [`penalty`]: the marginalized dual penalties and the multiplier update.
//! * [`auglag`]: the per-iteration subproblem `J_k`, `B_k` and the relative
//!   stopping rule.
//! * [`newton`]: pure Newton steps on `J_k` and predicted step counts.
//! * [`outer`]: step-size selection and the outer loop.
//! * [`diagnostics`]: empirical checks of convergence behaviour on traces.
//! * [`oracle`]: independent reference solvers for tests.
//!
//! With the `parallel` feature (default) batch entry points such as
//! [`outer::solve_batch`] spread work over a rayon pool; without it they run
//! sequentially with identical results.

pub mod auglag;
pub mod diagnostics;
mod error;
pub mod legendre;
pub mod linalg;
pub mod newton;
pub mod oracle;
pub mod outer;
pub mod parallel;
pub mod penalty;
pub mod problem;
pub mod special;

pub use error::{Error, Result};
pub use legendre::{BregmanGeometry, LegendreFunction, LegendreKind};
pub use linalg::SparseMatrix;
pub use outer::{solve, Regime, RhoSchedule, SolveReport, SolverConfig, Status};
pub use penalty::{DualPenalty, PenaltyForm};
pub use problem::{AffineMap, KktResiduals, NonsmoothTerm, ProblemSpec, SmoothFunction, SmoothObjective};
