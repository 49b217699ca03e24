//! Transmit optimization for the Gaussian MIMO broadcast channel under
//! general linear covariance constraints.
//!
//! Three solvers maximize a weighted sum of user rates:
//!
//! - [`subgradient::solve_dpc_subgradient`]: dirty-paper coding via the dual
//!   MAC, with an inner power optimization and an outer subgradient iteration
//!   on the dual variables.
//! - [`newton::solve_dpc_newton`]: dirty-paper coding via the min-max dual,
//!   solved by an infeasible-start Newton method with a logarithmic barrier.
//! - [`zfbf::solve_zfbf`]: zero-forcing beamforming, optimizing directly over
//!   right generalized inverses of the channel.
//!
//! Rates are in nats throughout.

pub mod dual_mac;
pub mod error;
pub mod linalg;
pub mod minimax;
pub mod newton;
pub mod problem;
pub mod subgradient;
pub mod trace;
pub mod zfbf;

pub use error::{Error, Result};
pub use problem::{BcSolution, ChannelSet, ConstraintSet, LinearConstraint, WeightVector};
pub use trace::{IterationTrace, TraceEvent, TraceRecord};

/// Result of a DPC solver run.
#[derive(Debug, Clone)]
pub struct SolverOutput {
    /// Best feasible solution found.
    pub solution: BcSolution,
    pub trace: IterationTrace,
    /// Weighted sum rate of `solution`.
    pub objective: f64,
    /// `false` when an iteration cap or a stalled line search ended the run.
    pub converged: bool,
    /// Dual variables at the returned solution, one per constraint.
    pub lambda: Vec<f64>,
    /// Certified upper bound on the optimum, when the method provides one.
    pub upper_bound: Option<f64>,
}
