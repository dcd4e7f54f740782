//! Simulation laboratory for second-order inertial gradient dynamics with
//! vanishing damping,
//!
//! ```text
//!     x''(t) + c/(1+t)^alpha * x'(t) + grad Phi(x(t)) = g(t),    t >= 0,
//! ```
//!
//! with `c > 0`, `alpha in [0,1)`, a convex C^1 potential `Phi` on a
//! finite-dimensional space, and an integrable source term `g`.
//!
//! The crate is organised around the quantities that govern the long-time
//! behaviour of this system:
//!
//! - [`damping`] — the damping coefficient `gamma(t) = c/(1+t)^alpha`, its
//!   antiderivative, and the auxiliary function `h` solving
//!   `h' - gamma*h + 1 = 0` (tabulated by stable backward integration).
//! - [`potentials`] — a catalog of convex test potentials with analytic
//!   gradients, minimum values, minimizer access and structural flags.
//! - [`forcing`] — source-term families with analytically known weighted
//!   integrability `∫ (1+t)^nu ||g(t)|| dt`.
//! - [`integrate`] — adaptive Dormand–Prince 5(4) integration of the system
//!   over long horizons, with log-spaced checkpoints and running integrals.
//! - [`diagnostics`] — energy `W`, the anchored Lyapunov function `E`,
//!   weighted integral accumulators, decay-rate fits, and the convergence
//!   checks (envelope bounds, o(.) decay, Opial distances, Cauchy tails).
//! - [`harness`] — scenario configs, builtin suites, parallel execution,
//!   CSV traces and JSON reports.
//!
//! The `inertia-lab` binary exposes the harness as a CLI; see the README.

pub mod damping;
pub mod diagnostics;
pub mod forcing;
pub mod harness;
pub mod integrate;
pub mod potentials;

pub(crate) mod quad;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid construction parameters or scenario configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Input outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Vector/matrix dimensions do not agree.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    /// Query time outside a table's range.
    #[error("time {t} outside table range [0, {t_end}]")]
    Range { t: f64, t_end: f64 },

    /// A numerical procedure produced a nonfinite value or failed to converge.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A scenario declares a theorem tag whose hypothesis it does not satisfy.
    #[error("hypothesis error: {0}")]
    Hypothesis(String),

    /// Filesystem or serialization failure in the harness.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
