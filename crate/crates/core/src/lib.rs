//! Distributed consensus optimization over an undirected graph by a Bregman
//! parallel method of multipliers, with optional stochastic node activation.
//!
//! Each node i holds a private objective f_i and a local copy x_i of the
//! decision variable; consensus is enforced through a doubly stochastic
//! mixing matrix P supported on the graph. Per iteration, active nodes build
//! a Bregman average of their neighborhood, take a local prox step, and all
//! nodes update duals along the disagreement ((I−P)⊗I_n)x.
//!
//! Module map:
//! - [`graph`]: undirected graphs, Erdős–Rényi sampling, connectivity.
//! - [`mixing`]: Metropolis/lazy mixing matrices, spectral checks.
//! - [`mirror`]: mirror maps (negative entropy, squared Euclidean), Bregman
//!   divergences, simplex projections.
//! - [`problems`]: linear objectives over the probability simplex, prox
//!   closed forms, optimality certificates.
//! - [`solver`]: the iteration itself (deterministic and stochastic).
//! - [`diagnostics`]: Lagrangian gaps, residuals, Lyapunov function,
//!   expectation checks, trace/summary output.

// Negated float comparisons (`!(x > 0.0)`) are deliberate throughout: they
// reject NaN along with out-of-range values. Index loops over parallel
// buffers stay as plain loops where iterator chains would obscure the math.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod blocks;
pub mod diagnostics;
pub mod graph;
pub mod mirror;
pub mod mixing;
pub mod problems;
pub mod solver;

pub use blocks::BlockVec;
pub use diagnostics::{
    lagrangian, ErgodicReport, DescentReport, ExpectationReport, RunSummary, TraceCollector,
    TraceRecord,
};
pub use graph::{Graph, GraphError};
pub use mirror::{MirrorError, MirrorMap};
pub use mixing::{MixingMatrix, ValidationReport};
pub use problems::{
    Certificate, ConsensusProblem, Exactness, LinearSimplexProblem, ProblemError,
};
pub use solver::{Mode, SolverError, SolverParams, SolverState};
