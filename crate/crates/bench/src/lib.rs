//! Shared fixtures for the pipeline benchmarks: a mid-size experiment
//! (50-node random graph, 50-dimensional simplex blocks) plus a warmed-up
//! iterate so per-step costs are measured away from the symmetric start.

use bpdmm::graph::Graph;
use bpdmm::mirror::MirrorMap;
use bpdmm::mixing::MixingMatrix;
use bpdmm::problems::LinearSimplexProblem;
use bpdmm::solver::{self, Mode, SolverParams, SolverState};

pub const M: usize = 50;
pub const N: usize = 50;

pub struct Fixture {
    pub graph: Graph,
    pub p: MixingMatrix,
    pub problem: LinearSimplexProblem,
    pub params: SolverParams,
    pub state: SolverState,
}

/// Desk-scale experiment with the state advanced a few iterations so the
/// blocks are generic interior points rather than the uniform start.
pub fn fixture(phi: MirrorMap) -> Fixture {
    let graph = Graph::erdos_renyi(M, 0.2, 3).expect("seed 3 yields a connected graph");
    let p = MixingMatrix::metropolis(&graph).lazy();
    let problem = LinearSimplexProblem::random(M, N, 41);
    let mut params = solver::default_params(0.5, 1.0, phi, N);
    params.iterations = 5;
    params.seed = 7;
    params.mode = Mode::Stochastic;
    let state = solver::run(&problem, &p, phi, &params, |_| {}).expect("warmup run");
    Fixture { graph, p, problem, params, state }
}
