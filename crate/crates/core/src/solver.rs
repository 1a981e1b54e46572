//! The parallel Bregman iteration: mirror averaging, local prox steps, dual
//! disagreement integration, node sampling, and parameter selection.
//!
//! One iteration from state (x^t, μ^t): active nodes i form the Bregman
//! average y_i of all blocks under row i of P, then solve
//!   x_i^{t+1} = argmin_{x∈X} f_i(x) + ⟨x, μ_i − Σ_j P_ij μ_j⟩ + ρ B_φ(x, y_i),
//! inactive nodes carry x_i^{t+1} = x_i^t, and every node integrates the
//! disagreement: μ_i += τ(x_i^{t+1} − Σ_j P_ij x_j^{t+1}).

use crate::blocks::BlockVec;
use crate::mirror::{simplex_normalize, MirrorError, MirrorMap, ENTROPY_DOMAIN_FLOOR};
use crate::mixing::{sigma, MixingMatrix};
use crate::problems::{ConsensusProblem, ProblemError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("subset size round(omega*m) = 0 for m={m}, omega={omega}")]
    EmptySample { m: usize, omega: f64 },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("mirror average references node {node}: {source}")]
    Domain {
        node: usize,
        #[source]
        source: MirrorError,
    },
    #[error("prox at node {node}: {source}")]
    Prox {
        node: usize,
        #[source]
        source: ProblemError,
    },
    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<SolverError>,
    },
}

/// Whether every node updates each iteration or a random subset does.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "deterministic")]
    Deterministic,
    #[serde(rename = "stochastic")]
    Stochastic,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Deterministic => "deterministic",
            Mode::Stochastic => "stochastic",
        })
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "deterministic" => Ok(Mode::Deterministic),
            "stochastic" => Ok(Mode::Stochastic),
            other => Err(format!("unknown mode {other:?} (expected deterministic or stochastic)")),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolverParams {
    pub rho: f64,
    pub tau: f64,
    pub gamma: f64,
    pub omega: f64,
    pub iterations: usize,
    pub seed: u64,
    pub mode: Mode,
}

/// Largest admissible dual step: τ ≤ ρ(ωασ − γ)/(2 − ω). The default τ and
/// the check evaluate this same expression, so a saturated default passes
/// the check with exact equality.
fn tau_bound(rho: f64, omega: f64, alpha: f64, sigma: f64, gamma: f64) -> f64 {
    rho * (omega * alpha * sigma - gamma) / (2.0 - omega)
}

/// γ = ωασ/2 and τ at its bound, ρ(ωασ − γ)/(2 − ω) = ρωασ/(2(2 − ω)).
/// With ρ = 1, α = 1, σ = 1 this is γ = ω/2 and τ = ω/(4 − 2ω). The
/// returned params carry iterations = 0, seed = 0, stochastic mode.
pub fn default_params(omega: f64, rho: f64, phi: MirrorMap, n: usize) -> SolverParams {
    assert!(omega > 0.0 && omega <= 1.0, "omega must lie in (0, 1]");
    assert!(rho > 0.0, "rho must be positive");
    let alpha = phi.alpha();
    let s = sigma(phi.norm_exponent(), n);
    let gamma = 0.5 * omega * alpha * s;
    SolverParams {
        rho,
        tau: tau_bound(rho, omega, alpha, s, gamma),
        gamma,
        omega,
        iterations: 0,
        seed: 0,
        mode: Mode::Stochastic,
    }
}

/// Outcome of [`check_params`]: the bounds actually used plus one message
/// per violated inequality.
#[derive(Debug, Clone)]
pub struct ParamCheck {
    pub ok: bool,
    pub violations: Vec<String>,
    pub tau_bound: f64,
    pub gamma_bound: f64,
    pub sigma: f64,
}

/// Verifies the stochastic-mode step-size condition: 0 < γ < ωασ strictly
/// and 0 < τ ≤ ρ(ωασ − γ)/(2 − ω), plus basic positivity.
pub fn check_params(params: &SolverParams, phi: MirrorMap, n: usize) -> ParamCheck {
    let alpha = phi.alpha();
    let s = sigma(phi.norm_exponent(), n);
    let gamma_bound = params.omega * alpha * s;
    let t_bound = tau_bound(params.rho, params.omega, alpha, s, params.gamma);
    let mut violations = Vec::new();
    if !(params.rho > 0.0) {
        violations.push(format!("rho = {} must be positive", params.rho));
    }
    if !(params.omega > 0.0 && params.omega <= 1.0) {
        violations.push(format!("omega = {} must lie in (0, 1]", params.omega));
    }
    if !(params.gamma > 0.0 && params.gamma < gamma_bound) {
        violations.push(format!(
            "gamma = {} must satisfy 0 < gamma < omega*alpha*sigma = {}",
            params.gamma, gamma_bound
        ));
    }
    if !(params.tau > 0.0 && params.tau <= t_bound) {
        violations.push(format!(
            "tau = {} must satisfy 0 < tau <= rho*(omega*alpha*sigma - gamma)/(2 - omega) = {}",
            params.tau, t_bound
        ));
    }
    ParamCheck { ok: violations.is_empty(), violations, tau_bound: t_bound, gamma_bound, sigma: s }
}

/// Primal blocks, duals, and the dual from one step earlier (μ^{t−1}),
/// which the Lyapunov function reads.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub x: BlockVec,
    pub mu: BlockVec,
    pub mu_prev: BlockVec,
    pub t: usize,
}

impl SolverState {
    /// x⁰ = uniform simplex point per node, μ⁰ = 0, and
    /// μ^{−1} = μ⁰ − τ((I−P)⊗I_n)x⁰ (zero here: x⁰ is at consensus).
    pub fn initial(m: usize, n: usize, p: &MixingMatrix, tau: f64) -> Self {
        let x = BlockVec::constant(m, n, 1.0 / n as f64);
        let mu = BlockVec::zeros(m, n);
        Self::from_parts(x, mu, p, tau)
    }

    /// Arbitrary start: μ^{−1} is backfilled as μ − τ((I−P)⊗I_n)x so the
    /// dual-update invariant μ^t = μ^{t−1} + τQx^t holds at t = 0.
    pub fn from_parts(x: BlockVec, mu: BlockVec, p: &MixingMatrix, tau: f64) -> Self {
        let mut mu_prev = mu.clone();
        mu_prev.axpy(-tau, &p.disagreement(&x));
        SolverState { x, mu, mu_prev, t: 0 }
    }
}

/// Uniformly random subset of round(ω·m) nodes without replacement,
/// ascending. Errors when the rounded size is zero.
pub fn sample_nodes(
    m: usize,
    omega: f64,
    rng: &mut impl Rng,
) -> Result<Vec<usize>, SolverError> {
    assert!(omega > 0.0 && omega <= 1.0, "omega must lie in (0, 1]");
    let s = (omega * m as f64).round() as usize;
    if s == 0 {
        return Err(SolverError::EmptySample { m, omega });
    }
    let mut subset: Vec<usize> = rand::seq::index::sample(rng, m, s).into_iter().collect();
    subset.sort_unstable();
    Ok(subset)
}

/// Bregman average under each listed node's row of P:
/// y_i = argmin_{y∈X} Σ_j P[i][j] B_φ(y, x_j). Entropy: the weighted
/// geometric mean, normalized (log-space, max-shifted). Euclidean: the
/// convex combination Σ_j P[i][j] x_j.
pub fn mirror_average(
    x: &BlockVec,
    p: &MixingMatrix,
    phi: MirrorMap,
    nodes: &[usize],
) -> Result<Vec<Vec<f64>>, SolverError> {
    let n = x.dimension();
    let mut out = Vec::with_capacity(nodes.len());
    for &i in nodes {
        let row = p.row(i);
        let y = match phi {
            MirrorMap::NegativeEntropy => {
                let mut logs = vec![0.0f64; n];
                for (j, xj) in x.blocks().enumerate() {
                    let w = row[j];
                    if w == 0.0 {
                        continue;
                    }
                    for (k, &v) in xj.iter().enumerate() {
                        if !(v > 0.0) {
                            return Err(SolverError::Domain {
                                node: j,
                                source: MirrorError::Domain { index: k, value: v },
                            });
                        }
                        logs[k] += w * v.ln();
                    }
                }
                let peak = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let weights: Vec<f64> = logs.iter().map(|&t| (t - peak).exp()).collect();
                let mut y = simplex_normalize(&weights)
                    .expect("max-shifted weights always carry mass");
                for v in &mut y {
                    *v = v.max(ENTROPY_DOMAIN_FLOOR);
                }
                y
            }
            MirrorMap::SquaredEuclidean => {
                let mut y = vec![0.0f64; n];
                for (j, xj) in x.blocks().enumerate() {
                    let w = row[j];
                    if w == 0.0 {
                        continue;
                    }
                    for (k, &v) in xj.iter().enumerate() {
                        y[k] += w * v;
                    }
                }
                y
            }
        };
        out.push(y);
    }
    Ok(out)
}

/// μ_i ← μ_i + τ(x_i − Σ_j P[i][j] x_j) for every node, reading state.x as
/// the freshly committed primal. The prior μ moves into mu_prev.
pub fn dual_update(state: &mut SolverState, p: &MixingMatrix, tau: f64) {
    let disagreement = p.disagreement(&state.x);
    state.mu_prev = state.mu.clone();
    state.mu.axpy(tau, &disagreement);
}

/// One iteration with the active subset fixed by the caller. Nodes outside
/// the subset keep their primal block; the dual sweep covers every node.
/// Does not enforce the parameter condition, so proof-side tooling can step
/// deliberately out-of-range parameter sets.
pub fn step_with_subset<Pr: ConsensusProblem>(
    state: &SolverState,
    problem: &Pr,
    p: &MixingMatrix,
    phi: MirrorMap,
    params: &SolverParams,
    subset: &[usize],
) -> Result<SolverState, SolverError> {
    debug_assert!(subset.iter().all(|&i| i < state.x.node_count()));
    let y = mirror_average(&state.x, p, phi, subset)?;
    let q_mu = p.disagreement(&state.mu);
    let mut x_next = state.x.clone();
    for (pos, &i) in subset.iter().enumerate() {
        let xi = problem
            .local_prox(phi, i, &y[pos], q_mu.block(i), params.rho)
            .map_err(|source| SolverError::Prox { node: i, source })?;
        x_next.block_mut(i).copy_from_slice(&xi);
    }
    let mut next = SolverState {
        x: x_next,
        mu: state.mu.clone(),
        mu_prev: state.mu_prev.clone(),
        t: state.t,
    };
    dual_update(&mut next, p, params.tau);
    next.t += 1;
    Ok(next)
}

/// One iteration: draw the active set (all nodes in deterministic mode),
/// then step. Errors are tagged with the iteration counter.
pub fn iterate<Pr: ConsensusProblem>(
    state: &SolverState,
    problem: &Pr,
    p: &MixingMatrix,
    phi: MirrorMap,
    params: &SolverParams,
    rng: &mut impl Rng,
) -> Result<SolverState, SolverError> {
    let subset = active_set(state.x.node_count(), params, rng)
        .map_err(|e| at_iteration(state.t, e))?;
    step_with_subset(state, problem, p, phi, params, &subset)
        .map_err(|e| at_iteration(state.t, e))
}

fn active_set(
    m: usize,
    params: &SolverParams,
    rng: &mut impl Rng,
) -> Result<Vec<usize>, SolverError> {
    match params.mode {
        Mode::Deterministic => Ok((0..m).collect()),
        Mode::Stochastic => sample_nodes(m, params.omega, rng),
    }
}

fn at_iteration(t: usize, e: SolverError) -> SolverError {
    SolverError::AtIteration { iteration: t, source: Box::new(e) }
}

/// Snapshot handed to the run observer after each committed iteration.
pub struct StepEvent<'a> {
    pub before: &'a SolverState,
    pub selected: &'a [usize],
    pub after: &'a SolverState,
}

/// Runs T iterations from the standard start (uniform x⁰, zero μ⁰),
/// invoking the observer once per iteration. Stochastic mode refuses
/// parameter sets that fail [`check_params`].
pub fn run<Pr: ConsensusProblem>(
    problem: &Pr,
    p: &MixingMatrix,
    phi: MirrorMap,
    params: &SolverParams,
    mut on_step: impl FnMut(StepEvent<'_>),
) -> Result<SolverState, SolverError> {
    let m = problem.node_count();
    let n = problem.dimension();
    if params.mode == Mode::Stochastic {
        let check = check_params(params, phi, n);
        if !check.ok {
            return Err(SolverError::InvalidParams(check.violations.join("; ")));
        }
    } else {
        assert!(params.rho > 0.0 && params.tau > 0.0, "rho and tau must be positive");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut state = SolverState::initial(m, n, p, params.tau);
    for _ in 0..params.iterations {
        let subset = active_set(m, params, &mut rng).map_err(|e| at_iteration(state.t, e))?;
        let next = step_with_subset(&state, problem, p, phi, params, &subset)
            .map_err(|e| at_iteration(state.t, e))?;
        on_step(StepEvent { before: &state, selected: &subset, after: &next });
        state = next;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::problems::LinearSimplexProblem;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    fn lazy_metropolis(g: &Graph) -> MixingMatrix {
        MixingMatrix::metropolis(g).lazy()
    }

    #[test]
    fn default_params_match_reference_formulas() {
        for omega in [0.1, 0.3, 0.5, 0.9, 1.0] {
            let p = default_params(omega, 1.0, MirrorMap::NegativeEntropy, 100);
            assert_eq!(p.gamma, omega / 2.0, "gamma formula at omega={omega}");
            assert_eq!(p.tau, omega / (4.0 - 2.0 * omega), "tau formula at omega={omega}");
        }
        let half = default_params(0.5, 1.0, MirrorMap::NegativeEntropy, 100);
        assert_close(half.gamma, 0.25, 0.0);
        assert_close(half.tau, 1.0 / 6.0, 1e-16);
        let one = default_params(1.0, 1.0, MirrorMap::NegativeEntropy, 7);
        assert_close(one.gamma, 0.5, 0.0);
        assert_close(one.tau, 0.5, 0.0);
        let scaled = default_params(0.5, 2.0, MirrorMap::SquaredEuclidean, 10);
        assert_close(scaled.gamma, 0.25, 0.0);
        assert_close(scaled.tau, 1.0 / 3.0, 1e-16);
    }

    #[test]
    fn check_params_accepts_saturated_default() {
        let phi = MirrorMap::NegativeEntropy;
        for omega in [0.1, 0.25, 0.5, 0.75, 1.0] {
            let params = default_params(omega, 1.0, phi, 100);
            let check = check_params(&params, phi, 100);
            assert!(check.ok, "default params must pass: {:?}", check.violations);
            assert_eq!(params.tau, check.tau_bound, "default saturates the tau bound exactly");
        }
    }

    #[test]
    fn check_params_names_violated_inequality() {
        let phi = MirrorMap::NegativeEntropy;
        let mut params = default_params(0.5, 1.0, phi, 10);
        params.tau *= 2.0;
        let check = check_params(&params, phi, 10);
        assert!(!check.ok);
        assert!(check.violations[0].contains("tau"));

        let mut params = default_params(0.5, 1.0, phi, 10);
        params.gamma = 0.5; // = omega*alpha*sigma; strict bound excludes it
        let check = check_params(&params, phi, 10);
        assert!(!check.ok);
        assert!(check.violations[0].contains("gamma"));
    }

    #[test]
    fn sample_nodes_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(sample_nodes(100, 0.3, &mut rng).unwrap().len(), 30);
        assert_eq!(sample_nodes(5, 1.0, &mut rng).unwrap(), vec![0, 1, 2, 3, 4]);
        assert!(matches!(
            sample_nodes(4, 0.1, &mut rng),
            Err(SolverError::EmptySample { m: 4, .. })
        ));
    }

    #[test]
    fn sample_nodes_uniform_over_pairs() {
        // m=4, omega=0.5: 6 possible pairs; chi-square over 60000 draws with
        // 5 degrees of freedom. 25.0 is far beyond the 0.999 quantile (20.5).
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        let mut counts = std::collections::HashMap::new();
        let draws = 60_000;
        for _ in 0..draws {
            let s = sample_nodes(4, 0.5, &mut rng).unwrap();
            *counts.entry((s[0], s[1])).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 6, "all pairs must appear");
        let expected = draws as f64 / 6.0;
        let chi2: f64 = counts
            .values()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        assert!(chi2 < 25.0, "chi-square statistic {chi2} too large for uniformity");
    }

    #[test]
    fn mirror_average_constant_blocks() {
        let g = Graph::cycle(4);
        let p = lazy_metropolis(&g);
        let v = vec![0.2, 0.3, 0.5];
        let x = BlockVec::from_blocks(&[v.clone(), v.clone(), v.clone(), v.clone()]);
        for phi in [MirrorMap::NegativeEntropy, MirrorMap::SquaredEuclidean] {
            let y = mirror_average(&x, &p, phi, &[0, 1, 2, 3]).unwrap();
            for yi in &y {
                for (a, b) in yi.iter().zip(&v) {
                    assert_close(*a, *b, 1e-14);
                }
            }
        }
    }

    #[test]
    fn mirror_average_identity_mixing() {
        let p = MixingMatrix::identity(2);
        let x = BlockVec::from_blocks(&[vec![0.9, 0.1], vec![0.4, 0.6]]);
        for phi in [MirrorMap::NegativeEntropy, MirrorMap::SquaredEuclidean] {
            let y = mirror_average(&x, &p, phi, &[0, 1]).unwrap();
            for (yi, xi) in y.iter().zip(x.blocks()) {
                for (a, b) in yi.iter().zip(xi) {
                    assert_close(*a, *b, 1e-14);
                }
            }
        }
    }

    #[test]
    fn mirror_average_entropy_geometric_mean() {
        let p = MixingMatrix::from_dense(2, vec![0.5, 0.5, 0.5, 0.5]);
        let x = BlockVec::from_blocks(&[vec![0.5, 0.5], vec![0.8, 0.2]]);
        let y = mirror_average(&x, &p, MirrorMap::NegativeEntropy, &[0]).unwrap();
        // (sqrt(0.4), sqrt(0.1)) normalized
        assert_close(y[0][0], 2.0 / 3.0, 1e-4);
        assert_close(y[0][1], 1.0 / 3.0, 1e-4);
    }

    #[test]
    fn mirror_average_reports_offending_node() {
        let p = MixingMatrix::from_dense(2, vec![0.5, 0.5, 0.5, 0.5]);
        let x = BlockVec::from_blocks(&[vec![0.5, 0.5], vec![1.0, 0.0]]);
        let err = mirror_average(&x, &p, MirrorMap::NegativeEntropy, &[0]).unwrap_err();
        assert!(matches!(err, SolverError::Domain { node: 1, .. }), "{err}");
    }

    #[test]
    fn dual_update_hand_case() {
        let p = MixingMatrix::from_dense(2, vec![0.5, 0.5, 0.5, 0.5]);
        let x = BlockVec::from_blocks(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let mut state = SolverState {
            x,
            mu: BlockVec::zeros(2, 2),
            mu_prev: BlockVec::zeros(2, 2),
            t: 0,
        };
        dual_update(&mut state, &p, 0.1);
        assert_close(state.mu.block(0)[0], 0.05, 1e-15);
        assert_close(state.mu.block(0)[1], -0.05, 1e-15);
        assert_close(state.mu.block(1)[0], -0.05, 1e-15);
        assert_close(state.mu.block(1)[1], 0.05, 1e-15);
        assert_eq!(state.mu_prev.norm(), 0.0, "prior dual is preserved");
    }

    #[test]
    fn dual_update_fixed_at_consensus_and_preserves_total() {
        let g = Graph::erdos_renyi(6, 0.5, 2).unwrap();
        let p = lazy_metropolis(&g);
        let consensus = BlockVec::constant(6, 3, 1.0 / 3.0);
        let mut state = SolverState {
            x: consensus,
            mu: BlockVec::from_flat(6, 3, (0..18).map(|i| i as f64 / 7.0).collect()),
            mu_prev: BlockVec::zeros(6, 3),
            t: 0,
        };
        let before = state.mu.clone();
        dual_update(&mut state, &p, 0.3);
        assert!(state.mu.sub(&before).norm() <= 1e-14, "consensus leaves duals unchanged");

        // Non-consensus x: the per-coordinate total of mu is invariant
        // because columns of I - P sum to zero.
        let x = BlockVec::from_flat(6, 3, (0..18).map(|i| ((i * 13) % 7) as f64 / 7.0).collect());
        let mut state = SolverState { x, mu: before.clone(), mu_prev: BlockVec::zeros(6, 3), t: 0 };
        dual_update(&mut state, &p, 0.3);
        for k in 0..3 {
            let total_before: f64 = (0..6).map(|i| before.block(i)[k]).sum();
            let total_after: f64 = (0..6).map(|i| state.mu.block(i)[k]).sum();
            assert_close(total_before, total_after, 1e-12);
        }
    }

    #[test]
    fn inactive_nodes_keep_their_blocks() {
        let g = Graph::cycle(4);
        let p = lazy_metropolis(&g);
        let prob = LinearSimplexProblem::random(4, 3, 9);
        let params = default_params(0.5, 1.0, MirrorMap::NegativeEntropy, 3);
        let state = SolverState::initial(4, 3, &p, params.tau);
        let next =
            step_with_subset(&state, &prob, &p, MirrorMap::NegativeEntropy, &params, &[1, 3])
                .unwrap();
        assert_eq!(next.x.block(0), state.x.block(0));
        assert_eq!(next.x.block(2), state.x.block(2));
        assert_ne!(next.x.block(1), state.x.block(1));
        assert_eq!(next.t, 1);
        // mu_prev now holds the pre-update dual
        assert_eq!(next.mu_prev, state.mu);
    }

    #[test]
    fn iterates_stay_feasible() {
        let g = Graph::erdos_renyi(8, 0.4, 5).unwrap();
        let p = lazy_metropolis(&g);
        let prob = LinearSimplexProblem::random(8, 4, 17);
        for phi in [MirrorMap::NegativeEntropy, MirrorMap::SquaredEuclidean] {
            let mut params = default_params(0.5, 1.0, phi, 4);
            params.iterations = 200;
            params.seed = 3;
            run(&prob, &p, phi, &params, |ev| {
                for block in ev.after.x.blocks() {
                    let mass: f64 = block.iter().sum();
                    assert!((mass - 1.0).abs() <= 1e-12, "mass defect {}", (mass - 1.0).abs());
                    if phi == MirrorMap::NegativeEntropy {
                        assert!(block.iter().all(|&v| v > 0.0));
                    } else {
                        assert!(block.iter().all(|&v| v >= 0.0));
                    }
                }
            })
            .unwrap();
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let g = Graph::erdos_renyi(6, 0.5, 1).unwrap();
        let p = lazy_metropolis(&g);
        let prob = LinearSimplexProblem::random(6, 3, 2);
        let mut params = default_params(0.5, 1.0, MirrorMap::NegativeEntropy, 3);
        params.iterations = 40;
        params.seed = 77;
        let mut trace_a = Vec::new();
        let a = run(&prob, &p, MirrorMap::NegativeEntropy, &params, |ev| {
            trace_a.push((ev.selected.to_vec(), ev.after.x.clone()));
        })
        .unwrap();
        let mut trace_b = Vec::new();
        let b = run(&prob, &p, MirrorMap::NegativeEntropy, &params, |ev| {
            trace_b.push((ev.selected.to_vec(), ev.after.x.clone()));
        })
        .unwrap();
        assert_eq!(a, b);
        assert_eq!(trace_a, trace_b);
    }

    #[test]
    fn full_activation_matches_deterministic_mode() {
        let g = Graph::erdos_renyi(5, 0.6, 4).unwrap();
        let p = lazy_metropolis(&g);
        let prob = LinearSimplexProblem::random(5, 3, 6);
        let mut stoch = default_params(1.0, 1.0, MirrorMap::NegativeEntropy, 3);
        stoch.iterations = 30;
        let mut det = stoch;
        det.mode = Mode::Deterministic;
        let a = run(&prob, &p, MirrorMap::NegativeEntropy, &stoch, |_| {}).unwrap();
        let b = run(&prob, &p, MirrorMap::NegativeEntropy, &det, |_| {}).unwrap();
        assert_eq!(a, b, "omega = 1 stochastic equals deterministic");
    }

    #[test]
    fn run_refuses_invalid_stochastic_params() {
        let g = Graph::cycle(4);
        let p = lazy_metropolis(&g);
        let prob = LinearSimplexProblem::random(4, 3, 1);
        let mut params = default_params(0.5, 1.0, MirrorMap::NegativeEntropy, 3);
        params.tau *= 2.0;
        params.iterations = 1;
        let err = run(&prob, &p, MirrorMap::NegativeEntropy, &params, |_| {}).unwrap_err();
        assert!(matches!(err, SolverError::InvalidParams(_)));

        // The same parameters are accepted by the raw step so proof-side
        // tooling can probe out-of-range configurations.
        let state = SolverState::initial(4, 3, &p, params.tau);
        assert!(step_with_subset(
            &state,
            &prob,
            &p,
            MirrorMap::NegativeEntropy,
            &params,
            &[0, 2]
        )
        .is_ok());
    }

    #[test]
    fn zero_iterations_returns_initial_state() {
        let g = Graph::cycle(3);
        let p = lazy_metropolis(&g);
        let prob = LinearSimplexProblem::random(3, 2, 0);
        let params = default_params(0.5, 1.0, MirrorMap::NegativeEntropy, 2);
        let mut steps = 0;
        let state = run(&prob, &p, MirrorMap::NegativeEntropy, &params, |_| steps += 1).unwrap();
        assert_eq!(steps, 0);
        assert_eq!(state.t, 0);
        assert_eq!(state.x, BlockVec::constant(3, 2, 0.5));
        assert_eq!(state.mu.norm(), 0.0);
        assert_eq!(state.mu_prev.norm(), 0.0);
    }

    #[test]
    fn single_node_reduces_to_prox_iteration() {
        // m = 1: P = [1], Q = 0, so the dual never moves and each iteration
        // is one prox against the node's own previous iterate.
        let g = Graph::new(1, []).unwrap();
        let p = MixingMatrix::metropolis(&g);
        assert_eq!(p.get(0, 0), 1.0);
        let prob = LinearSimplexProblem::from_costs(vec![vec![0.7, -0.4, 0.1]]);

        // Euclidean mirror with small rho projects far past the vertex and
        // lands exactly on it in one step.
        let mut params = default_params(1.0, 0.01, MirrorMap::SquaredEuclidean, 3);
        params.mode = Mode::Deterministic;
        params.iterations = 1;
        let state = run(&prob, &p, MirrorMap::SquaredEuclidean, &params, |_| {}).unwrap();
        assert_eq!(state.x.block(0), &[0.0, 1.0, 0.0]);
        assert_eq!(state.mu.norm(), 0.0, "dual never moves when m = 1");

        // Entropy mirror approaches the same vertex geometrically.
        let mut params = default_params(1.0, 1.0, MirrorMap::NegativeEntropy, 3);
        params.mode = Mode::Deterministic;
        params.iterations = 200;
        let state = run(&prob, &p, MirrorMap::NegativeEntropy, &params, |_| {}).unwrap();
        assert!(state.x.block(0)[1] > 1.0 - 1e-9);
        assert_eq!(state.mu.norm(), 0.0);
    }

    #[test]
    fn initial_state_invariant() {
        // Arbitrary (non-consensus) start: mu_prev must satisfy
        // mu = mu_prev + tau * Qx.
        let g = Graph::path(3);
        let p = lazy_metropolis(&g);
        let x = BlockVec::from_blocks(&[vec![0.9, 0.1], vec![0.5, 0.5], vec![0.2, 0.8]]);
        let mu = BlockVec::from_blocks(&[vec![0.3, -0.3], vec![0.0, 0.0], vec![-0.1, 0.1]]);
        let tau = 0.25;
        let state = SolverState::from_parts(x.clone(), mu.clone(), &p, tau);
        let mut reconstructed = state.mu_prev.clone();
        reconstructed.axpy(tau, &p.disagreement(&x));
        assert!(reconstructed.sub(&mu).norm() <= 1e-15);
    }
}
