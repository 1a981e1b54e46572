//! Linear objectives over the probability simplex: instances, optimality
//! certificates, and the closed-form local prox oracles.
//!
//! Node i minimizes f_i(x) = ⟨c_i, x⟩ over X = {u ≥ 0 : ‖u‖₁ = 1}. The
//! aggregate optimum sits at a vertex e_{k*}, k* = argmin_k Σ_i c_i[k],
//! which makes exact saddle points constructible in closed form.

use crate::blocks::BlockVec;
use crate::mirror::{
    simplex_euclidean_projection, simplex_normalize, MirrorError, MirrorMap,
    ENTROPY_DOMAIN_FLOOR,
};
use crate::mixing::MixingMatrix;
use crate::solver::{self, Mode, SolverError, SolverState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Residual target for [`approximate_certificate`] when none is given.
pub const DEFAULT_CERTIFICATE_TOL: f64 = 1e-9;
/// Iteration budget of the internal certificate run.
pub const CERTIFICATE_ITERATION_CAP: usize = 200_000;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error(transparent)]
    Mirror(#[from] MirrorError),
    #[error(
        "certificate run stalled at residual {achieved:.3e} after {iterations} iterations (target {tol:.1e})"
    )]
    CertificateConvergence { achieved: f64, iterations: usize, tol: f64 },
    #[error("certificate run failed: {0}")]
    Solver(Box<SolverError>),
    #[error("bad instance JSON: {0}")]
    Parse(String),
}

impl From<SolverError> for ProblemError {
    fn from(e: SolverError) -> Self {
        ProblemError::Solver(Box::new(e))
    }
}

/// A consensus objective the solver can iterate on: per-node convex costs
/// over a common constraint set, with an exact local prox oracle.
pub trait ConsensusProblem {
    fn node_count(&self) -> usize;
    fn dimension(&self) -> usize;
    fn node_objective(&self, i: usize, x_i: &[f64]) -> f64;

    fn objective(&self, x: &BlockVec) -> f64 {
        (0..self.node_count()).map(|i| self.node_objective(i, x.block(i))).sum()
    }

    /// How far x_i sits outside the constraint set (0 when feasible); the
    /// δ_X term of the Lagrangian is +∞ when this exceeds tolerance.
    fn constraint_violation(&self, x_i: &[f64]) -> f64;

    /// Exact minimizer of f_i(x) + ⟨x, dual_term⟩ + ρ B_φ(x, y_i) over X.
    fn local_prox(
        &self,
        phi: MirrorMap,
        i: usize,
        y_i: &[f64],
        dual_term: &[f64],
        rho: f64,
    ) -> Result<Vec<f64>, ProblemError>;
}

/// f_i(x) = ⟨c_i, x⟩ over the probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSimplexProblem {
    n: usize,
    costs: Vec<Vec<f64>>,
    seed: u64,
}

#[derive(Serialize, Deserialize)]
struct InstanceJson {
    m: usize,
    n: usize,
    seed: u64,
    c: Vec<Vec<f64>>,
}

impl LinearSimplexProblem {
    /// Every cost entry i.i.d. standard normal from a seeded generator.
    pub fn random(m: usize, n: usize, seed: u64) -> Self {
        assert!(m >= 1 && n >= 1, "instance needs m >= 1 and n >= 1");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let costs = (0..m)
            .map(|_| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        LinearSimplexProblem { n, costs, seed }
    }

    /// Random instance shifted so every node's cost is minimized at the same
    /// index (by `margin` strictly). Makes μ* = 0 an exact certificate.
    pub fn random_shared_argmin(m: usize, n: usize, seed: u64, margin: f64) -> Self {
        assert!(margin > 0.0, "margin must be positive");
        let mut prob = Self::random(m, n, seed);
        let k_star = prob.aggregate_argmin();
        for c in &mut prob.costs {
            let low = c.iter().copied().fold(f64::INFINITY, f64::min);
            c[k_star] = low - margin;
        }
        prob
    }

    pub fn from_costs(costs: Vec<Vec<f64>>) -> Self {
        assert!(!costs.is_empty(), "instance needs at least one node");
        let n = costs[0].len();
        assert!(n >= 1 && costs.iter().all(|c| c.len() == n), "cost rows must share a dimension");
        LinearSimplexProblem { n, costs, seed: 0 }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn cost(&self, i: usize) -> &[f64] {
        &self.costs[i]
    }

    /// argmin_k Σ_i c_i[k], ties broken by lowest index.
    pub fn aggregate_argmin(&self) -> usize {
        let mut best = 0;
        let mut best_val = f64::INFINITY;
        for k in 0..self.n {
            let total: f64 = self.costs.iter().map(|c| c[k]).sum();
            if total < best_val {
                best_val = total;
                best = k;
            }
        }
        best
    }

    pub fn to_json(&self) -> String {
        let doc = InstanceJson {
            m: self.costs.len(),
            n: self.n,
            seed: self.seed,
            c: self.costs.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("instance serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ProblemError> {
        let doc: InstanceJson =
            serde_json::from_str(text).map_err(|e| ProblemError::Parse(e.to_string()))?;
        if doc.c.len() != doc.m || doc.c.iter().any(|row| row.len() != doc.n) {
            return Err(ProblemError::Parse(format!(
                "cost matrix shape does not match m={} n={}",
                doc.m, doc.n
            )));
        }
        if doc.m == 0 || doc.n == 0 {
            return Err(ProblemError::Parse("instance needs m >= 1 and n >= 1".into()));
        }
        Ok(LinearSimplexProblem { n: doc.n, costs: doc.c, seed: doc.seed })
    }
}

impl ConsensusProblem for LinearSimplexProblem {
    fn node_count(&self) -> usize {
        self.costs.len()
    }

    fn dimension(&self) -> usize {
        self.n
    }

    fn node_objective(&self, i: usize, x_i: &[f64]) -> f64 {
        self.costs[i].iter().zip(x_i).map(|(c, x)| c * x).sum()
    }

    fn constraint_violation(&self, x_i: &[f64]) -> f64 {
        let mass_defect = (x_i.iter().sum::<f64>() - 1.0).abs();
        let negativity = x_i.iter().fold(0.0f64, |acc, &v| acc.max(-v));
        mass_defect.max(negativity)
    }

    fn local_prox(
        &self,
        phi: MirrorMap,
        i: usize,
        y_i: &[f64],
        dual_term: &[f64],
        rho: f64,
    ) -> Result<Vec<f64>, ProblemError> {
        match phi {
            MirrorMap::NegativeEntropy => {
                Ok(local_prox_entropy_linear(&self.costs[i], y_i, dual_term, rho)?)
            }
            MirrorMap::SquaredEuclidean => {
                Ok(local_prox_euclid_linear(&self.costs[i], y_i, dual_term, rho))
            }
        }
    }
}

/// Exact minimizer of ⟨c, x⟩ + ⟨x, d⟩ + ρ B_entropy(x, y) over the simplex:
/// normalize(y ⊙ exp((−c − d)/ρ)). The max exponent is subtracted before
/// exponentiation; normalization makes the shift invisible.
pub fn local_prox_entropy_linear(
    c: &[f64],
    y: &[f64],
    dual_term: &[f64],
    rho: f64,
) -> Result<Vec<f64>, MirrorError> {
    assert!(rho > 0.0, "rho must be positive");
    let mut exponent = Vec::with_capacity(y.len());
    for (k, &yk) in y.iter().enumerate() {
        if !(yk > 0.0) {
            return Err(MirrorError::Domain { index: k, value: yk });
        }
        exponent.push(yk.ln() + (-c[k] - dual_term[k]) / rho);
    }
    let peak = exponent.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = exponent.iter().map(|&t| (t - peak).exp()).collect();
    let mut x = simplex_normalize(&weights)?;
    for v in &mut x {
        *v = v.max(ENTROPY_DOMAIN_FLOOR);
    }
    Ok(x)
}

/// Exact minimizer of ⟨c, x⟩ + ⟨x, d⟩ + (ρ/2)‖x − y‖₂² over the simplex:
/// project y − (c + d)/ρ.
pub fn local_prox_euclid_linear(c: &[f64], y: &[f64], dual_term: &[f64], rho: f64) -> Vec<f64> {
    assert!(rho > 0.0, "rho must be positive");
    let shifted: Vec<f64> =
        y.iter().zip(c.iter().zip(dual_term)).map(|(yk, (ck, dk))| yk - (ck + dk) / rho).collect();
    simplex_euclidean_projection(&shifted)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Exactness {
    #[serde(rename = "exact")]
    Exact,
    #[serde(rename = "approximate")]
    Approximate,
}

/// A saddle-point certificate: consensus optimizer x*, dual μ*, and the
/// optimal value. `kkt_residual` is 0 for exact certificates and the
/// measured terminal residual for approximate ones.
#[derive(Debug, Clone)]
pub struct Certificate {
    pub x_star: BlockVec,
    pub mu_star: BlockVec,
    pub exactness: Exactness,
    pub f_star: f64,
    pub kkt_residual: f64,
}

impl Certificate {
    /// Slack allowed in proof-side inequalities checked against this
    /// certificate: 1e-9 exactly, widened for approximate saddle points.
    pub fn tolerance(&self) -> f64 {
        (10.0 * self.kkt_residual).max(1e-9)
    }
}

/// Violation of the dual KKT inclusion −μ_i + Σ_j P[i][j] μ_j ∈ ∂(f_i+δ_X)
/// at the vertex e_{k_star}: max over nodes and coordinates of how far the
/// subgradient leaves the normal cone. Zero means the inclusion holds.
pub fn kkt_dual_violation(
    prob: &LinearSimplexProblem,
    p: &MixingMatrix,
    k_star: usize,
    mu: &BlockVec,
) -> f64 {
    let d = p.disagreement(mu); // block i is μ_i − Σ_j P[i][j] μ_j
    let mut worst = 0.0f64;
    for i in 0..prob.node_count() {
        let c = prob.cost(i);
        let di = d.block(i);
        // need (−d_i − c_i)[j] ≤ (−d_i − c_i)[k*] for every j
        let at_star = -di[k_star] - c[k_star];
        for j in 0..prob.dimension() {
            worst = worst.max((-di[j] - c[j]) - at_star);
        }
    }
    worst
}

/// Tries the μ* = 0 certificate: valid exactly when the aggregate argmin is
/// also the argmin of every individual cost vector.
pub fn exact_certificate(prob: &LinearSimplexProblem) -> Option<Certificate> {
    let m = prob.node_count();
    let n = prob.dimension();
    let k_star = prob.aggregate_argmin();
    let all_agree = (0..m).all(|i| {
        let c = prob.cost(i);
        c.iter().all(|&v| c[k_star] <= v)
    });
    if !all_agree {
        return None;
    }
    let mut x_star = BlockVec::zeros(m, n);
    for i in 0..m {
        x_star.block_mut(i)[k_star] = 1.0;
    }
    let f_star = (0..m).map(|i| prob.cost(i)[k_star]).sum();
    Some(Certificate {
        x_star,
        mu_star: BlockVec::zeros(m, n),
        exactness: Exactness::Exact,
        f_star,
        kkt_residual: 0.0,
    })
}

/// Polishing continues past the primal stop rule only while the dual KKT
/// violation falls by at least this much per [`POLISH_WINDOW`] iterations.
const POLISH_MIN_GAIN: f64 = 1e-12;
const POLISH_WINDOW: usize = 1000;

/// Produces μ* by running the deterministic iteration (all nodes active,
/// entropy mirror, saturated parameters) until consensus residual and
/// primal gap fall below `tol`, then keeps polishing while the dual KKT
/// violation still improves. The simplex floors can pin the primal to (near)
/// exact consensus, freezing or near-freezing the duals; once the violation
/// stops improving (or the primal disagreement is exactly zero, which stops
/// the dual update outright), the loop exits with whatever violation
/// remains, recorded honestly in `kkt_residual` (which widens
/// [`Certificate::tolerance`]).
pub fn approximate_certificate(
    prob: &LinearSimplexProblem,
    p: &MixingMatrix,
    tol: f64,
) -> Result<Certificate, ProblemError> {
    assert!(tol > 0.0, "tolerance must be positive");
    let m = prob.node_count();
    let n = prob.dimension();
    let k_star = prob.aggregate_argmin();
    let f_star: f64 = (0..m).map(|i| prob.cost(i)[k_star]).sum();

    let phi = MirrorMap::NegativeEntropy;
    let mut params = solver::default_params(1.0, 1.0, phi, n);
    params.mode = Mode::Deterministic;
    let all: Vec<usize> = (0..m).collect();
    let mut state = SolverState::initial(m, n, p, params.tau);

    let mut residual = f64::INFINITY;
    // (iteration, kkt) at the last polish checkpoint; None until the primal
    // stop rule first fires
    let mut checkpoint: Option<(usize, f64)> = None;
    for it in 0..CERTIFICATE_ITERATION_CAP {
        state = solver::step_with_subset(&state, prob, p, phi, &params, &all)?;
        let consensus = p.disagreement(&state.x).norm();
        let gap = (prob.objective(&state.x) - f_star).abs();
        let kkt = kkt_dual_violation(prob, p, k_star, &state.mu);
        residual = consensus.max(gap);
        if residual > tol {
            checkpoint = None;
            continue;
        }
        let stalled = match checkpoint {
            None => {
                checkpoint = Some((it, kkt));
                false
            }
            Some((at, then)) if it - at >= POLISH_WINDOW => {
                checkpoint = Some((it, kkt));
                kkt > then - POLISH_MIN_GAIN
            }
            Some(_) => false,
        };
        let done = kkt <= tol
            || consensus == 0.0
            || stalled
            || it + 1 == CERTIFICATE_ITERATION_CAP;
        if done {
            let mut x_star = BlockVec::zeros(m, n);
            for i in 0..m {
                x_star.block_mut(i)[k_star] = 1.0;
            }
            return Ok(Certificate {
                x_star,
                mu_star: state.mu,
                exactness: Exactness::Approximate,
                f_star,
                kkt_residual: kkt.max(residual),
            });
        }
    }
    Err(ProblemError::CertificateConvergence {
        achieved: residual,
        iterations: CERTIFICATE_ITERATION_CAP,
        tol,
    })
}

/// Best certificate available: exact μ* = 0 when the costs allow it, else
/// the converged approximate saddle point.
pub fn solve_exact(
    prob: &LinearSimplexProblem,
    p: &MixingMatrix,
) -> Result<Certificate, ProblemError> {
    match exact_certificate(prob) {
        Some(cert) => Ok(cert),
        None => approximate_certificate(prob, p, DEFAULT_CERTIFICATE_TOL),
    }
}
