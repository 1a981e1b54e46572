//! Proof-side quantities and verification harnesses: Lagrangian gaps,
//! consensus residuals, the Lyapunov function, the per-iteration residual,
//! exact-expectation descent checks by subset enumeration, ergodic bounds,
//! and trace/summary output.
//!
//! Trace semantics: record t describes the state entering iteration t, so a
//! T-iteration run yields rows t = 0..T−1 and the ergodic column at row t
//! covers iterates 0..t (the horizon-(t+1) average).

use crate::blocks::BlockVec;
use crate::mirror::MirrorMap;
use crate::mixing::MixingMatrix;
use crate::problems::{Certificate, ConsensusProblem};
use crate::solver::{self, Mode, SolverError, SolverParams, SolverState, StepEvent};
use serde::Serialize;
use std::io::{self, Write};
use std::time::Instant;
use thiserror::Error;

/// How far a block may leave the simplex before the δ_X term is +∞.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Largest subset count [`exact_expectation_check`] will enumerate.
pub const SUBSET_ENUMERATION_CAP: u128 = 10_000;

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("iterate infeasible at node {node} (violation {violation:.3e})")]
    Infeasible { node: usize, violation: f64 },
    #[error("subset enumeration too large: C({m}, {s}) = {count} exceeds {cap}")]
    TooManySubsets { m: usize, s: usize, count: u128, cap: u128 },
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Value of the generalized Lagrangian, +∞ when some block leaves X.
#[derive(Debug, Clone, Copy)]
pub struct Lagrangian {
    pub value: f64,
    pub infeasible_node: Option<usize>,
}

/// L(x, μ) = Σ_i (f_i + δ_X)(x_i) + ⟨μ, ((I−P)⊗I_n)x⟩.
pub fn lagrangian<Pr: ConsensusProblem>(
    x: &BlockVec,
    mu: &BlockVec,
    p: &MixingMatrix,
    problem: &Pr,
) -> Lagrangian {
    for i in 0..x.node_count() {
        let violation = problem.constraint_violation(x.block(i));
        if violation > FEASIBILITY_TOL {
            return Lagrangian { value: f64::INFINITY, infeasible_node: Some(i) };
        }
    }
    let value = problem.objective(x) + mu.dot(&p.disagreement(x));
    Lagrangian { value, infeasible_node: None }
}

/// ‖((I−P)⊗I_n)x‖₂.
pub fn consensus_residual(x: &BlockVec, p: &MixingMatrix) -> f64 {
    p.disagreement(x).norm()
}

/// Running duality gap L(x, μ*) − L(x*, μ*); nonnegative for exact
/// certificates and feasible x.
pub fn duality_gap<Pr: ConsensusProblem>(
    x: &BlockVec,
    p: &MixingMatrix,
    problem: &Pr,
    cert: &Certificate,
) -> f64 {
    let l_x = lagrangian(x, &cert.mu_star, p, problem).value;
    let l_star = lagrangian(&cert.x_star, &cert.mu_star, p, problem).value;
    l_x - l_star
}

fn feasible_lagrangian<Pr: ConsensusProblem>(
    x: &BlockVec,
    mu: &BlockVec,
    p: &MixingMatrix,
    problem: &Pr,
) -> Result<f64, DiagnosticsError> {
    let l = lagrangian(x, mu, p, problem);
    match l.infeasible_node {
        Some(node) => Err(DiagnosticsError::Infeasible {
            node,
            violation: problem.constraint_violation(x.block(node)),
        }),
        None => Ok(l.value),
    }
}

/// V(t) = H(x^t, μ^t) + (ω/2τ)‖μ* − μ^{t−1}‖₂² + ρ Σ_i B_φ(x*_i, x^t_i),
/// with H(x, μ) = L(x, μ) − L(x*, μ*) − τ‖((I−P)⊗I_n)x‖₂².
pub fn lyapunov<Pr: ConsensusProblem>(
    state: &SolverState,
    problem: &Pr,
    cert: &Certificate,
    params: &SolverParams,
    p: &MixingMatrix,
    phi: MirrorMap,
) -> Result<f64, DiagnosticsError> {
    let l = feasible_lagrangian(&state.x, &state.mu, p, problem)?;
    let l_star = feasible_lagrangian(&cert.x_star, &cert.mu_star, p, problem)?;
    let qx = consensus_residual(&state.x, p);
    let h = l - l_star - params.tau * qx * qx;
    let dual_dist = cert.mu_star.sub(&state.mu_prev).norm();
    let dual_term = params.omega / (2.0 * params.tau) * dual_dist * dual_dist;
    let bregman_term = params.rho
        * phi
            .bregman_blocks(&cert.x_star, &state.x)
            .map_err(|e| DiagnosticsError::Solver(SolverError::Domain { node: 0, source: e }))?;
    Ok(h + dual_term + bregman_term)
}

/// R(t+1) = ω(L(x^t, μ*) − L(x*, μ*)) + ρ Σ_{i∈S} B_φ(x_i^{t+1}, y_i^t)
///        + (γρ/2)‖((I−P)⊗I_n)x^t‖₂²,
/// with y^t recomputed from the pre-step state for the selected nodes.
#[allow(clippy::too_many_arguments)] // the arguments are the formula's inputs
pub fn residual_r<Pr: ConsensusProblem>(
    before: &SolverState,
    after: &SolverState,
    selected: &[usize],
    problem: &Pr,
    cert: &Certificate,
    params: &SolverParams,
    p: &MixingMatrix,
    phi: MirrorMap,
) -> Result<f64, DiagnosticsError> {
    let l_before = feasible_lagrangian(&before.x, &cert.mu_star, p, problem)?;
    let l_star = feasible_lagrangian(&cert.x_star, &cert.mu_star, p, problem)?;
    let y = solver::mirror_average(&before.x, p, phi, selected)?;
    let mut prox_term = 0.0;
    for (pos, &i) in selected.iter().enumerate() {
        prox_term += phi
            .bregman(after.x.block(i), &y[pos])
            .map_err(|e| DiagnosticsError::Solver(SolverError::Domain { node: i, source: e }))?;
    }
    let qx = consensus_residual(&before.x, p);
    Ok(params.omega * (l_before - l_star)
        + params.rho * prox_term
        + params.gamma * params.rho / 2.0 * qx * qx)
}

/// Exact binomial coefficient, saturating at u128::MAX.
fn binomial(m: usize, s: usize) -> u128 {
    let s = s.min(m - s);
    let mut result: u128 = 1;
    for i in 0..s {
        result = result.saturating_mul((m - i) as u128) / (i as u128 + 1);
    }
    result
}

fn next_combination(idx: &mut [usize], m: usize) -> bool {
    let s = idx.len();
    let mut i = s;
    while i > 0 {
        i -= 1;
        if idx[i] < m - s + i {
            idx[i] += 1;
            for j in i + 1..s {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// One-step expectation check at a single state: enumerate every subset of
/// size round(ω·m), average R(t+1) and V(t+1), and compare against the
/// descent inequality E_S[R(t+1)] ≤ V(t) − E_S[V(t+1)].
#[derive(Debug, Clone, Copy)]
pub struct ExpectationReport {
    pub expected_r: f64,
    pub v_now: f64,
    pub expected_v_next: f64,
    /// E[R] − (V(t) − E[V(t+1)]); the inequality demands slack ≤ tolerance.
    pub slack: f64,
    pub holds: bool,
    pub subsets: usize,
}

pub fn exact_expectation_check<Pr: ConsensusProblem>(
    state: &SolverState,
    problem: &Pr,
    p: &MixingMatrix,
    phi: MirrorMap,
    params: &SolverParams,
    cert: &Certificate,
) -> Result<ExpectationReport, DiagnosticsError> {
    let m = problem.node_count();
    let s = (params.omega * m as f64).round() as usize;
    if s == 0 {
        return Err(SolverError::EmptySample { m, omega: params.omega }.into());
    }
    let count = binomial(m, s);
    if count > SUBSET_ENUMERATION_CAP {
        return Err(DiagnosticsError::TooManySubsets {
            m,
            s,
            count,
            cap: SUBSET_ENUMERATION_CAP,
        });
    }
    let v_now = lyapunov(state, problem, cert, params, p, phi)?;
    let mut sum_r = 0.0;
    let mut sum_v_next = 0.0;
    let mut visited = 0usize;
    let mut subset: Vec<usize> = (0..s).collect();
    loop {
        let next = solver::step_with_subset(state, problem, p, phi, params, &subset)?;
        sum_r += residual_r(state, &next, &subset, problem, cert, params, p, phi)?;
        sum_v_next += lyapunov(&next, problem, cert, params, p, phi)?;
        visited += 1;
        if !next_combination(&mut subset, m) {
            break;
        }
    }
    let expected_r = sum_r / visited as f64;
    let expected_v_next = sum_v_next / visited as f64;
    let slack = expected_r - (v_now - expected_v_next);
    Ok(ExpectationReport {
        expected_r,
        v_now,
        expected_v_next,
        slack,
        holds: slack <= cert.tolerance(),
        subsets: visited,
    })
}

/// Coefficient of the Lyapunov lower bound:
/// V(t) ≥ ((1−ω)ωασρ + γρ)/((2−ω)ωασ) · Σ_i B_φ(x*_i, x^t_i).
pub fn lower_bound_coefficient(params: &SolverParams, phi: MirrorMap, n: usize) -> f64 {
    let alpha_sigma = phi.alpha() * crate::mixing::sigma(phi.norm_exponent(), n);
    let omega = params.omega;
    ((1.0 - omega) * omega * alpha_sigma * params.rho + params.gamma * params.rho)
        / ((2.0 - omega) * omega * alpha_sigma)
}

/// Worst slacks of the one-step descent inequality and the Lyapunov lower
/// bound over every state visited by a seeded stochastic run.
#[derive(Debug, Clone, Copy)]
pub struct DescentReport {
    pub steps: usize,
    pub worst_descent_slack: f64,
    pub worst_lower_bound_slack: f64,
    pub tolerance: f64,
}

impl DescentReport {
    pub fn descent_holds(&self) -> bool {
        self.worst_descent_slack <= self.tolerance
    }

    pub fn lower_bound_holds(&self) -> bool {
        self.worst_lower_bound_slack <= self.tolerance
    }

    pub fn all_hold(&self) -> bool {
        self.descent_holds() && self.lower_bound_holds()
    }
}

/// Runs params.iterations steps of the stochastic iteration and, at every
/// visited state, enumerates subsets for the one-step expectation check and
/// evaluates the Lyapunov lower bound. Slacks are signed violations
/// (positive = inequality broken by that much).
pub fn verify_descent_along_run<Pr: ConsensusProblem>(
    problem: &Pr,
    p: &MixingMatrix,
    phi: MirrorMap,
    params: &SolverParams,
    cert: &Certificate,
) -> Result<DescentReport, DiagnosticsError> {
    use rand::SeedableRng;
    let m = problem.node_count();
    let n = problem.dimension();
    let coeff = lower_bound_coefficient(params, phi, n);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(params.seed);
    let mut state = SolverState::initial(m, n, p, params.tau);
    let mut worst_descent = f64::NEG_INFINITY;
    let mut worst_lower_bound = f64::NEG_INFINITY;
    for _ in 0..params.iterations {
        let report = exact_expectation_check(&state, problem, p, phi, params, cert)?;
        worst_descent = worst_descent.max(report.slack);
        let bregman = phi
            .bregman_blocks(&cert.x_star, &state.x)
            .map_err(|e| DiagnosticsError::Solver(SolverError::Domain { node: 0, source: e }))?;
        worst_lower_bound = worst_lower_bound.max(coeff * bregman - report.v_now);
        let subset = solver::sample_nodes(m, params.omega, &mut rng)?;
        state = solver::step_with_subset(&state, problem, p, phi, params, &subset)?;
    }
    Ok(DescentReport {
        steps: params.iterations,
        worst_descent_slack: worst_descent,
        worst_lower_bound_slack: worst_lower_bound,
        tolerance: cert.tolerance(),
    })
}

/// Blockwise mean of the first `t` states: x̄^t = (1/t) Σ_{s<t} x^s.
pub fn ergodic_average(states: &[BlockVec], t: usize) -> BlockVec {
    assert!(t >= 1 && t <= states.len(), "need 1 <= t <= number of recorded states");
    let mut sum = states[0].clone();
    for x in &states[1..t] {
        sum.axpy(1.0, x);
    }
    sum.scale(1.0 / t as f64);
    sum
}

/// Monte Carlo test of the ergodic O(1/T) bounds: seed-averaged duality gap
/// of x̄^T against V(0)/(ωT) and ½‖Qx̄^T‖² against V(0)/(γρT).
#[derive(Debug, Clone, Copy)]
pub struct ErgodicReport {
    pub trials: usize,
    pub horizon: usize,
    pub v0: f64,
    pub mean_duality_gap: f64,
    pub se_duality_gap: f64,
    pub duality_gap_bound: f64,
    pub mean_consensus: f64,
    pub se_consensus: f64,
    pub consensus_bound: f64,
}

impl ErgodicReport {
    pub fn duality_gap_holds(&self) -> bool {
        self.mean_duality_gap <= self.duality_gap_bound + 2.0 * self.se_duality_gap
    }

    pub fn consensus_holds(&self) -> bool {
        self.mean_consensus <= self.consensus_bound + 2.0 * self.se_consensus
    }

    pub fn all_hold(&self) -> bool {
        self.duality_gap_holds() && self.consensus_holds()
    }
}

fn mean_and_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn ergodic_monte_carlo<Pr: ConsensusProblem>(
    problem: &Pr,
    p: &MixingMatrix,
    phi: MirrorMap,
    base: &SolverParams,
    cert: &Certificate,
    trials: usize,
) -> Result<ErgodicReport, DiagnosticsError> {
    assert!(base.iterations >= 1, "ergodic bounds need a positive horizon");
    assert!(trials >= 2, "need at least two trials for a standard error");
    let m = problem.node_count();
    let n = problem.dimension();
    let horizon = base.iterations;
    let v0 = lyapunov(
        &SolverState::initial(m, n, p, base.tau),
        problem,
        cert,
        base,
        p,
        phi,
    )?;
    let l_star = feasible_lagrangian(&cert.x_star, &cert.mu_star, p, problem)?;
    let mut gaps = Vec::with_capacity(trials);
    let mut consensus = Vec::with_capacity(trials);
    for k in 0..trials {
        let mut params = *base;
        params.seed = base.seed.wrapping_add(k as u64);
        let mut sum: Option<BlockVec> = None;
        solver::run(problem, p, phi, &params, |ev| match &mut sum {
            Some(acc) => acc.axpy(1.0, &ev.before.x),
            None => sum = Some(ev.before.x.clone()),
        })?;
        let mut bar = sum.expect("at least one iteration");
        bar.scale(1.0 / horizon as f64);
        let l_bar = feasible_lagrangian(&bar, &cert.mu_star, p, problem)?;
        gaps.push(l_bar - l_star);
        let q = consensus_residual(&bar, p);
        consensus.push(0.5 * q * q);
    }
    let (mean_gap, se_gap) = mean_and_se(&gaps);
    let (mean_cons, se_cons) = mean_and_se(&consensus);
    Ok(ErgodicReport {
        trials,
        horizon,
        v0,
        mean_duality_gap: mean_gap,
        se_duality_gap: se_gap,
        duality_gap_bound: v0 / (base.omega * horizon as f64),
        mean_consensus: mean_cons,
        se_consensus: se_cons,
        consensus_bound: v0 / (base.gamma * base.rho * horizon as f64),
    })
}

/// One row of the convergence trace; optional columns require a certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub t: usize,
    pub objective: f64,
    pub primal_gap: f64,
    pub consensus_residual: f64,
    pub duality_gap: Option<f64>,
    pub lyapunov: Option<f64>,
    pub ergodic_gap: Option<f64>,
    pub elapsed_ms: f64,
}

/// CSV column order is a compatibility contract; optional columns print as
/// empty fields.
pub const TRACE_CSV_HEADER: &str =
    "t,objective,primal_gap,consensus_residual,duality_gap,lyapunov,ergodic_gap,elapsed_ms";

pub fn write_trace_csv<W: Write>(w: &mut W, records: &[TraceRecord]) -> io::Result<()> {
    writeln!(w, "{TRACE_CSV_HEADER}")?;
    let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.t,
            r.objective,
            r.primal_gap,
            r.consensus_residual,
            opt(r.duality_gap),
            opt(r.lyapunov),
            opt(r.ergodic_gap),
            r.elapsed_ms
        )?;
    }
    Ok(())
}

pub fn trace_to_csv(records: &[TraceRecord]) -> String {
    let mut buf = Vec::new();
    write_trace_csv(&mut buf, records).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("trace CSV is UTF-8")
}

/// Columnwise mean across equally long traces (same t grid). Optional
/// columns survive only if present in every trace.
pub fn average_traces(traces: &[Vec<TraceRecord>]) -> Vec<TraceRecord> {
    assert!(!traces.is_empty(), "need at least one trace");
    let len = traces[0].len();
    assert!(traces.iter().all(|tr| tr.len() == len), "traces must share a length");
    let k = traces.len() as f64;
    (0..len)
        .map(|row| {
            let rows: Vec<&TraceRecord> = traces.iter().map(|tr| &tr[row]).collect();
            let avg_opt = |get: fn(&TraceRecord) -> Option<f64>| -> Option<f64> {
                rows.iter()
                    .map(|r| get(r))
                    .collect::<Option<Vec<f64>>>()
                    .map(|vals| vals.iter().sum::<f64>() / k)
            };
            TraceRecord {
                t: rows[0].t,
                objective: rows.iter().map(|r| r.objective).sum::<f64>() / k,
                primal_gap: rows.iter().map(|r| r.primal_gap).sum::<f64>() / k,
                consensus_residual: rows.iter().map(|r| r.consensus_residual).sum::<f64>() / k,
                duality_gap: avg_opt(|r| r.duality_gap),
                lyapunov: avg_opt(|r| r.lyapunov),
                ergodic_gap: avg_opt(|r| r.ergodic_gap),
                elapsed_ms: rows.iter().map(|r| r.elapsed_ms).sum::<f64>() / k,
            }
        })
        .collect()
}

/// Observer that turns run events into trace records. Row t is the state
/// entering iteration t; the ergodic column tracks the running mean of
/// recorded states, so the final row carries the horizon-T quantities of
/// the O(1/T) bounds.
pub struct TraceCollector<'a, Pr: ConsensusProblem> {
    problem: &'a Pr,
    p: &'a MixingMatrix,
    phi: MirrorMap,
    params: SolverParams,
    cert: Option<&'a Certificate>,
    f_star: f64,
    records: Vec<TraceRecord>,
    ergodic_sum: Option<BlockVec>,
    started: Instant,
}

impl<'a, Pr: ConsensusProblem> TraceCollector<'a, Pr> {
    /// `f_star` anchors the primal-gap column; pass the certificate's value
    /// when one exists.
    pub fn new(
        problem: &'a Pr,
        p: &'a MixingMatrix,
        phi: MirrorMap,
        params: &SolverParams,
        f_star: f64,
        cert: Option<&'a Certificate>,
    ) -> Self {
        TraceCollector {
            problem,
            p,
            phi,
            params: *params,
            cert,
            f_star,
            records: Vec::with_capacity(params.iterations),
            ergodic_sum: None,
            started: Instant::now(),
        }
    }

    pub fn observe(&mut self, ev: &StepEvent<'_>) {
        let state = ev.before;
        match &mut self.ergodic_sum {
            Some(acc) => acc.axpy(1.0, &state.x),
            None => self.ergodic_sum = Some(state.x.clone()),
        }
        let objective = self.problem.objective(&state.x);
        let mut duality = None;
        let mut v = None;
        let mut ergodic = None;
        if let Some(cert) = self.cert {
            duality = Some(duality_gap(&state.x, self.p, self.problem, cert));
            v = lyapunov(state, self.problem, cert, &self.params, self.p, self.phi).ok();
            let mut bar = self.ergodic_sum.as_ref().expect("just accumulated").clone();
            bar.scale(1.0 / (state.t + 1) as f64);
            ergodic = Some(duality_gap(&bar, self.p, self.problem, cert));
        }
        self.records.push(TraceRecord {
            t: state.t,
            objective,
            primal_gap: objective - self.f_star,
            consensus_residual: consensus_residual(&state.x, self.p),
            duality_gap: duality,
            lyapunov: v,
            ergodic_gap: ergodic,
            elapsed_ms: self.started.elapsed().as_secs_f64() * 1e3,
        });
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<TraceRecord> {
        self.records
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CertificateSummary {
    pub exactness: crate::problems::Exactness,
    pub kkt_residual: f64,
}

/// End-of-run summary serialized next to the traces.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub m: usize,
    pub n: usize,
    pub mirror: MirrorMap,
    pub mode: Mode,
    pub trials: usize,
    pub iterations: usize,
    pub rho: f64,
    pub tau: f64,
    pub gamma: f64,
    pub omega: f64,
    pub lambda2: f64,
    pub psd_margin: f64,
    pub f_star: f64,
    pub certificate: Option<CertificateSummary>,
    pub v0: Option<f64>,
    pub duality_gap_bound: Option<f64>,
    pub consensus_bound: Option<f64>,
    pub final_primal_gap: f64,
    pub final_consensus_residual: f64,
    pub final_duality_gap: Option<f64>,
    pub final_ergodic_gap: Option<f64>,
}
