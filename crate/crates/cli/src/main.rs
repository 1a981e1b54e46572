//! Experiment driver for the consensus solver: seeded trace runs, spectral
//! inspection of the mixing matrix, and a verification harness for the
//! expected-descent and ergodic-rate properties.
//!
//! Exit codes: 0 success, 1 failed verification check, 2 bad config or
//! rejected parameters, 3 generation failure (graph sampling, certificate).
//! Log verbosity via RUST_LOG (default `warn`).

mod config;

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use bpdmm::diagnostics::{
    self, average_traces, consensus_residual, duality_gap, write_trace_csv, CertificateSummary,
    DiagnosticsError, RunSummary, TraceCollector, TraceRecord,
};
use bpdmm::mixing::MixingMatrix;
use bpdmm::problems::{solve_exact, Certificate, ConsensusProblem, Exactness};
use bpdmm::solver::{self, check_params, Mode, SolverState};

use config::{Config, Setup};

/// Command failure with its exit code: verification 1, config 2, generation 3.
#[derive(Debug)]
pub enum Failure {
    Check(String),
    Config(String),
    Generation(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Check(_) => 1,
            Failure::Config(_) => 2,
            Failure::Generation(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Check(msg) => write!(f, "verification failed: {msg}"),
            Failure::Config(msg) => write!(f, "config error: {msg}"),
            Failure::Generation(msg) => write!(f, "generation error: {msg}"),
        }
    }
}

fn diag_failure(e: DiagnosticsError) -> Failure {
    match e {
        DiagnosticsError::TooManySubsets { .. } => Failure::Config(e.to_string()),
        other => Failure::Generation(other.to_string()),
    }
}

#[derive(Parser)]
#[command(name = "bpdmm", version, about = "Consensus optimization experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run seeded trials; write per-trial traces, a mean trace, and summary.json.
    Run {
        /// Flat key=value config file (see README for the key list).
        config: PathBuf,
    },
    /// Check descent and bound properties; defaults to a built-in small instance.
    ///
    /// Checks run with stochastic omega-subset activation regardless of the
    /// configured mode, since they quantify the stochastic theory.
    Verify {
        /// Optional config; omitted keys fall back to the built-in instance.
        config: Option<PathBuf>,
    },
    /// Print the spectrum and structural checks of the mixing matrix.
    Spectrum {
        /// Config with graph keys (m/p_edge/graph_seed or edge_list).
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config } => cmd_run(&config),
        Command::Verify { config } => cmd_verify(config.as_deref()),
        Command::Spectrum { config } => cmd_spectrum(&config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            ExitCode::from(failure.exit_code())
        }
    }
}

/// Lazy Metropolis weights for the graph, refused if any structural check
/// fails (doubly stochastic, support, spectral gap, PSD).
fn build_mixing(setup: &Setup) -> Result<MixingMatrix, Failure> {
    let p = MixingMatrix::metropolis(&setup.graph).lazy();
    let report = p.validate(&setup.graph);
    if !report.all_passed() {
        return Err(Failure::Generation(format!("mixing matrix failed validation:\n{report}")));
    }
    Ok(p)
}

/// Stochastic mode must satisfy the step-size conditions; deterministic mode
/// only needs positive steps.
fn admit_params(setup: &Setup) -> Result<(), Failure> {
    match setup.params.mode {
        Mode::Stochastic => {
            let check = check_params(&setup.params, setup.mirror, setup.problem.dimension());
            if !check.ok {
                return Err(Failure::Config(format!(
                    "parameters rejected: {}",
                    check.violations.join("; ")
                )));
            }
        }
        Mode::Deterministic => {
            if !(setup.params.tau > 0.0 && setup.params.gamma > 0.0) {
                return Err(Failure::Config(format!(
                    "tau = {} and gamma = {} must be positive",
                    setup.params.tau, setup.params.gamma
                )));
            }
        }
    }
    Ok(())
}

fn certificate(setup: &Setup, p: &MixingMatrix) -> Result<Certificate, Failure> {
    let cert = solve_exact(&setup.problem, p)
        .map_err(|e| Failure::Generation(format!("certificate: {e}")))?;
    log::info!(
        "certificate: {} (f* = {}, kkt residual {})",
        match cert.exactness {
            Exactness::Exact => "exact",
            Exactness::Approximate => "approximate",
        },
        cert.f_star,
        cert.kkt_residual
    );
    Ok(cert)
}

fn write_csv(path: &Path, records: &[TraceRecord]) -> Result<(), Failure> {
    let file = fs::File::create(path)
        .map_err(|e| Failure::Generation(format!("cannot create {}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    write_trace_csv(&mut w, records)
        .and_then(|()| w.flush())
        .map_err(|e| Failure::Generation(format!("cannot write {}: {e}", path.display())))
}

fn cmd_run(cfg_path: &Path) -> Result<(), Failure> {
    let cfg = Config::load(cfg_path)?;
    let setup = config::run_setup(&cfg)?;
    let out = setup.output_dir.clone().expect("run_setup guarantees output_dir");
    let p = build_mixing(&setup)?;
    admit_params(&setup)?;
    let cert = certificate(&setup, &p)?;

    let (m, n) = (setup.problem.node_count(), setup.problem.dimension());
    let horizon = setup.params.iterations;
    fs::create_dir_all(&out)
        .map_err(|e| Failure::Generation(format!("cannot create {}: {e}", out.display())))?;

    let mut traces: Vec<Vec<TraceRecord>> = Vec::with_capacity(setup.trials);
    let mut final_gap = 0.0;
    let mut final_consensus = 0.0;
    let mut final_duality = 0.0;
    for k in 0..setup.trials {
        let mut params = setup.params;
        params.seed = setup.params.seed.wrapping_add(k as u64);
        let mut collector =
            TraceCollector::new(&setup.problem, &p, setup.mirror, &params, cert.f_star, Some(&cert));
        let last = solver::run(&setup.problem, &p, setup.mirror, &params, |ev| {
            collector.observe(&ev)
        })
        .map_err(|e| Failure::Generation(format!("solver (seed {}): {e}", params.seed)))?;
        final_gap += setup.problem.objective(&last.x) - cert.f_star;
        final_consensus += consensus_residual(&last.x, &p);
        final_duality += duality_gap(&last.x, &p, &setup.problem, &cert);
        let records = collector.into_records();
        let path = out.join(format!("trace_seed{}.csv", params.seed));
        write_csv(&path, &records)?;
        log::info!("trial seed {}: wrote {}", params.seed, path.display());
        traces.push(records);
    }
    let trials = setup.trials as f64;
    let mean = average_traces(&traces);
    write_csv(&out.join("trace_mean.csv"), &mean)?;

    let v0 = diagnostics::lyapunov(
        &SolverState::initial(m, n, &p, setup.params.tau),
        &setup.problem,
        &cert,
        &setup.params,
        &p,
        setup.mirror,
    )
    .ok();
    let bound = |scale: f64| {
        v0.filter(|_| horizon > 0).map(|v| v / (scale * horizon as f64))
    };
    let summary = RunSummary {
        m,
        n,
        mirror: setup.mirror,
        mode: setup.params.mode,
        trials: setup.trials,
        iterations: horizon,
        rho: setup.params.rho,
        tau: setup.params.tau,
        gamma: setup.params.gamma,
        omega: setup.params.omega,
        lambda2: p.second_eigenvalue(),
        psd_margin: p.min_eigenvalue(),
        f_star: cert.f_star,
        certificate: Some(CertificateSummary {
            exactness: cert.exactness,
            kkt_residual: cert.kkt_residual,
        }),
        v0,
        duality_gap_bound: bound(setup.params.omega),
        consensus_bound: bound(setup.params.gamma * setup.params.rho),
        final_primal_gap: final_gap / trials,
        final_consensus_residual: final_consensus / trials,
        final_duality_gap: Some(final_duality / trials),
        final_ergodic_gap: mean.last().and_then(|r| r.ergodic_gap),
    };
    let json = serde_json::to_string_pretty(&summary)
        .expect("summary serialization cannot fail") + "\n";
    let summary_path = out.join("summary.json");
    fs::write(&summary_path, json)
        .map_err(|e| Failure::Generation(format!("cannot write {}: {e}", summary_path.display())))?;

    println!(
        "graph: {} nodes, {} edges; lambda2 = {}, psd margin = {}",
        m,
        setup.graph.edge_count(),
        summary.lambda2,
        summary.psd_margin
    );
    println!(
        "{} certificate: f* = {}",
        match cert.exactness {
            Exactness::Exact => "exact",
            Exactness::Approximate => "approximate",
        },
        cert.f_star
    );
    println!(
        "{} trial(s) of {} iterations: mean final primal gap {}, consensus residual {}",
        setup.trials, horizon, summary.final_primal_gap, summary.final_consensus_residual
    );
    println!("wrote {} trace file(s) and {}", setup.trials + 1, summary_path.display());
    Ok(())
}

/// One verification check: its printed name and outcome.
struct CheckLine {
    name: &'static str,
    passed: bool,
}

fn report_check(name: &'static str, passed: bool, detail: &str) -> CheckLine {
    println!("check {name}: {} ({detail})", if passed { "PASS" } else { "FAIL" });
    CheckLine { name, passed }
}

fn cmd_verify(cfg_path: Option<&Path>) -> Result<(), Failure> {
    let cfg = match cfg_path {
        Some(path) => Config::load(path)?,
        None => Config::empty(),
    };
    let setup = config::verify_setup(&cfg)?;
    let p = build_mixing(&setup)?;
    let cert = certificate(&setup, &p)?;
    let n = setup.problem.dimension();
    println!(
        "verifying on {} nodes, dimension {}, {} mirror, omega = {}, {} iterations",
        setup.problem.node_count(),
        n,
        setup.mirror,
        setup.params.omega,
        setup.params.iterations
    );

    let mut checks = Vec::new();
    let pc = check_params(&setup.params, setup.mirror, n);
    let identity = !setup.explicit_steps
        && setup.params.tau == pc.tau_bound
        && setup.params.gamma == 0.5 * setup.params.omega * pc.sigma;
    let params_ok = pc.ok && (setup.explicit_steps || identity);
    let detail = if pc.ok {
        format!(
            "gamma = {}, tau = {}, tau bound = {}{}",
            setup.params.gamma,
            setup.params.tau,
            pc.tau_bound,
            if identity { ", defaults saturate the bound" } else { "" }
        )
    } else {
        pc.violations.join("; ")
    };
    checks.push(report_check("parameter-conditions", params_ok, &detail));
    if !params_ok {
        for name in ["expected-descent", "lyapunov-lower-bound", "ergodic-bounds"] {
            println!("check {name}: SKIPPED (parameters rejected)");
        }
        return Err(Failure::Check("parameter-conditions".into()));
    }

    let descent =
        diagnostics::verify_descent_along_run(&setup.problem, &p, setup.mirror, &setup.params, &cert)
            .map_err(diag_failure)?;
    checks.push(report_check(
        "expected-descent",
        descent.descent_holds(),
        &format!(
            "worst slack {} over {} steps, tolerance {}",
            descent.worst_descent_slack, descent.steps, descent.tolerance
        ),
    ));
    checks.push(report_check(
        "lyapunov-lower-bound",
        descent.lower_bound_holds(),
        &format!("worst slack {}, tolerance {}", descent.worst_lower_bound_slack, descent.tolerance),
    ));

    let ergodic = diagnostics::ergodic_monte_carlo(
        &setup.problem,
        &p,
        setup.mirror,
        &setup.params,
        &cert,
        setup.trials,
    )
    .map_err(diag_failure)?;
    checks.push(report_check(
        "ergodic-bounds",
        ergodic.all_hold(),
        &format!(
            "{} trials at horizon {}: duality gap {} <= {}, consensus {} <= {}",
            ergodic.trials,
            ergodic.horizon,
            ergodic.mean_duality_gap,
            ergodic.duality_gap_bound,
            ergodic.mean_consensus,
            ergodic.consensus_bound
        ),
    ));

    let failed: Vec<&str> =
        checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
    if failed.is_empty() {
        println!("all {} checks passed", checks.len());
        Ok(())
    } else {
        Err(Failure::Check(failed.join(", ")))
    }
}

fn cmd_spectrum(cfg_path: &Path) -> Result<(), Failure> {
    let cfg = Config::load(cfg_path)?;
    let graph = config::build_graph(&cfg)?;
    let p = MixingMatrix::metropolis(&graph).lazy();
    let report = p.validate(&graph);
    println!("graph: {} nodes, {} edges", graph.node_count(), graph.edge_count());
    println!("lambda2 = {}", p.second_eigenvalue());
    println!("min eigenvalue of P = {}", p.min_eigenvalue());
    let contraction = p
        .eigenvalues()
        .iter()
        .map(|l| l - l * l)
        .fold(f64::INFINITY, f64::min);
    println!("min eigenvalue of P - P^2 = {contraction}");
    print!("{report}");
    if report.all_passed() {
        Ok(())
    } else {
        Err(Failure::Check("mixing matrix validation".into()))
    }
}
