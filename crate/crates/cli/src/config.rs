//! Flat key=value experiment configs.
//!
//! One `key = value` pair per line; `#` starts a comment; blank lines are
//! skipped. Unknown and duplicate keys are rejected so a typo fails loudly
//! instead of silently running defaults. Relative `edge_list` / `instance`
//! paths resolve against the config file's directory.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use bpdmm::graph::Graph;
use bpdmm::mirror::MirrorMap;
use bpdmm::problems::{ConsensusProblem, LinearSimplexProblem};
use bpdmm::solver::{self, Mode, SolverParams};

use crate::Failure;

/// Every key a config file may contain.
pub const KNOWN_KEYS: &[&str] = &[
    // graph: either the Erdos-Renyi triple or an edge-list file
    "m",
    "p_edge",
    "graph_seed",
    "edge_list",
    // problem: either generator settings or an instance JSON file
    "n",
    "problem_seed",
    "shared_argmin",
    "argmin_margin",
    "instance",
    // mirror map and solver parameters
    "mirror",
    "omega",
    "rho",
    "tau",
    "gamma",
    "iterations",
    "mode",
    "solver_seed",
    // experiment shape
    "trials",
    "output_dir",
];

#[derive(Debug)]
pub struct Config {
    entries: BTreeMap<String, String>,
    base: PathBuf,
}

impl Config {
    pub fn parse(text: &str, base: &Path) -> Result<Self, String> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let lineno = idx + 1;
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {lineno}: expected `key = value`, got {line:?}"))?;
            let (key, value) = (key.trim(), value.trim());
            if !KNOWN_KEYS.contains(&key) {
                return Err(format!("line {lineno}: unknown key {key:?}"));
            }
            if value.is_empty() {
                return Err(format!("line {lineno}: key {key:?} has an empty value"));
            }
            if entries.insert(key.to_string(), value.to_string()).is_some() {
                return Err(format!("line {lineno}: duplicate key {key:?}"));
            }
        }
        Ok(Config { entries, base: base.to_path_buf() })
    }

    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::Config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
    }

    /// No keys set; every lookup falls back to its default.
    pub fn empty() -> Self {
        Config { entries: BTreeMap::new(), base: PathBuf::from(".") }
    }

    pub fn has(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    fn typed<T: FromStr>(&self, key: &str) -> Result<Option<T>, Failure>
    where
        T::Err: Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|e: T::Err| {
                Failure::Config(format!("key {key}: cannot parse {v:?} ({e})"))
            }),
        }
    }

    pub fn usize(&self, key: &str) -> Result<Option<usize>, Failure> {
        self.typed(key)
    }

    pub fn u64(&self, key: &str) -> Result<Option<u64>, Failure> {
        self.typed(key)
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>, Failure> {
        self.typed(key)
    }

    pub fn bool(&self, key: &str) -> Result<Option<bool>, Failure> {
        self.typed(key)
    }

    /// Path value resolved against the config file's directory.
    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.raw(key).map(|v| self.base.join(v))
    }

    fn require_usize(&self, key: &str) -> Result<usize, Failure> {
        self.usize(key)?.ok_or_else(|| Failure::Config(format!("missing required key {key:?}")))
    }

    fn require_f64(&self, key: &str) -> Result<f64, Failure> {
        self.f64(key)?.ok_or_else(|| Failure::Config(format!("missing required key {key:?}")))
    }
}

fn conflict(present: &str, cfg: &Config, excluded: &[&str]) -> Result<(), Failure> {
    for key in excluded {
        if cfg.has(key) {
            return Err(Failure::Config(format!("key {key:?} conflicts with {present:?}")));
        }
    }
    Ok(())
}

/// Graph from `edge_list`, or Erdos-Renyi from `m`/`p_edge`/`graph_seed`.
pub fn build_graph(cfg: &Config) -> Result<Graph, Failure> {
    if let Some(path) = cfg.path("edge_list") {
        conflict("edge_list", cfg, &["m", "p_edge", "graph_seed"])?;
        let text = fs::read_to_string(&path)
            .map_err(|e| Failure::Config(format!("cannot read edge_list {}: {e}", path.display())))?;
        return Graph::from_edge_list(&text)
            .map_err(|e| Failure::Config(format!("edge_list {}: {e}", path.display())));
    }
    let m = cfg.require_usize("m")?;
    let p_edge = cfg.require_f64("p_edge")?;
    if m == 0 {
        return Err(Failure::Config("m must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&p_edge) {
        return Err(Failure::Config(format!("p_edge = {p_edge} must lie in [0, 1]")));
    }
    let seed = cfg.u64("graph_seed")?.unwrap_or(0);
    Graph::erdos_renyi(m, p_edge, seed).map_err(|e| Failure::Generation(e.to_string()))
}

/// Instance from a JSON file, or a seeded generator draw sized to the graph.
pub fn build_problem(cfg: &Config, m: usize) -> Result<LinearSimplexProblem, Failure> {
    if let Some(path) = cfg.path("instance") {
        conflict("instance", cfg, &["n", "problem_seed", "shared_argmin", "argmin_margin"])?;
        let text = fs::read_to_string(&path)
            .map_err(|e| Failure::Config(format!("cannot read instance {}: {e}", path.display())))?;
        let prob = LinearSimplexProblem::from_json(&text)
            .map_err(|e| Failure::Config(format!("instance {}: {e}", path.display())))?;
        if prob.node_count() != m {
            return Err(Failure::Config(format!(
                "instance has {} nodes but the graph has {m}",
                prob.node_count()
            )));
        }
        return Ok(prob);
    }
    let n = cfg.require_usize("n")?;
    if n == 0 {
        return Err(Failure::Config("n must be at least 1".into()));
    }
    let seed = cfg.u64("problem_seed")?.unwrap_or(0);
    if cfg.bool("shared_argmin")?.unwrap_or(false) {
        let margin = cfg.f64("argmin_margin")?.unwrap_or(0.2);
        if margin <= 0.0 {
            return Err(Failure::Config(format!("argmin_margin = {margin} must be positive")));
        }
        Ok(LinearSimplexProblem::random_shared_argmin(m, n, seed, margin))
    } else {
        if cfg.has("argmin_margin") {
            return Err(Failure::Config("argmin_margin requires shared_argmin = true".into()));
        }
        Ok(LinearSimplexProblem::random(m, n, seed))
    }
}

pub fn build_mirror(cfg: &Config) -> Result<MirrorMap, Failure> {
    match cfg.raw("mirror") {
        None => Ok(MirrorMap::NegativeEntropy),
        Some(v) => v.parse().map_err(|e| Failure::Config(format!("key mirror: {e}"))),
    }
}

/// Solver parameters: defaults fill omitted tau/gamma; `explicit_steps`
/// reports whether either was overridden (the verify identity check only
/// applies when both were defaulted).
pub struct BuiltParams {
    pub params: SolverParams,
    pub explicit_steps: bool,
}

pub fn build_params(
    cfg: &Config,
    phi: MirrorMap,
    n: usize,
    default_omega: Option<f64>,
    default_iterations: Option<usize>,
) -> Result<BuiltParams, Failure> {
    let omega = match (cfg.f64("omega")?, default_omega) {
        (Some(v), _) => v,
        (None, Some(d)) => d,
        (None, None) => return Err(Failure::Config("missing required key \"omega\"".into())),
    };
    if !(omega > 0.0 && omega <= 1.0) {
        return Err(Failure::Config(format!("omega = {omega} must lie in (0, 1]")));
    }
    let rho = cfg.f64("rho")?.unwrap_or(1.0);
    if rho <= 0.0 {
        return Err(Failure::Config(format!("rho = {rho} must be positive")));
    }
    let mut params = solver::default_params(omega, rho, phi, n);
    let mut explicit_steps = false;
    if let Some(tau) = cfg.f64("tau")? {
        params.tau = tau;
        explicit_steps = true;
    }
    if let Some(gamma) = cfg.f64("gamma")? {
        params.gamma = gamma;
        explicit_steps = true;
    }
    params.iterations = match (cfg.usize("iterations")?, default_iterations) {
        (Some(v), _) => v,
        (None, Some(d)) => d,
        (None, None) => return Err(Failure::Config("missing required key \"iterations\"".into())),
    };
    params.seed = cfg.u64("solver_seed")?.unwrap_or(0);
    params.mode = match cfg.raw("mode") {
        None => Mode::Stochastic,
        Some(v) => v.parse().map_err(|e| Failure::Config(format!("key mode: {e}")))?,
    };
    Ok(BuiltParams { params, explicit_steps })
}

/// Everything a command needs, constructed from one config.
#[derive(Debug)]
pub struct Setup {
    pub graph: Graph,
    pub problem: LinearSimplexProblem,
    pub mirror: MirrorMap,
    pub params: SolverParams,
    pub explicit_steps: bool,
    pub trials: usize,
    pub output_dir: Option<PathBuf>,
}

/// Strict construction for `run`: graph, problem, omega, iterations, and
/// output_dir are required.
pub fn run_setup(cfg: &Config) -> Result<Setup, Failure> {
    let graph = build_graph(cfg)?;
    let problem = build_problem(cfg, graph.node_count())?;
    let mirror = build_mirror(cfg)?;
    let built = build_params(cfg, mirror, problem.dimension(), None, None)?;
    let trials = cfg.usize("trials")?.unwrap_or(1);
    if trials == 0 {
        return Err(Failure::Config("trials must be at least 1".into()));
    }
    let output_dir = cfg
        .path("output_dir")
        .ok_or_else(|| Failure::Config("missing required key \"output_dir\"".into()))?;
    Ok(Setup {
        graph,
        problem,
        mirror,
        params: built.params,
        explicit_steps: built.explicit_steps,
        trials,
        output_dir: Some(output_dir),
    })
}

/// Construction for `verify`: any omitted piece falls back to the built-in
/// small instance (4-cycle, 3-dimensional shared-argmin costs, omega = 0.5,
/// 50 iterations, 200 trials) that keeps subset enumeration cheap.
pub fn verify_setup(cfg: &Config) -> Result<Setup, Failure> {
    let graph = if ["m", "p_edge", "graph_seed", "edge_list"].iter().any(|k| cfg.has(k)) {
        build_graph(cfg)?
    } else {
        Graph::cycle(4)
    };
    let m = graph.node_count();
    let problem = if ["n", "problem_seed", "shared_argmin", "argmin_margin", "instance"]
        .iter()
        .any(|k| cfg.has(k))
    {
        build_problem(cfg, m)?
    } else {
        LinearSimplexProblem::random_shared_argmin(m, 3, 9, 0.2)
    };
    let mirror = build_mirror(cfg)?;
    let built = build_params(cfg, mirror, problem.dimension(), Some(0.5), Some(50))?;
    if built.params.iterations == 0 {
        return Err(Failure::Config("verify needs iterations >= 1".into()));
    }
    let trials = cfg.usize("trials")?.unwrap_or(200);
    if trials < 2 {
        return Err(Failure::Config("verify needs trials >= 2 for a standard error".into()));
    }
    Ok(Setup {
        graph,
        problem,
        mirror,
        params: built.params,
        explicit_steps: built.explicit_steps,
        trials,
        output_dir: cfg.path("output_dir"),
    })
}
