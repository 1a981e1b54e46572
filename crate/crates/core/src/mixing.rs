//! Mixing matrices over a graph: Metropolis weights, the lazy transform,
//! spectral checks, and validation of the consensus assumptions.

use crate::blocks::BlockVec;
use crate::graph::Graph;
use nalgebra::DMatrix;
use std::fmt;

/// Row sums may drift from 1 by at most this much.
pub const STOCHASTIC_TOL: f64 = 1e-12;
/// Minimum eigenvalue may dip below zero by at most this much and still
/// count as positive semi-definite.
pub const PSD_TOL: f64 = 1e-10;

/// Dense symmetric stochastic matrix supported on a graph.
///
/// Entry (i, j) weights how much node i listens to node j; row i is the
/// averaging stencil of node i. Constructed matrices (lazy Metropolis) are
/// symmetric, stochastic, irreducible, and positive semi-definite.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    size: usize,
    entries: Vec<f64>, // row-major, size*size
}

impl MixingMatrix {
    /// Wraps a dense row-major buffer. No invariant checks; use
    /// [`MixingMatrix::validate`] to test them.
    pub fn from_dense(size: usize, entries: Vec<f64>) -> Self {
        assert!(size > 0, "mixing matrix needs size >= 1");
        assert_eq!(entries.len(), size * size, "entries must be size*size");
        MixingMatrix { size, entries }
    }

    pub fn identity(size: usize) -> Self {
        let mut entries = vec![0.0; size * size];
        for i in 0..size {
            entries[i * size + i] = 1.0;
        }
        MixingMatrix::from_dense(size, entries)
    }

    /// Metropolis weights on a connected graph: for each edge {i, j} the
    /// weight is 1/(1 + max(deg i, deg j)); the diagonal absorbs the rest of
    /// the row. Symmetric, stochastic, irreducible, but not necessarily PSD.
    pub fn metropolis(g: &Graph) -> Self {
        let m = g.node_count();
        let mut entries = vec![0.0; m * m];
        for (i, j) in g.edges() {
            let w = 1.0 / (1.0 + g.degree(i).max(g.degree(j)) as f64);
            entries[i * m + j] = w;
            entries[j * m + i] = w;
        }
        for i in 0..m {
            let off: f64 = (0..m).filter(|&j| j != i).map(|j| entries[i * m + j]).sum();
            entries[i * m + i] = 1.0 - off;
        }
        MixingMatrix { size: m, entries }
    }

    /// Lazy transform (I + P)/2. Maps eigenvalues λ to (1+λ)/2 ∈ [0, 1], so
    /// the result is PSD while staying symmetric and stochastic.
    pub fn lazy(&self) -> Self {
        let m = self.size;
        let mut entries: Vec<f64> = self.entries.iter().map(|v| v / 2.0).collect();
        for i in 0..m {
            entries[i * m + i] += 0.5;
        }
        MixingMatrix { size: m, entries }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.size + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.size..(i + 1) * self.size]
    }

    /// (P ⊗ I_n) x: block i of the result is Σ_j P[i][j] x_j.
    pub fn apply_blocks(&self, x: &BlockVec) -> BlockVec {
        assert_eq!(x.node_count(), self.size, "block count must match matrix size");
        let n = x.dimension();
        let mut out = BlockVec::zeros(self.size, n);
        for i in 0..self.size {
            let row = self.row(i);
            let block = out.block_mut(i);
            for (j, xj) in x.blocks().enumerate() {
                let w = row[j];
                if w != 0.0 {
                    for k in 0..n {
                        block[k] += w * xj[k];
                    }
                }
            }
        }
        out
    }

    /// ((I − P) ⊗ I_n) x: the consensus disagreement. Zero exactly when all
    /// blocks of x are equal (P stochastic irreducible).
    pub fn disagreement(&self, x: &BlockVec) -> BlockVec {
        let mut out = x.clone();
        out.axpy(-1.0, &self.apply_blocks(x));
        out
    }

    /// All eigenvalues, descending. The matrix is treated as symmetric.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let m = DMatrix::from_row_slice(self.size, self.size, &self.entries);
        let mut eigs: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
        eigs.sort_by(|a, b| b.partial_cmp(a).unwrap());
        eigs
    }

    /// Second-largest eigenvalue. For a symmetric stochastic irreducible P
    /// the largest is 1 (eigenvector 1_m); this is the mixing rate.
    pub fn second_eigenvalue(&self) -> f64 {
        assert!(self.size >= 2, "second eigenvalue needs size >= 2");
        self.eigenvalues()[1]
    }

    pub fn min_eigenvalue(&self) -> f64 {
        *self.eigenvalues().last().unwrap()
    }

    /// Runs every structural check against the graph: symmetry, row
    /// stochasticity (with nonnegativity), graph support, irreducibility,
    /// positive semi-definiteness of P, and of P − P².
    pub fn validate(&self, g: &Graph) -> ValidationReport {
        assert_eq!(g.node_count(), self.size, "graph and matrix sizes must match");
        let m = self.size;

        let mut asym: f64 = 0.0;
        for i in 0..m {
            for j in i + 1..m {
                asym = asym.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }

        let mut row_defect: f64 = 0.0;
        let mut negativity: f64 = 0.0;
        for i in 0..m {
            let row = self.row(i);
            row_defect = row_defect.max((row.iter().sum::<f64>() - 1.0).abs());
            for &v in row {
                negativity = negativity.max(-v);
            }
        }
        let stochastic_violation = row_defect.max(negativity.max(0.0));

        let mut off_support: f64 = 0.0;
        for i in 0..m {
            for j in 0..m {
                if i != j && !g.has_edge(i, j) {
                    off_support = off_support.max(self.get(i, j));
                }
            }
        }

        // Irreducibility: reachability over the positive off-diagonal support.
        let mut seen = vec![false; m];
        let mut queue = std::collections::VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for j in 0..m {
                if i != j && !seen[j] && self.get(i, j) > 0.0 {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        let unreached = seen.iter().filter(|&&s| !s).count();

        let min_eig = self.min_eigenvalue();

        let p = DMatrix::from_row_slice(m, m, &self.entries);
        let p_minus_p2 = &p - &p * &p;
        let min_eig_pp2 = p_minus_p2
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);

        ValidationReport {
            checks: vec![
                CheckResult { name: "symmetric", passed: asym == 0.0, violation: asym },
                CheckResult {
                    name: "stochastic",
                    passed: stochastic_violation <= STOCHASTIC_TOL,
                    violation: stochastic_violation,
                },
                CheckResult {
                    name: "graph_support",
                    passed: off_support <= 0.0,
                    violation: off_support.max(0.0),
                },
                CheckResult {
                    name: "irreducible",
                    passed: unreached == 0,
                    violation: unreached as f64,
                },
                CheckResult {
                    name: "psd",
                    passed: min_eig >= -PSD_TOL,
                    violation: (-min_eig).max(0.0),
                },
                CheckResult {
                    name: "p_minus_p2_psd",
                    passed: min_eig_pp2 >= -PSD_TOL,
                    violation: (-min_eig_pp2).max(0.0),
                },
            ],
        }
    }

    /// Row-major CSV, one row per line, full round-trip precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.size {
            let row: Vec<String> = self.row(i).iter().map(|v| format!("{v}")).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, String> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row: Result<Vec<f64>, _> = line.split(',').map(|t| t.trim().parse()).collect();
            rows.push(row.map_err(|e| format!("line {}: {e}", lineno + 1))?);
        }
        let m = rows.len();
        if m == 0 {
            return Err("empty matrix".into());
        }
        let mut entries = Vec::with_capacity(m * m);
        for row in &rows {
            if row.len() != m {
                return Err(format!("matrix must be square, got a row of length {}", row.len()));
            }
            entries.extend_from_slice(row);
        }
        Ok(MixingMatrix::from_dense(m, entries))
    }
}

/// min{1, n^(2/p − 1)}: the strong-convexity constant that converts the
/// ℓ_p bound of the mirror map into an ℓ_2 bound in dimension n.
pub fn sigma(p: f64, n: usize) -> f64 {
    assert!(p >= 1.0, "norm exponent must be >= 1");
    assert!(n >= 1, "dimension must be >= 1");
    (n as f64).powf(2.0 / p - 1.0).min(1.0)
}

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub violation: f64,
}

/// Outcome of [`MixingMatrix::validate`]: one entry per structural check,
/// each with the worst violation magnitude observed.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> &CheckResult {
        self.checks
            .iter()
            .find(|c| c.name == name)
            .unwrap_or_else(|| panic!("unknown check {name}"))
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(
                f,
                "{:16} {}  (violation {:.3e})",
                c.name,
                if c.passed { "pass" } else { "FAIL" },
                c.violation
            )?;
        }
        Ok(())
    }
}
