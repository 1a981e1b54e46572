//! Mirror maps, Bregman divergences, and simplex projections.
//!
//! Two maps are supported: negative entropy φ(u) = Σ u[k] ln u[k] on the
//! positive orthant (α = 1 strongly convex in ‖·‖₁ on the simplex) and
//! squared Euclidean φ(u) = ½‖u‖₂² on R^n (α = 1 in ‖·‖₂).

use crate::blocks::BlockVec;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

/// Components below this are outside the entropy domain for gradient
/// purposes: ln is finite but the mirror map is effectively at its boundary.
pub const ENTROPY_DOMAIN_FLOOR: f64 = 1e-300;

#[derive(Debug, Error)]
pub enum MirrorError {
    #[error("component {index} = {value} outside the mirror-map domain")]
    Domain { index: usize, value: f64 },
    #[error("cannot normalize a vector with zero mass")]
    DegenerateInput,
}

/// The distance-generating function of the iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MirrorMap {
    #[serde(rename = "entropy")]
    NegativeEntropy,
    #[serde(rename = "euclidean")]
    SquaredEuclidean,
}

impl MirrorMap {
    /// Strong-convexity constant α of φ with respect to ‖·‖_p on the simplex.
    pub fn alpha(&self) -> f64 {
        1.0
    }

    /// Norm exponent p in which φ is α-strongly convex.
    pub fn norm_exponent(&self) -> f64 {
        match self {
            MirrorMap::NegativeEntropy => 1.0,
            MirrorMap::SquaredEuclidean => 2.0,
        }
    }

    /// ∇φ(u). Entropy: ln u[k] + 1, requires strictly positive u.
    pub fn grad(&self, u: &[f64]) -> Result<Vec<f64>, MirrorError> {
        match self {
            MirrorMap::NegativeEntropy => {
                check_interior(u)?;
                Ok(u.iter().map(|&x| x.ln() + 1.0).collect())
            }
            MirrorMap::SquaredEuclidean => Ok(u.to_vec()),
        }
    }

    /// (∇φ)⁻¹(g). Entropy: exp(g[k] − 1), defined for every g.
    pub fn grad_inv(&self, g: &[f64]) -> Vec<f64> {
        match self {
            MirrorMap::NegativeEntropy => g.iter().map(|&x| (x - 1.0).exp()).collect(),
            MirrorMap::SquaredEuclidean => g.to_vec(),
        }
    }

    /// B_φ(u, v) = φ(u) − φ(v) − ⟨∇φ(v), u − v⟩.
    ///
    /// Entropy evaluates the algebraically identical per-component form
    /// u ln(u/v) − u + v (each term ≥ 0, so no cancellation), with
    /// 0·ln 0 = 0 on the first argument; on the simplex this is the KL
    /// divergence. Requires v strictly interior, u in the closure.
    pub fn bregman(&self, u: &[f64], v: &[f64]) -> Result<f64, MirrorError> {
        assert_eq!(u.len(), v.len(), "bregman arguments must share a dimension");
        match self {
            MirrorMap::NegativeEntropy => {
                check_interior(v)?;
                let mut total = 0.0;
                for (k, (&uk, &vk)) in u.iter().zip(v).enumerate() {
                    if uk < 0.0 {
                        return Err(MirrorError::Domain { index: k, value: uk });
                    }
                    total += if uk == 0.0 { vk } else { uk * (uk / vk).ln() - uk + vk };
                }
                Ok(total)
            }
            MirrorMap::SquaredEuclidean => {
                Ok(u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / 2.0)
            }
        }
    }

    /// Σ_i B_φ(u_i, v_i) over matching blocks.
    pub fn bregman_blocks(&self, u: &BlockVec, v: &BlockVec) -> Result<f64, MirrorError> {
        assert_eq!(u.node_count(), v.node_count());
        let mut total = 0.0;
        for (ub, vb) in u.blocks().zip(v.blocks()) {
            total += self.bregman(ub, vb)?;
        }
        Ok(total)
    }
}

impl fmt::Display for MirrorMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MirrorMap::NegativeEntropy => "entropy",
            MirrorMap::SquaredEuclidean => "euclidean",
        })
    }
}

impl FromStr for MirrorMap {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "entropy" => Ok(MirrorMap::NegativeEntropy),
            "euclidean" => Ok(MirrorMap::SquaredEuclidean),
            other => Err(format!("unknown mirror map {other:?} (expected entropy or euclidean)")),
        }
    }
}

fn check_interior(u: &[f64]) -> Result<(), MirrorError> {
    for (k, &x) in u.iter().enumerate() {
        if !(x >= ENTROPY_DOMAIN_FLOOR) {
            return Err(MirrorError::Domain { index: k, value: x });
        }
    }
    Ok(())
}

/// u / ‖u‖₁ for elementwise-nonnegative u with positive mass.
pub fn simplex_normalize(u: &[f64]) -> Result<Vec<f64>, MirrorError> {
    let mass: f64 = u.iter().sum();
    if !(mass > 0.0) {
        return Err(MirrorError::DegenerateInput);
    }
    Ok(u.iter().map(|&x| x / mass).collect())
}

/// Euclidean projection onto the probability simplex by sort and threshold.
pub fn simplex_euclidean_projection(u: &[f64]) -> Vec<f64> {
    let mut sorted = u.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (k, &s) in sorted.iter().enumerate() {
        cumulative += s;
        let candidate = (cumulative - 1.0) / (k + 1) as f64;
        if s - candidate > 0.0 {
            theta = candidate;
        }
    }
    u.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// ℓ_p norm for p ≥ 1.
pub fn lp_norm(w: &[f64], p: f64) -> f64 {
    assert!(p >= 1.0, "lp_norm needs p >= 1");
    if p == 1.0 {
        w.iter().map(|x| x.abs()).sum()
    } else if p == 2.0 {
        w.iter().map(|x| x * x).sum::<f64>().sqrt()
    } else {
        w.iter().map(|x| x.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }
}
