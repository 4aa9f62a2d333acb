//! Harmonic label propagation on similarity graphs.
//!
//! * [`hard_harmonic`] clamps the labeled nodes and solves
//!   `(L_uu + γ_g I) ℓ_u = W_ul ℓ_l`. With `γ_g = 0` this is the classic
//!   harmonic solution; `γ_g > 0` adds a zero-valued sink that shrinks
//!   confidences `|ℓᵢ|` with graph distance from the labels.
//! * [`soft_harmonic`] minimizes `(ℓ − y)ᵀC(ℓ − y) + ℓᵀ(L + γ_g I)ℓ`, solved in
//!   the symmetric form `(K + C) ℓ = C y`.
//! * [`blockwise_harmonic`] solves the soft problem independently per block of
//!   a node partition. It is exact when the blocks are connected components.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{connected_components, laplacian, SimilarityGraph};
use crate::solver::{solve_spd, DEFAULT_TOL};
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    HardHs,
    SoftHs,
    CompactHs,
}

/// Propagated real-valued labels; `sgn(ℓᵢ)` is the prediction, `|ℓᵢ|` the confidence.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftLabels {
    pub values: Vec<f64>,
    pub origin: Origin,
}

impl SoftLabels {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `+1`, `-1`, or `0` when the value is exactly zero.
    pub fn signs(&self) -> Vec<i8> {
        self.values.iter().map(|&v| sign(v)).collect()
    }
}

/// `+1`, `-1`, or `0` for an exact zero.
pub fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Weights of the soft harmonic objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftConfig {
    /// Laplacian regularizer γ_g ≥ 0.
    pub gamma_g: f64,
    /// Fit weight on labeled nodes.
    pub c_l: f64,
    /// Fit weight on unlabeled nodes, `0 < c_u ≤ c_l`.
    pub c_u: f64,
}

impl Default for SoftConfig {
    fn default() -> Self {
        Self {
            gamma_g: 1e-6,
            c_l: 10.0,
            c_u: 0.1,
        }
    }
}

impl SoftConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = self.gamma_g.is_finite() && self.c_l.is_finite() && self.c_u.is_finite();
        if !finite || self.gamma_g < 0.0 || self.c_u <= 0.0 || self.c_l <= 0.0 || self.c_u > self.c_l {
            return Err(Error::input(format!(
                "soft config requires finite γ_g ≥ 0 and 0 < c_u ≤ c_l, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Diagonal of C for pseudo-targets `y` (nonzero entries are labeled).
    pub fn fit_weights(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|&v| if v != 0.0 { self.c_l } else { self.c_u }).collect()
    }
}

fn check_labels(n: usize, labels: &[i8]) -> Result<()> {
    if labels.len() != n {
        return Err(Error::input(format!("{} labels for a graph with {n} nodes", labels.len())));
    }
    if labels.iter().any(|l| !matches!(l, -1..=1)) {
        return Err(Error::input("labels must lie in {-1, 0, 1}"));
    }
    if labels.iter().all(|&l| l == 0) {
        return Err(Error::input("at least one labeled node is required"));
    }
    Ok(())
}

/// Regularized harmonic solution with labeled entries clamped to their labels.
pub fn hard_harmonic(g: &SimilarityGraph, labels: &[i8], gamma_g: f64) -> Result<SoftLabels> {
    check_labels(g.len(), labels)?;
    if !(gamma_g.is_finite() && gamma_g >= 0.0) {
        return Err(Error::input(format!("γ_g must be finite and nonnegative, got {gamma_g}")));
    }
    let mult = vec![1.0; g.len()];
    let values = clamped_solve(g, labels, gamma_g, &mult)?;
    Ok(SoftLabels {
        values,
        origin: Origin::HardHs,
    })
}

/// Solves `(L_uu + γ_g·diag(sink)) ℓ_u = W_ul ℓ_l` and scatters the result.
///
/// `sink` is the per-node sink multiplier (1 for plain graphs, multiplicity for
/// compact graphs).
pub(crate) fn clamped_solve(g: &SimilarityGraph, labels: &[i8], gamma_g: f64, sink: &[f64]) -> Result<Vec<f64>> {
    let n = g.len();
    if gamma_g == 0.0 {
        for comp in connected_components(g) {
            if comp.iter().all(|&i| labels[i] == 0) {
                return Err(Error::degenerate(format!(
                    "γ_g = 0 and the component containing node {} has no labeled node",
                    comp[0]
                )));
            }
        }
    }
    let unlabeled: Vec<usize> = (0..n).filter(|&i| labels[i] == 0).collect();
    let mut values: Vec<f64> = labels.iter().map(|&l| f64::from(l)).collect();
    if unlabeled.is_empty() {
        return Ok(values);
    }
    let rhs: Vec<f64> = unlabeled
        .iter()
        .map(|&i| {
            g.neighbors(i)
                .filter(|(j, _)| labels[*j] != 0)
                .map(|(j, w)| w * f64::from(labels[j]))
                .sum()
        })
        .collect();
    let l = laplacian(g, false)?;
    let shift: Vec<f64> = unlabeled.iter().map(|&i| gamma_g * sink[i]).collect();
    let system = l.submatrix(&unlabeled).add_diagonal(&shift);
    let lu = solve_spd(&system, &rhs, DEFAULT_TOL)?;
    for (k, &i) in unlabeled.iter().enumerate() {
        values[i] = lu[k];
    }
    Ok(values)
}

/// Soft harmonic solution `(C⁻¹K + I)⁻¹ y` with `K = L + γ_g I`.
///
/// `y` holds pseudo-targets; zero entries are treated as unlabeled (weight `c_u`).
pub fn soft_harmonic(g: &SimilarityGraph, y: &[f64], cfg: &SoftConfig) -> Result<SoftLabels> {
    cfg.validate()?;
    if y.len() != g.len() {
        return Err(Error::input(format!("{} targets for a graph with {} nodes", y.len(), g.len())));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("targets must be finite"));
    }
    let c = cfg.fit_weights(y);
    let values = weighted_soft_solve(g, y, &c, cfg.gamma_g, None)?;
    Ok(SoftLabels {
        values,
        origin: Origin::SoftHs,
    })
}

/// Solves `(L + γ_g·S + C) ℓ = C y` where `S = diag(sink)` (identity when `None`).
pub(crate) fn weighted_soft_solve(
    g: &SimilarityGraph,
    y: &[f64],
    c: &[f64],
    gamma_g: f64,
    sink: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let l = laplacian(g, false)?;
    let shift: Vec<f64> = match sink {
        Some(s) => c.iter().zip(s).map(|(ci, si)| ci + gamma_g * si).collect(),
        None => c.iter().map(|ci| ci + gamma_g).collect(),
    };
    let system: CsrMatrix = l.add_diagonal(&shift);
    let rhs: Vec<f64> = c.iter().zip(y).map(|(ci, yi)| ci * yi).collect();
    solve_spd(&system, &rhs, DEFAULT_TOL)
}

/// Soft harmonic solution computed independently on each block of `partition`.
///
/// Cross-block edges are dropped; blocks are solved in parallel and the result
/// is ordered by node index.
pub fn blockwise_harmonic(
    g: &SimilarityGraph,
    y: &[f64],
    cfg: &SoftConfig,
    partition: &[Vec<usize>],
) -> Result<SoftLabels> {
    cfg.validate()?;
    let n = g.len();
    if y.len() != n {
        return Err(Error::input(format!("{} targets for a graph with {n} nodes", y.len())));
    }
    let mut seen = vec![false; n];
    for block in partition {
        for &i in block {
            if i >= n || seen[i] {
                return Err(Error::input(format!("partition is not a disjoint cover (node {i})")));
            }
            seen[i] = true;
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::input("partition does not cover every node"));
    }
    let solved: Vec<Vec<f64>> = partition
        .par_iter()
        .map(|block| {
            let sub = g.subgraph(block);
            let yb: Vec<f64> = block.iter().map(|&i| y[i]).collect();
            let cb = cfg.fit_weights(&yb);
            weighted_soft_solve(&sub, &yb, &cb, cfg.gamma_g, None)
        })
        .collect::<Result<_>>()?;
    let mut values = vec![0.0; n];
    for (block, vals) in partition.iter().zip(solved) {
        for (&i, v) in block.iter().zip(vals) {
            values[i] = v;
        }
    }
    Ok(SoftLabels {
        values,
        origin: Origin::SoftHs,
    })
}

/// Largest violation of `ℓᵢ = (1/dᵢ) Σⱼ wᵢⱼ ℓⱼ` over unlabeled nodes.
pub fn harmonic_residual(g: &SimilarityGraph, labels: &[i8], values: &[f64]) -> f64 {
    (0..g.len())
        .filter(|&i| labels[i] == 0 && g.degrees()[i] > 0.0)
        .map(|i| {
            let avg = g.neighbors(i).map(|(j, w)| w * values[j]).sum::<f64>() / g.degrees()[i];
            (values[i] - avg).abs()
        })
        .fold(0.0, f64::max)
}
