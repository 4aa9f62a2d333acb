//! Point sets, similarity graphs and the quantities derived from them.
//!
//! Edges are weighted with a Gaussian kernel over a feature-weighted squared
//! Euclidean distance,
//!
//! ```text
//! w(x, z) = exp(-Σₖ ψₖ (xₖ - zₖ)² / (p σ²))
//! ```
//!
//! where the `p` in the denominator is optional (`normalize_by_p`). The same
//! ψ-weighted distance is used for nearest-neighbour selection.

use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// A labeled/unlabeled sample: `n` points in `p` dimensions.
///
/// Labels are `+1`, `-1`, or `0` for unlabeled.
#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    points: Vec<f64>,
    n: usize,
    p: usize,
    labels: Vec<i8>,
    feature_weights: Vec<f64>,
}

impl PointSet {
    pub fn new(points: Vec<Vec<f64>>, labels: Vec<i8>) -> Result<Self> {
        let p = points.first().map(Vec::len).unwrap_or(0);
        Self::with_feature_weights(points, labels, vec![1.0; p])
    }

    pub fn with_feature_weights(points: Vec<Vec<f64>>, labels: Vec<i8>, feature_weights: Vec<f64>) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(Error::input("point set must contain at least one point"));
        }
        let p = points[0].len();
        if p == 0 {
            return Err(Error::input("points must have at least one feature"));
        }
        if labels.len() != n {
            return Err(Error::input(format!("{} labels for {} points", labels.len(), n)));
        }
        if feature_weights.len() != p {
            return Err(Error::input(format!("{} feature weights for {} features", feature_weights.len(), p)));
        }
        if feature_weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::input("feature weights must be finite and nonnegative"));
        }
        if let Some(bad) = labels.iter().find(|l| !matches!(l, -1..=1)) {
            return Err(Error::input(format!("label {bad} not in {{-1, 0, 1}}")));
        }
        let mut flat = Vec::with_capacity(n * p);
        for (i, row) in points.into_iter().enumerate() {
            if row.len() != p {
                return Err(Error::input(format!("point {i} has {} features, expected {p}", row.len())));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::input(format!("point {i} has a non-finite coordinate")));
            }
            flat.extend(row);
        }
        Ok(Self {
            points: flat,
            n,
            p,
            labels,
            feature_weights,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.p..(i + 1) * self.p]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.p)
    }

    pub fn labels(&self) -> &[i8] {
        &self.labels
    }

    pub fn label_vector(&self) -> Vec<f64> {
        self.labels.iter().map(|&l| f64::from(l)).collect()
    }

    pub fn feature_weights(&self) -> &[f64] {
        &self.feature_weights
    }

    pub fn set_labels(&mut self, labels: Vec<i8>) -> Result<()> {
        if labels.len() != self.n || labels.iter().any(|l| !matches!(l, -1..=1)) {
            return Err(Error::input("labels must match point count and lie in {-1, 0, 1}"));
        }
        self.labels = labels;
        Ok(())
    }

    /// Sub-sample by index, preserving order of `idx`.
    pub fn select(&self, idx: &[usize]) -> Self {
        let mut points = Vec::with_capacity(idx.len() * self.p);
        for &i in idx {
            points.extend_from_slice(self.point(i));
        }
        Self {
            points,
            n: idx.len(),
            p: self.p,
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            feature_weights: self.feature_weights.clone(),
        }
    }

    /// Concatenates two point sets with the same dimension; feature weights come from `self`.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.p != other.p {
            return Err(Error::input("cannot concatenate point sets of different dimension"));
        }
        let mut points = self.points.clone();
        points.extend_from_slice(&other.points);
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Ok(Self {
            points,
            n: self.n + other.n,
            p: self.p,
            labels,
            feature_weights: self.feature_weights.clone(),
        })
    }

    pub fn labeled_indices(&self) -> Vec<usize> {
        (0..self.n).filter(|&i| self.labels[i] != 0).collect()
    }

    /// Sample standard deviation of every feature.
    pub fn feature_std(&self) -> Vec<f64> {
        let n = self.n as f64;
        (0..self.p)
            .map(|k| {
                if self.n < 2 {
                    return 0.0;
                }
                let mean = self.points().map(|x| x[k]).sum::<f64>() / n;
                let ss = self.points().map(|x| (x[k] - mean).powi(2)).sum::<f64>();
                (ss / (n - 1.0)).sqrt()
            })
            .collect()
    }
}

/// ψ-weighted squared Euclidean distance.
pub fn weighted_sq_dist(a: &[f64], b: &[f64], psi: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(psi)
        .map(|((x, z), w)| w * (x - z) * (x - z))
        .sum()
}

/// Gaussian similarity between two points.
pub fn gaussian_weight(xi: &[f64], xj: &[f64], sigma: f64, psi: &[f64], normalize_by_p: bool) -> Result<f64> {
    if xi.len() != xj.len() || xi.len() != psi.len() {
        return Err(Error::input("vectors and feature weights must have equal length"));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::input(format!("kernel width must be positive, got {sigma}")));
    }
    if xi.iter().chain(xj).chain(psi).any(|v| !v.is_finite()) {
        return Err(Error::input("non-finite value in kernel arguments"));
    }
    Ok(kernel_from_sq_dist(weighted_sq_dist(xi, xj, psi), sigma, xi.len(), normalize_by_p))
}

#[inline]
pub(crate) fn kernel_from_sq_dist(d2: f64, sigma: f64, p: usize, normalize_by_p: bool) -> f64 {
    let denom = if normalize_by_p { p as f64 * sigma * sigma } else { sigma * sigma };
    (-d2 / denom).exp()
}

/// A Gaussian kernel with resolved width and feature weights.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianKernel {
    pub sigma: f64,
    pub psi: Vec<f64>,
    pub normalize_by_p: bool,
}

impl GaussianKernel {
    pub fn new(sigma: f64, psi: Vec<f64>, normalize_by_p: bool) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::input(format!("kernel width must be positive, got {sigma}")));
        }
        if psi.is_empty() || psi.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::input("feature weights must be finite and nonnegative"));
        }
        Ok(Self { sigma, psi, normalize_by_p })
    }

    /// Kernel matching what [`build_graph`] would use on `ps`.
    pub fn for_points(ps: &PointSet, cfg: &GraphConfig) -> Result<Self> {
        Self::new(cfg.resolve_sigma(ps)?, ps.feature_weights().to_vec(), cfg.normalize_by_p)
    }

    #[inline]
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        kernel_from_sq_dist(weighted_sq_dist(a, b, &self.psi), self.sigma, self.psi.len(), self.normalize_by_p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GraphMode {
    /// Union-symmetrized k-nearest-neighbour graph.
    Knn(usize),
    /// Dense graph with weights below the cut zeroed.
    Epsilon(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaRule {
    Explicit(f64),
    /// σ = 0.1 × mean over features of the sample standard deviation.
    TenthOfMeanStd,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphConfig {
    pub mode: GraphMode,
    pub sigma: SigmaRule,
    pub normalize_by_p: bool,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            mode: GraphMode::Knn(5),
            sigma: SigmaRule::TenthOfMeanStd,
            normalize_by_p: true,
        }
    }
}

impl GraphConfig {
    pub fn knn(k: usize) -> Self {
        Self {
            mode: GraphMode::Knn(k),
            ..Self::default()
        }
    }

    pub fn epsilon(cut: f64) -> Self {
        Self {
            mode: GraphMode::Epsilon(cut),
            ..Self::default()
        }
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = SigmaRule::Explicit(sigma);
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            GraphMode::Knn(0) => return Err(Error::input("k_neighbors must be at least 1")),
            GraphMode::Epsilon(e) if !(e.is_finite() && e >= 0.0) => {
                return Err(Error::input(format!("epsilon cut must be finite and >= 0, got {e}")))
            }
            _ => {}
        }
        if let SigmaRule::Explicit(s) = self.sigma {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::input(format!("explicit sigma must be positive, got {s}")));
            }
        }
        Ok(())
    }

    /// Resolves the kernel width for a given point set.
    pub fn resolve_sigma(&self, ps: &PointSet) -> Result<f64> {
        match self.sigma {
            SigmaRule::Explicit(s) => Ok(s),
            SigmaRule::TenthOfMeanStd => {
                let std = ps.feature_std();
                let sigma = 0.1 * std.iter().sum::<f64>() / std.len() as f64;
                if sigma > 0.0 && sigma.is_finite() {
                    Ok(sigma)
                } else {
                    Err(Error::degenerate("all features are constant; cannot derive sigma"))
                }
            }
        }
    }
}

/// Symmetric nonnegative weight matrix with zero diagonal, plus cached degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGraph {
    weights: CsrMatrix,
    degrees: Vec<f64>,
    volume: f64,
}

impl SimilarityGraph {
    /// Wraps a weight matrix, checking the graph invariants.
    pub fn from_weights(weights: CsrMatrix) -> Result<Self> {
        let n = weights.dim();
        for i in 0..n {
            for (j, w) in weights.row(i) {
                if i == j && w != 0.0 {
                    return Err(Error::input(format!("self-loop at node {i}")));
                }
                if !(w.is_finite() && w >= 0.0) {
                    return Err(Error::input(format!("weight ({i}, {j}) = {w} is not finite and nonnegative")));
                }
                if weights.get(j, i) != w {
                    return Err(Error::input(format!("weight matrix not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self::new_unchecked(weights))
    }

    pub(crate) fn new_unchecked(weights: CsrMatrix) -> Self {
        let degrees: Vec<f64> = (0..weights.dim()).map(|i| weights.row_sum(i)).collect();
        let volume = degrees.iter().sum();
        Self {
            weights,
            degrees,
            volume,
        }
    }

    /// Builds from a dense symmetric matrix (diagonal is ignored).
    pub fn from_dense(w: &[Vec<f64>]) -> Result<Self> {
        let mut m: Vec<Vec<f64>> = w.to_vec();
        for (i, row) in m.iter_mut().enumerate() {
            if row.len() != w.len() {
                return Err(Error::input("dense weight matrix must be square"));
            }
            row[i] = 0.0;
        }
        Self::from_weights(CsrMatrix::from_dense(&m))
    }

    pub fn len(&self) -> usize {
        self.weights.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn weights(&self) -> &CsrMatrix {
        &self.weights
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights.get(i, j)
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.weights.row(i)
    }

    /// Graph restricted to the given node subset (cross edges dropped).
    pub fn subgraph(&self, nodes: &[usize]) -> Self {
        Self::new_unchecked(self.weights.submatrix(nodes))
    }

    /// Graph with every node replicated `mult[i]` times. Replicas of the same
    /// node are joined with weight `self_weight` (1 for duplicate points).
    pub fn expand(&self, mult: &[usize], self_weight: f64) -> (Self, Vec<usize>) {
        let mut owner = Vec::new();
        for (i, &m) in mult.iter().enumerate() {
            owner.extend(std::iter::repeat_n(i, m));
        }
        let mut first = vec![0usize; mult.len() + 1];
        for i in 0..mult.len() {
            first[i + 1] = first[i] + mult[i];
        }
        let rows = owner
            .iter()
            .enumerate()
            .map(|(a, &i)| {
                let mut row = Vec::new();
                let mut push_group = |j: usize, w: f64| {
                    for b in first[j]..first[j + 1] {
                        if b != a && w != 0.0 {
                            row.push((b, w));
                        }
                    }
                };
                let mut nb: Vec<(usize, f64)> = self.neighbors(i).collect();
                nb.push((i, self_weight));
                nb.sort_by_key(|e| e.0);
                for (j, w) in nb {
                    push_group(j, w);
                }
                row
            })
            .collect();
        (Self::new_unchecked(CsrMatrix::from_sorted_rows(rows)), owner)
    }

    /// Edge list `i,j,w` with `i < j`, weights at 17 significant digits.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for i in 0..self.len() {
            for (j, w) in self.neighbors(i) {
                if i < j {
                    out.push_str(&format!("{i},{j},{}\n", crate::io::fmt_f64(w)));
                }
            }
        }
        out
    }
}

/// Builds a similarity graph from a point set.
pub fn build_graph(ps: &PointSet, cfg: &GraphConfig) -> Result<SimilarityGraph> {
    cfg.validate()?;
    let n = ps.len();
    if n < 2 {
        return Err(Error::input("graph construction needs at least two points"));
    }
    let sigma = cfg.resolve_sigma(ps)?;
    let psi = ps.feature_weights();
    let p = ps.dim();
    let weight = |i: usize, j: usize| kernel_from_sq_dist(weighted_sq_dist(ps.point(i), ps.point(j), psi), sigma, p, cfg.normalize_by_p);

    let rows: Vec<Vec<(usize, f64)>> = match cfg.mode {
        GraphMode::Knn(k) => {
            if k >= n {
                return Err(Error::input(format!("k_neighbors = {k} must be below n = {n}")));
            }
            let chosen: Vec<Vec<usize>> = (0..n).into_par_iter().map(|i| nearest_neighbors(ps, i, k)).collect();
            let mut edges = BTreeSet::new();
            for (i, nb) in chosen.iter().enumerate() {
                for &j in nb {
                    edges.insert((i.min(j), i.max(j)));
                }
            }
            let mut rows = vec![Vec::new(); n];
            for (i, j) in edges {
                let w = weight(i, j);
                if w > 0.0 {
                    rows[i].push((j, w));
                    rows[j].push((i, w));
                }
            }
            rows.par_iter_mut().for_each(|r| r.sort_by_key(|e| e.0));
            rows
        }
        GraphMode::Epsilon(cut) => {
            // upper triangle computed once per pair, mirrored afterwards
            let upper: Vec<Vec<(usize, f64)>> = (0..n)
                .into_par_iter()
                .map(|i| {
                    ((i + 1)..n)
                        .filter_map(|j| {
                            let w = weight(i, j);
                            (w > 0.0 && w >= cut).then_some((j, w))
                        })
                        .collect()
                })
                .collect();
            let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
            for (i, row) in upper.iter().enumerate() {
                for &(j, w) in row {
                    rows[j].push((i, w));
                }
            }
            for (i, row) in upper.into_iter().enumerate() {
                rows[i].extend(row);
            }
            rows
        }
    };
    Ok(SimilarityGraph::new_unchecked(CsrMatrix::from_sorted_rows(rows)))
}

/// Indices of the `k` nearest points to `i` (excluding `i`), ties broken by index.
pub(crate) fn nearest_neighbors(ps: &PointSet, i: usize, k: usize) -> Vec<usize> {
    let psi = ps.feature_weights();
    let xi = ps.point(i);
    let mut cand: Vec<(f64, usize)> = (0..ps.len())
        .filter(|&j| j != i)
        .map(|j| (weighted_sq_dist(xi, ps.point(j), psi), j))
        .collect();
    let k = k.min(cand.len());
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < cand.len() {
        cand.select_nth_unstable_by(k, cmp);
        cand.truncate(k);
    }
    cand.sort_by(cmp);
    cand.into_iter().map(|(_, j)| j).collect()
}

/// Unnormalized `D - W` or symmetric normalized `I - D^{-1/2} W D^{-1/2}` Laplacian.
pub fn laplacian(g: &SimilarityGraph, normalized: bool) -> Result<CsrMatrix> {
    let d = g.degrees();
    if !normalized {
        let neg = g.weights().map_values(|_, _, w| -w);
        return Ok(neg.add_diagonal(d));
    }
    if let Some(i) = d.iter().position(|&di| di <= 0.0) {
        return Err(Error::degenerate(format!("node {i} has zero degree; normalized Laplacian undefined")));
    }
    let inv_sqrt: Vec<f64> = d.iter().map(|x| 1.0 / x.sqrt()).collect();
    let scaled = g.weights().scale_rows_cols(&inv_sqrt, &inv_sqrt).map_values(|_, _, w| -w);
    Ok(scaled.add_diagonal(&vec![1.0; g.len()]))
}

/// Stationary distribution of the random walk `P = D⁻¹W`, i.e. `1ᵀW / vol(W)`.
pub fn stationary_distribution(g: &SimilarityGraph) -> Result<Vec<f64>> {
    let vol = g.volume();
    if vol <= 0.0 {
        return Err(Error::degenerate("graph volume is zero; random walk undefined"));
    }
    Ok(g.degrees().iter().map(|d| d / vol).collect())
}

/// Connected components over nonzero-weight edges, each sorted, ordered by smallest member.
pub fn connected_components(g: &SimilarityGraph) -> Vec<Vec<usize>> {
    let n = g.len();
    let mut comp = vec![usize::MAX; n];
    let mut out = Vec::new();
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = out.len();
        let mut members = vec![start];
        comp[start] = id;
        let mut stack = vec![start];
        while let Some(i) = stack.pop() {
            for (j, w) in g.neighbors(i) {
                if w > 0.0 && comp[j] == usize::MAX {
                    comp[j] = id;
                    members.push(j);
                    stack.push(j);
                }
            }
        }
        members.sort_unstable();
        out.push(members);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> SimilarityGraph {
        SimilarityGraph::from_dense(&[vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 0.0]]).unwrap()
    }

    #[test]
    fn gaussian_weight_identity_and_unit_exponent() {
        let psi = [1.0, 1.0];
        assert_eq!(gaussian_weight(&[0.3, -1.0], &[0.3, -1.0], 0.7, &psi, true).unwrap(), 1.0);
        // Σ(Δ²) = pσ² with σ = 1, p = 2: Δ = (1, 1)
        let w = gaussian_weight(&[0.0, 0.0], &[1.0, 1.0], 1.0, &psi, true).unwrap();
        assert!((w - (-1.0f64).exp()).abs() < 1e-15);
        assert!((w - 0.367879).abs() < 1e-6);
        // without normalisation the divisor is σ² only
        let w = gaussian_weight(&[0.0, 0.0], &[1.0, 0.0], 1.0, &psi, false).unwrap();
        assert!((w - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn zero_feature_weight_ignores_feature() {
        let psi = [1.0, 0.0, 2.0];
        let a = gaussian_weight(&[0.0, 5.0, 1.0], &[1.0, -3.0, 0.0], 0.8, &psi, true).unwrap();
        let b = gaussian_weight(&[0.0, 0.0, 1.0], &[1.0, 0.0, 0.0], 0.8, &psi, true).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gaussian_weight_rejects_bad_input() {
        assert!(gaussian_weight(&[f64::NAN], &[0.0], 1.0, &[1.0], true).is_err());
        assert!(gaussian_weight(&[0.0], &[0.0], 0.0, &[1.0], true).is_err());
        assert!(gaussian_weight(&[0.0, 1.0], &[0.0], 1.0, &[1.0], true).is_err());
    }

    #[test]
    fn collinear_knn_gives_path() {
        let ps = PointSet::new(vec![vec![0.0], vec![1.0], vec![2.0]], vec![0, 0, 0]).unwrap();
        let g = build_graph(&ps, &GraphConfig::knn(1).with_sigma(1.0)).unwrap();
        assert_eq!(g.weights().nnz(), 4);
        assert!(g.weight(0, 1) > 0.0 && g.weight(1, 2) > 0.0);
        assert_eq!(g.weight(0, 2), 0.0);
        assert_eq!(g.weight(0, 1), g.weight(1, 0));
    }

    #[test]
    fn epsilon_zero_is_complete() {
        let ps = PointSet::new((0..6).map(|i| vec![i as f64 * 0.1, 1.0]).collect(), vec![0; 6]).unwrap();
        let g = build_graph(&ps, &GraphConfig::epsilon(0.0).with_sigma(1.0)).unwrap();
        assert_eq!(g.weights().nnz(), 30);
        assert!(g.weights().diagonal().iter().all(|&d| d == 0.0));
    }

    #[test]
    fn duplicates_get_unit_weight() {
        let ps = PointSet::new(vec![vec![1.0, 2.0], vec![1.0, 2.0], vec![5.0, 5.0]], vec![0; 3]).unwrap();
        let g = build_graph(&ps, &GraphConfig::knn(1).with_sigma(1.0)).unwrap();
        assert_eq!(g.weight(0, 1), 1.0);
        assert_eq!(g.weight(0, 0), 0.0);
    }

    #[test]
    fn build_graph_errors() {
        let one = PointSet::new(vec![vec![0.0]], vec![0]).unwrap();
        assert!(matches!(build_graph(&one, &GraphConfig::knn(1)), Err(Error::Input(_))));
        let two = PointSet::new(vec![vec![0.0], vec![1.0]], vec![0, 0]).unwrap();
        assert!(build_graph(&two, &GraphConfig::knn(2).with_sigma(1.0)).is_err());
        assert!(build_graph(&two, &GraphConfig::knn(0).with_sigma(1.0)).is_err());
    }

    #[test]
    fn laplacian_two_nodes() {
        let g = SimilarityGraph::from_dense(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let l = laplacian(&g, false).unwrap();
        assert_eq!(l.to_dense(), vec![vec![1.0, -1.0], vec![-1.0, 1.0]]);
        assert_eq!(l.mul_vec(&[1.0, 1.0]), vec![0.0, 0.0]);
        let ln = laplacian(&g, true).unwrap();
        assert_eq!(ln.to_dense(), vec![vec![1.0, -1.0], vec![-1.0, 1.0]]);
    }

    #[test]
    fn normalized_laplacian_needs_positive_degrees() {
        let g = SimilarityGraph::from_dense(&[vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert!(matches!(laplacian(&g, true), Err(Error::Degenerate(_))));
    }

    #[test]
    fn stationary_small_cases() {
        let g = SimilarityGraph::from_dense(&[vec![0.0, 3.0], vec![3.0, 0.0]]).unwrap();
        assert_eq!(stationary_distribution(&g).unwrap(), vec![0.5, 0.5]);
        assert_eq!(stationary_distribution(&path3()).unwrap(), vec![0.25, 0.5, 0.25]);
        let empty = SimilarityGraph::from_dense(&[vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert!(matches!(stationary_distribution(&empty), Err(Error::Degenerate(_))));
    }

    #[test]
    fn components() {
        let full = SimilarityGraph::from_dense(&vec![vec![1.0; 4]; 4]).unwrap();
        assert_eq!(connected_components(&full), vec![vec![0, 1, 2, 3]]);
        let zero = SimilarityGraph::from_dense(&vec![vec![0.0; 3]; 3]).unwrap();
        assert_eq!(connected_components(&zero), vec![vec![0], vec![1], vec![2]]);
        // cliques {0, 2, 4} and {1, 3}
        let mut w = vec![vec![0.0; 5]; 5];
        for &(i, j) in &[(0, 2), (0, 4), (2, 4), (1, 3)] {
            w[i][j] = 1.0;
            w[j][i] = 1.0;
        }
        let g = SimilarityGraph::from_dense(&w).unwrap();
        assert_eq!(connected_components(&g), vec![vec![0, 2, 4], vec![1, 3]]);
    }

    #[test]
    fn from_weights_rejects_asymmetry() {
        let m = CsrMatrix::from_triplets(2, vec![(0, 1, 1.0), (1, 0, 0.5)]);
        assert!(SimilarityGraph::from_weights(m).is_err());
    }

    #[test]
    fn expand_replicates_nodes() {
        let g = SimilarityGraph::from_dense(&[vec![0.0, 0.5], vec![0.5, 0.0]]).unwrap();
        let (e, owner) = g.expand(&[2, 1], 1.0);
        assert_eq!(owner, vec![0, 0, 1]);
        assert_eq!(e.weight(0, 1), 1.0);
        assert_eq!(e.weight(0, 2), 0.5);
        assert_eq!(e.weight(1, 2), 0.5);
        assert!(e.weights().is_symmetric());
    }

    #[test]
    fn edge_list_format() {
        let s = path3().to_edge_list();
        assert_eq!(s.lines().count(), 2);
        assert!(s.starts_with("0,1,1.0000000000000000e0"));
    }

    #[test]
    fn sigma_rule() {
        let ps = PointSet::new(vec![vec![0.0, 0.0], vec![2.0, 4.0]], vec![0, 0]).unwrap();
        let std = ps.feature_std();
        let s = GraphConfig::default().resolve_sigma(&ps).unwrap();
        assert!((s - 0.1 * (std[0] + std[1]) / 2.0).abs() < 1e-15);
        let flat = PointSet::new(vec![vec![1.0], vec![1.0]], vec![0, 0]).unwrap();
        assert!(GraphConfig::default().resolve_sigma(&flat).is_err());
    }
}
