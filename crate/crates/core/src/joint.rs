//! Joint quantization and label propagation (elastic-joint).
//!
//! The backbone graph lives on `m + k` centroids: the `m` labeled points,
//! pinned, followed by `k` free centroids. Outer iterations alternate soft
//! label propagation on the backbone with a quantization phase that solves the
//! centroid linear system and reassigns points, k-means style.
//!
//! The centroid system comes from a first-order Taylor expansion of the
//! Gaussian weights, so with `aᵢⱼ = (ℓᵢ − ℓⱼ)² / ((m+k)² σ²)` every free `j`
//! satisfies
//!
//! ```text
//! Σᵢ aᵢⱼ cᵢ + cⱼ (2γ_q|Kⱼ|/n − Σᵢ aᵢⱼ) = (2γ_q/n) Σ_{x ∈ Kⱼ} x
//! ```
//!
//! Rows are divided by `2γ_q/n` before solving, so with equal soft labels the
//! system is diagonal and the update is exactly `Σx / |Kⱼ|`.

use rand::seq::index::sample;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{build_graph, weighted_sq_dist, GraphConfig, GraphMode, PointSet, SigmaRule};
use crate::harmonic::{soft_harmonic, SoftConfig};
use crate::rng;
use crate::solver::solve_dense;

/// How the free centroids are seeded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum JointInit {
    /// Uniform sample of unlabeled points without replacement.
    #[default]
    Random,
    /// Lloyd iterations on the unlabeled points from the random sample.
    KMeans,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointConfig {
    /// Number of free centroids.
    pub k: usize,
    pub gamma_q: f64,
    pub gamma_g: f64,
    pub f_l: f64,
    pub f_u: f64,
    /// Kernel width; `None` uses a tenth of the mean feature standard deviation.
    pub sigma: Option<f64>,
    /// Neighbors per node in the backbone graph.
    pub graph_k: usize,
    pub max_outer: usize,
    pub max_inner: usize,
    pub conv_tol: f64,
    pub init: JointInit,
}

impl Default for JointConfig {
    fn default() -> Self {
        Self {
            k: 20,
            gamma_q: 1e5,
            gamma_g: 1e-6,
            f_l: 10.0,
            f_u: 0.1,
            sigma: None,
            graph_k: 5,
            max_outer: 10,
            max_inner: 20,
            conv_tol: 1e-6,
            init: JointInit::Random,
        }
    }
}

impl JointConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::input("k must be at least 1"));
        }
        if !(self.gamma_q > 0.0 && self.gamma_q.is_finite()) {
            return Err(Error::input(format!("γ_q must be positive, got {}", self.gamma_q)));
        }
        if !(self.gamma_g >= 0.0 && self.gamma_g.is_finite()) {
            return Err(Error::input(format!("γ_g must be nonnegative, got {}", self.gamma_g)));
        }
        if !(self.f_l > self.f_u && self.f_u > 0.0 && self.f_l.is_finite()) {
            return Err(Error::input(format!("need f_l > f_u > 0, got f_l={} f_u={}", self.f_l, self.f_u)));
        }
        if let Some(s) = self.sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::input(format!("σ must be positive, got {s}")));
            }
        }
        if self.graph_k == 0 || self.max_outer == 0 || self.max_inner == 0 {
            return Err(Error::input("graph_k, max_outer and max_inner must be positive"));
        }
        if !(self.conv_tol >= 0.0) {
            return Err(Error::input("conv_tol must be nonnegative"));
        }
        Ok(())
    }

    fn soft(&self) -> SoftConfig {
        SoftConfig {
            gamma_g: self.gamma_g,
            c_l: self.f_l,
            c_u: self.f_u,
        }
    }
}

/// Centroids, their soft labels and the point assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct BackboneState {
    /// `m + k` rows; the first `m` are the labeled points.
    pub centroids: Vec<Vec<f64>>,
    pub m: usize,
    /// `±1` for labeled centroids, `0` for free ones.
    pub targets: Vec<f64>,
    pub soft: Vec<f64>,
    /// Nearest centroid of every data point.
    pub assignment: Vec<usize>,
    pub sigma: f64,
    /// Full objective after each propagation.
    pub objective: Vec<f64>,
    /// Plug-back residual of every centroid solve.
    pub residuals: Vec<f64>,
    /// Surrogate values within each quantization phase: before the first
    /// solve, then after every (solve, reassign) pair.
    pub surrogate: Vec<Vec<f64>>,
    /// Free centroids moved to the farthest unlabeled point.
    pub reseeds: usize,
}

impl BackboneState {
    pub fn len(&self) -> usize {
        self.centroids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.len()];
        for &a in &self.assignment {
            s[a] += 1;
        }
        s
    }
}

/// Index of the nearest centroid; ties go to the lowest index.
pub fn nearest_centroid(centroids: &[Vec<f64>], x: &[f64], psi: &[f64]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = weighted_sq_dist(c, x, psi);
        if d < best.1 {
            best = (j, d);
        }
    }
    best.0
}

fn assign(ps: &PointSet, centroids: &[Vec<f64>]) -> Vec<usize> {
    (0..ps.len())
        .into_par_iter()
        .map(|i| nearest_centroid(centroids, ps.point(i), ps.feature_weights()))
        .collect()
}

fn backbone_graph_config(cfg: &JointConfig, sigma: f64) -> GraphConfig {
    GraphConfig {
        mode: GraphMode::Knn(cfg.graph_k),
        sigma: SigmaRule::Explicit(sigma),
        normalize_by_p: true,
    }
}

/// Soft labels on the backbone: `(L + γ_g I + F) ℓ = F y` with `F = diag(f_l, f_u)`.
pub fn propagate_on_backbone(state: &BackboneState, cfg: &JointConfig, psi: &[f64]) -> Result<Vec<f64>> {
    let labels = vec![0i8; state.len()];
    let ps = PointSet::with_feature_weights(state.centroids.clone(), labels, psi.to_vec())?;
    let g = build_graph(&ps, &backbone_graph_config(cfg, state.sigma))?;
    Ok(soft_harmonic(&g, &state.targets, &cfg.soft())?.values)
}

fn label_coupling(soft: &[f64], sigma: f64) -> Vec<Vec<f64>> {
    let t = soft.len() as f64;
    let denom = t * t * sigma * sigma;
    soft.iter()
        .map(|li| soft.iter().map(|lj| (li - lj) * (li - lj) / denom).collect())
        .collect()
}

fn cluster_sums(ps: &PointSet, assignment: &[usize], t: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut sums = vec![vec![0.0; ps.dim()]; t];
    let mut counts = vec![0; t];
    for (x, &a) in ps.points().zip(assignment) {
        counts[a] += 1;
        for (s, v) in sums[a].iter_mut().zip(x) {
            *s += v;
        }
    }
    (sums, counts)
}

/// Result of one centroid solve.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizationOutcome {
    pub centroids: Vec<Vec<f64>>,
    /// Max-abs plug-back residual of the scaled system, relative to its right-hand side.
    pub residual: f64,
    pub reseeded: Vec<usize>,
}

/// Solves the centroid system for the free centroids with `ℓ` and the
/// assignment held fixed. When the system is singular, empty free cells are
/// moved to the unlabeled point farthest from every centroid and held there
/// while the rest is re-solved.
pub fn quantization_step(ps: &PointSet, state: &BackboneState, cfg: &JointConfig) -> Result<QuantizationOutcome> {
    let t = state.len();
    let m = state.m;
    let n = ps.len() as f64;
    let p = ps.dim();
    let a = label_coupling(&state.soft, state.sigma);
    let scale = n / (2.0 * cfg.gamma_q);
    let (sums, counts) = cluster_sums(ps, &state.assignment, t);
    let mut centroids = state.centroids.clone();
    let mut fixed = vec![false; t];
    fixed[..m].iter_mut().for_each(|f| *f = true);
    let mut reseeded = Vec::new();

    loop {
        let free: Vec<usize> = (m..t).filter(|&j| !fixed[j]).collect();
        if free.is_empty() {
            return Ok(QuantizationOutcome {
                centroids,
                residual: 0.0,
                reseeded,
            });
        }
        let mut mat = vec![vec![0.0; free.len()]; free.len()];
        let mut rhs = vec![vec![0.0; p]; free.len()];
        for (r, &j) in free.iter().enumerate() {
            let coupling: f64 = (0..t).map(|i| a[i][j]).sum::<f64>() * scale;
            mat[r][r] = counts[j] as f64 - coupling;
            rhs[r].clone_from(&sums[j]);
            for i in 0..t {
                if i == j || a[i][j] == 0.0 {
                    continue;
                }
                let b = a[i][j] * scale;
                if fixed[i] {
                    for (d, v) in rhs[r].iter_mut().zip(&centroids[i]) {
                        *d -= b * v;
                    }
                } else {
                    let col = free.binary_search(&i).unwrap_or_else(|_| unreachable!());
                    mat[r][col] += b;
                }
            }
        }
        match solve_dense(&mat, &rhs) {
            Ok(sol) => {
                let mut residual: f64 = 0.0;
                for r in 0..free.len() {
                    for d in 0..p {
                        let lhs: f64 = (0..free.len()).map(|c| mat[r][c] * sol[c][d]).sum();
                        let res = (lhs - rhs[r][d]).abs() / rhs[r][d].abs().max(1.0);
                        residual = residual.max(res);
                    }
                }
                for (r, &j) in free.iter().enumerate() {
                    centroids[j].clone_from(&sol[r]);
                }
                return Ok(QuantizationOutcome {
                    centroids,
                    residual,
                    reseeded,
                });
            }
            Err(Error::Degenerate(msg)) => {
                let empties: Vec<usize> = free.iter().copied().filter(|&j| counts[j] == 0).collect();
                if empties.is_empty() {
                    return Err(Error::Degenerate(format!("centroid system: {msg}")));
                }
                for j in empties {
                    centroids[j] = farthest_unlabeled(ps, &centroids)?;
                    fixed[j] = true;
                    reseeded.push(j);
                }
            }
            Err(e) => return Err(e),
        }
    }
}

/// The unlabeled point with the largest distance to its nearest centroid.
fn farthest_unlabeled(ps: &PointSet, centroids: &[Vec<f64>]) -> Result<Vec<f64>> {
    let psi = ps.feature_weights();
    let mut best: Option<(usize, f64)> = None;
    for i in (0..ps.len()).filter(|&i| ps.labels()[i] == 0) {
        let d = centroids
            .iter()
            .map(|c| weighted_sq_dist(c, ps.point(i), psi))
            .fold(f64::INFINITY, f64::min);
        if best.is_none_or(|b| d > b.1) {
            best = Some((i, d));
        }
    }
    best.map(|(i, _)| ps.point(i).to_vec())
        .ok_or_else(|| Error::degenerate("no unlabeled point to reseed an empty centroid"))
}

/// `−½ Σ_{i<j} aᵢⱼ‖cᵢ − cⱼ‖² + (γ_q/n) Σⱼ Σ_{x ∈ Kⱼ} ‖cⱼ − x‖²`, whose
/// stationarity conditions are the centroid system.
pub fn surrogate_objective(ps: &PointSet, state: &BackboneState, gamma_q: f64) -> f64 {
    let a = label_coupling(&state.soft, state.sigma);
    let psi = vec![1.0; ps.dim()];
    let mut pair = 0.0;
    for i in 0..state.len() {
        for j in (i + 1)..state.len() {
            if a[i][j] != 0.0 {
                pair += a[i][j] * weighted_sq_dist(&state.centroids[i], &state.centroids[j], &psi);
            }
        }
    }
    -0.5 * pair + gamma_q / ps.len() as f64 * distortion(ps, &state.centroids, &state.assignment)
}

fn distortion(ps: &PointSet, centroids: &[Vec<f64>], assignment: &[usize]) -> f64 {
    let psi = vec![1.0; ps.dim()];
    ps.points()
        .zip(assignment)
        .map(|(x, &a)| weighted_sq_dist(&centroids[a], x, &psi))
        .sum()
}

/// `(ℓ − y)ᵀF(ℓ − y) + ℓᵀ(L + γ_g I)ℓ + γ_q (m+k)²/n Σ ‖c_{a(i)} − xᵢ‖²` on the backbone graph.
pub fn full_objective(ps: &PointSet, state: &BackboneState, cfg: &JointConfig) -> Result<f64> {
    let labels = vec![0i8; state.len()];
    let cps = PointSet::with_feature_weights(state.centroids.clone(), labels, ps.feature_weights().to_vec())?;
    let g = build_graph(&cps, &backbone_graph_config(cfg, state.sigma))?;
    let f = cfg.soft().fit_weights(&state.targets);
    let l = &state.soft;
    let fit: f64 = (0..l.len()).map(|i| f[i] * (l[i] - state.targets[i]).powi(2)).sum();
    let mut smooth = cfg.gamma_g * l.iter().map(|v| v * v).sum::<f64>();
    for i in 0..l.len() {
        for (j, w) in g.neighbors(i) {
            if j > i {
                smooth += w * (l[i] - l[j]).powi(2);
            }
        }
    }
    let t = state.len() as f64;
    let quant = cfg.gamma_q * t * t / ps.len() as f64 * distortion(ps, &state.centroids, &state.assignment);
    Ok(fit + smooth + quant)
}

fn validate_input(ps: &PointSet, cfg: &JointConfig) -> Result<usize> {
    cfg.validate()?;
    let m = ps.labeled_indices().len();
    if m == 0 {
        return Err(Error::input("joint quantization needs at least one labeled point"));
    }
    if ps.len() <= m + cfg.k {
        return Err(Error::input(format!("need n > m + k, got n={} m={m} k={}", ps.len(), cfg.k)));
    }
    Ok(m)
}

fn initial_state(ps: &PointSet, cfg: &JointConfig, seed: u64) -> Result<BackboneState> {
    let m = validate_input(ps, cfg)?;
    let sigma = match cfg.sigma {
        Some(s) => s,
        None => GraphConfig::default().resolve_sigma(ps)?,
    };
    let labeled = ps.labeled_indices();
    let unlabeled: Vec<usize> = (0..ps.len()).filter(|&i| ps.labels()[i] == 0).collect();
    if unlabeled.len() < cfg.k {
        return Err(Error::input(format!("{} unlabeled points for {} free centroids", unlabeled.len(), cfg.k)));
    }
    let mut r = rng::seeded(seed);
    let mut pick = sample(&mut r, unlabeled.len(), cfg.k).into_vec();
    pick.sort_unstable();
    let mut centroids: Vec<Vec<f64>> = labeled.iter().map(|&i| ps.point(i).to_vec()).collect();
    centroids.extend(pick.iter().map(|&u| ps.point(unlabeled[u]).to_vec()));
    if cfg.init == JointInit::KMeans {
        let free = lloyd(ps, &unlabeled, centroids.split_off(m), 100)?;
        centroids.extend(free);
    }
    let mut targets: Vec<f64> = labeled.iter().map(|&i| f64::from(ps.labels()[i])).collect();
    targets.resize(m + cfg.k, 0.0);
    let assignment = assign(ps, &centroids);
    Ok(BackboneState {
        soft: vec![0.0; centroids.len()],
        centroids,
        m,
        targets,
        assignment,
        sigma,
        objective: Vec::new(),
        residuals: Vec::new(),
        surrogate: Vec::new(),
        reseeds: 0,
    })
}

/// Lloyd's k-means over the points `idx`, empty cells reseeded at the farthest point.
fn lloyd(ps: &PointSet, idx: &[usize], mut centroids: Vec<Vec<f64>>, max_iter: usize) -> Result<Vec<Vec<f64>>> {
    let sub = ps.select(idx);
    let mut assignment = assign(&sub, &centroids);
    for _ in 0..max_iter {
        let (sums, counts) = cluster_sums(&sub, &assignment, centroids.len());
        for j in 0..centroids.len() {
            if counts[j] > 0 {
                centroids[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
        for j in 0..centroids.len() {
            if counts[j] == 0 {
                let mut unl = sub.clone();
                unl.set_labels(vec![0; sub.len()])?;
                centroids[j] = farthest_unlabeled(&unl, &centroids)?;
            }
        }
        let next = assign(&sub, &centroids);
        if next == assignment {
            break;
        }
        assignment = next;
    }
    Ok(centroids)
}

/// Alternating minimization of the joint objective.
pub fn elastic_joint(ps: &PointSet, cfg: &JointConfig, seed: u64) -> Result<BackboneState> {
    let mut state = initial_state(ps, cfg, seed)?;
    let mut prev: Option<f64> = None;
    for outer in 0..cfg.max_outer {
        state.soft = propagate_on_backbone(&state, cfg, ps.feature_weights())?;
        let obj = full_objective(ps, &state, cfg)?;
        state.objective.push(obj);
        let converged = prev.is_some_and(|p| (p - obj).abs() <= cfg.conv_tol * p.abs().max(f64::MIN_POSITIVE));
        prev = Some(obj);
        if converged || outer + 1 == cfg.max_outer {
            break;
        }
        quantization_phase(ps, &mut state, cfg)?;
    }
    Ok(state)
}

/// Inner (solve, reassign) loop. A solve that would raise the surrogate
/// (possible when the centroid system is indefinite) is rejected and ends the phase.
fn quantization_phase(ps: &PointSet, state: &mut BackboneState, cfg: &JointConfig) -> Result<()> {
    let mut trace = vec![surrogate_objective(ps, state, cfg.gamma_q)];
    for _ in 0..cfg.max_inner {
        let out = quantization_step(ps, state, cfg)?;
        state.residuals.push(out.residual);
        let mut next = state.clone();
        next.centroids = out.centroids;
        next.assignment = assign(ps, &next.centroids);
        let s = surrogate_objective(ps, &next, cfg.gamma_q);
        let last = *trace.last().unwrap_or(&f64::INFINITY);
        if out.reseeded.is_empty() && s > last {
            break;
        }
        let stable = next.assignment == state.assignment && out.reseeded.is_empty();
        next.reseeds += out.reseeded.len();
        *state = next;
        trace.push(s);
        if stable {
            break;
        }
    }
    state.surrogate.push(trace);
    Ok(())
}

/// Baseline: k-means on the unlabeled points from the same seed, then the
/// labeled points join as fixed centroids and labels are propagated once.
pub fn kmeans_then_propagate(ps: &PointSet, cfg: &JointConfig, seed: u64) -> Result<BackboneState> {
    let mut c = *cfg;
    c.init = JointInit::KMeans;
    let mut state = initial_state(ps, &c, seed)?;
    state.soft = propagate_on_backbone(&state, cfg, ps.feature_weights())?;
    let obj = full_objective(ps, &state, cfg)?;
    state.objective.push(obj);
    Ok(state)
}

/// 1-NN inference: every point takes the soft label of its nearest centroid.
pub fn infer_unlabeled(ps: &PointSet, state: &BackboneState) -> Result<Vec<(f64, i8)>> {
    if ps.dim() != state.centroids.first().map_or(0, Vec::len) {
        return Err(Error::input("point dimension does not match the backbone"));
    }
    Ok((0..ps.len())
        .into_par_iter()
        .map(|i| {
            let v = state.soft[nearest_centroid(&state.centroids, ps.point(i), ps.feature_weights())];
            (v, crate::harmonic::sign(v))
        })
        .collect())
}
