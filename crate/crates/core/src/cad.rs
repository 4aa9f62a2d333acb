//! Conditional anomaly detection: how unusual is the label `y` given `x`.
//!
//! Three scorers are provided, all returning "higher = more anomalous":
//!
//! * [`CadModel`] (λ-RWCAD): class-conditional densities are estimated from
//!   the stationary mass a new node would receive in a random walk on each
//!   class graph, `P(x | c) = Sᶜ(x) / (vol(Wᶜ) + 2 Sᶜ(x))` with
//!   `Sᶜ(x) = Σ_{i ∈ c} K(xᵢ, x)`. They enter Bayes' rule with an extra `λ` in
//!   the denominator that acts as an "everything else" class, which keeps
//!   isolated and fringe points from getting confident scores.
//! * [`softhad_score`]: soft harmonic solution over fully labeled data, scored
//!   as `|ℓ*ᵢ − yᵢ|`. [`backbone_cad`] is the same on a weighted centroid graph.
//! * [`weighted_knn_score`]: Parzen-window posterior, the unregularized baseline.

use rand::seq::index::sample;

use crate::error::{Error, Result};
use crate::graph::{build_graph, GaussianKernel, GraphConfig, PointSet, SimilarityGraph};
use crate::harmonic::{weighted_soft_solve, SoftConfig};
use crate::rng;

#[derive(Debug, Clone)]
struct ClassModel {
    points: PointSet,
    /// Row sums of the class graph, for leave-one-out volumes.
    degrees: Vec<f64>,
    volume: f64,
    prior: f64,
}

/// Trained λ-RWCAD model.
#[derive(Debug, Clone)]
pub struct CadModel {
    pos: ClassModel,
    neg: ClassModel,
    kernel: GaussianKernel,
    pub lambda: f64,
}

/// Intermediate quantities of a λ-RWCAD evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassEvidence {
    /// `Σᵢ W⁺_{i,x}` and `Σᵢ W⁻_{i,x}`.
    pub mass_pos: f64,
    pub mass_neg: f64,
    /// Total edge sums of the class graphs including the new node.
    pub total_pos: f64,
    pub total_neg: f64,
    pub likelihood_pos: f64,
    pub likelihood_neg: f64,
}

impl CadModel {
    /// Builds one similarity graph per class. The kernel width is resolved on
    /// the pooled training set so both classes share it.
    pub fn fit(train: &PointSet, graph_cfg: &GraphConfig, lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::input(format!("λ must be finite and nonnegative, got {lambda}")));
        }
        let kernel = GaussianKernel::for_points(train, graph_cfg)?;
        let cfg = GraphConfig {
            sigma: crate::graph::SigmaRule::Explicit(kernel.sigma),
            ..*graph_cfg
        };
        let labeled = train.labeled_indices().len();
        let class = |c: i8| -> Result<ClassModel> {
            let idx: Vec<usize> = (0..train.len()).filter(|&i| train.labels()[i] == c).collect();
            if idx.is_empty() {
                return Err(Error::degenerate(format!("no training examples of class {c:+}")));
            }
            let points = train.select(&idx);
            let (degrees, volume) = if idx.len() >= 2 {
                let g = build_graph(&points, &cfg)?;
                (g.degrees().to_vec(), g.volume())
            } else {
                (vec![0.0], 0.0)
            };
            Ok(ClassModel {
                points,
                degrees,
                volume,
                prior: idx.len() as f64 / labeled as f64,
            })
        };
        Ok(Self {
            pos: class(1)?,
            neg: class(-1)?,
            kernel,
            lambda,
        })
    }

    pub fn kernel(&self) -> &GaussianKernel {
        &self.kernel
    }

    pub fn volumes(&self) -> (f64, f64) {
        (self.pos.volume, self.neg.volume)
    }

    pub fn priors(&self) -> (f64, f64) {
        (self.pos.prior, self.neg.prior)
    }

    fn class_mass(&self, class: &ClassModel, x: &[f64], skip: Option<usize>) -> f64 {
        class
            .points
            .points()
            .enumerate()
            .filter(|(i, _)| Some(*i) != skip)
            .map(|(_, xi)| self.kernel.eval(xi, x))
            .sum()
    }

    fn evidence_inner(&self, x: &[f64], skip_pos: Option<usize>, skip_neg: Option<usize>) -> ClassEvidence {
        let vol = |c: &ClassModel, skip: Option<usize>| match skip {
            Some(i) => c.volume - 2.0 * c.degrees[i],
            None => c.volume,
        };
        let mass_pos = self.class_mass(&self.pos, x, skip_pos);
        let mass_neg = self.class_mass(&self.neg, x, skip_neg);
        let total_pos = vol(&self.pos, skip_pos) + 2.0 * mass_pos;
        let total_neg = vol(&self.neg, skip_neg) + 2.0 * mass_neg;
        let ratio = |m: f64, t: f64| if t > 0.0 { m / t } else { 0.0 };
        ClassEvidence {
            mass_pos,
            mass_neg,
            total_pos,
            total_neg,
            likelihood_pos: ratio(mass_pos, total_pos),
            likelihood_neg: ratio(mass_neg, total_neg),
        }
    }

    /// Random-walk class-conditional estimates for a new point.
    pub fn evidence(&self, x: &[f64]) -> ClassEvidence {
        self.evidence_inner(x, None, None)
    }

    fn posterior_against(&self, ev: &ClassEvidence, y: i8) -> f64 {
        let joint_pos = ev.likelihood_pos * self.pos.prior;
        let joint_neg = ev.likelihood_neg * self.neg.prior;
        let other = if y > 0 { joint_neg } else { joint_pos };
        let denom = self.lambda + joint_pos + joint_neg;
        if denom > 0.0 {
            other / denom
        } else if y > 0 {
            self.neg.prior
        } else {
            self.pos.prior
        }
    }

    /// `P(y ≠ y_e | x_e)` under the λ-regularized posterior.
    pub fn score(&self, x: &[f64], y: i8) -> Result<f64> {
        check_point(x, self.kernel.psi.len(), y)?;
        Ok(self.posterior_against(&self.evidence(x), y))
    }

    /// Scores the `i`-th training example of class `y` with itself removed
    /// from its class graph.
    pub fn score_training_point(&self, x: &[f64], y: i8, index_in_class: usize) -> Result<f64> {
        check_point(x, self.kernel.psi.len(), y)?;
        let ev = if y > 0 {
            self.evidence_inner(x, Some(index_in_class), None)
        } else {
            self.evidence_inner(x, None, Some(index_in_class))
        };
        Ok(self.posterior_against(&ev, y))
    }

    /// Leave-one-out scores for every example of the training set it was fit on.
    pub fn score_training_set(&self, train: &PointSet) -> Result<Vec<f64>> {
        let (mut ip, mut ineg) = (0usize, 0usize);
        let mut out = Vec::with_capacity(train.len());
        for (x, &y) in train.points().zip(train.labels()) {
            let s = match y {
                1 => {
                    ip += 1;
                    self.score_training_point(x, 1, ip - 1)?
                }
                -1 => {
                    ineg += 1;
                    self.score_training_point(x, -1, ineg - 1)?
                }
                _ => return Err(Error::input("training examples must be labeled")),
            };
            out.push(s);
        }
        Ok(out)
    }
}

fn check_point(x: &[f64], p: usize, y: i8) -> Result<()> {
    if x.len() != p {
        return Err(Error::input(format!("point has {} features, model expects {p}", x.len())));
    }
    if y != 1 && y != -1 {
        return Err(Error::input(format!("label must be ±1, got {y}")));
    }
    Ok(())
}

/// Parzen-window (weighted k-NN) estimate of `P(y ≠ y_e | x_e)`.
///
/// `skip` excludes one training index, for leave-one-out scoring.
pub fn weighted_knn_score(
    train: &PointSet,
    kernel: &GaussianKernel,
    x: &[f64],
    y: i8,
    skip: Option<usize>,
) -> Result<f64> {
    check_point(x, train.dim(), y)?;
    let (mut same, mut total) = (0.0, 0.0);
    let mut classes = [false, false];
    for (i, (xi, &yi)) in train.points().zip(train.labels()).enumerate() {
        if Some(i) == skip || yi == 0 {
            continue;
        }
        classes[usize::from(yi > 0)] = true;
        let w = kernel.eval(xi, x);
        total += w;
        if yi == y {
            same += w;
        }
    }
    if !(classes[0] && classes[1]) {
        return Err(Error::degenerate("weighted k-NN needs training examples of both classes"));
    }
    if total <= 0.0 {
        return Err(Error::degenerate("all kernel weights vanish at the query point"));
    }
    Ok(1.0 - same / total)
}

/// SoftHAD scores `|ℓ*ᵢ − yᵢ|` on a graph over fully labeled examples.
pub fn softhad_score(g: &SimilarityGraph, y: &[i8], cfg: &SoftConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if y.len() != g.len() {
        return Err(Error::input(format!("{} labels for {} nodes", y.len(), g.len())));
    }
    if y.iter().any(|&l| l != 1 && l != -1) {
        return Err(Error::input("SoftHAD requires every example to be labeled ±1"));
    }
    let target: Vec<f64> = y.iter().map(|&l| f64::from(l)).collect();
    let c = vec![cfg.c_l; g.len()];
    let ell = weighted_soft_solve(g, &target, &c, cfg.gamma_g, None)?;
    Ok(ell.iter().zip(&target).map(|(l, y)| (l - y).abs()).collect())
}

/// SoftHAD on a backbone graph whose nodes stand for `multiplicities[i]` examples.
///
/// Minimizes `(ℓ − y)ᵀ c_l V (ℓ − y) + ℓᵀ(L(VWV) + γ_g V)ℓ` and returns `|ℓ − y|`.
pub fn backbone_cad(
    centroid_graph: &SimilarityGraph,
    multiplicities: &[f64],
    y: &[f64],
    cfg: &SoftConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let k = centroid_graph.len();
    if multiplicities.len() != k || y.len() != k {
        return Err(Error::input("one multiplicity and one label per centroid required"));
    }
    if multiplicities.iter().any(|v| !(v.is_finite() && *v >= 1.0)) {
        return Err(Error::input("multiplicities must be >= 1"));
    }
    let expanded = SimilarityGraph::new_unchecked(centroid_graph.weights().scale_rows_cols(multiplicities, multiplicities));
    let c: Vec<f64> = multiplicities.iter().map(|v| cfg.c_l * v).collect();
    let ell = weighted_soft_solve(&expanded, y, &c, cfg.gamma_g, Some(multiplicities))?;
    Ok(ell.iter().zip(y).map(|(l, y)| (l - y).abs()).collect())
}

/// SoftHAD through a sampled backbone: `k` examples drawn uniformly without
/// replacement become centroids, each weighted by its class's empirical count
/// divided by the number of sampled centroids of that class. Every example is
/// scored against the soft label of its nearest centroid.
pub fn softhad_backbone(ps: &PointSet, graph_cfg: &GraphConfig, cfg: &SoftConfig, k: usize, seed: u64) -> Result<Vec<f64>> {
    let n = ps.len();
    if k < 2 || k > n {
        return Err(Error::input(format!("backbone size {k} must lie in [2, {n}]")));
    }
    if ps.labels().iter().any(|&l| l != 1 && l != -1) {
        return Err(Error::input("SoftHAD requires every example to be labeled ±1"));
    }
    let kernel = GaussianKernel::for_points(ps, graph_cfg)?;
    let mut r = rng::seeded(seed);
    let mut idx = sample(&mut r, n, k).into_vec();
    idx.sort_unstable();
    let backbone = ps.select(&idx);
    let count = |ls: &[i8], c: i8| ls.iter().filter(|&&l| l == c).count() as f64;
    let (n_pos, n_neg) = (count(ps.labels(), 1), count(ps.labels(), -1));
    let (k_pos, k_neg) = (count(backbone.labels(), 1), count(backbone.labels(), -1));
    let mult: Vec<f64> = backbone
        .labels()
        .iter()
        .map(|&l| if l > 0 { (n_pos / k_pos).max(1.0) } else { (n_neg / k_neg).max(1.0) })
        .collect();
    let cfg_fixed = GraphConfig {
        sigma: crate::graph::SigmaRule::Explicit(kernel.sigma),
        ..*graph_cfg
    };
    let g = build_graph(&backbone, &cfg_fixed)?;
    let y = backbone.label_vector();
    let expanded = SimilarityGraph::new_unchecked(g.weights().scale_rows_cols(&mult, &mult));
    let c: Vec<f64> = mult.iter().map(|v| cfg.c_l * v).collect();
    let ell = weighted_soft_solve(&expanded, &y, &c, cfg.gamma_g, Some(&mult))?;
    Ok(ps
        .points()
        .zip(ps.labels())
        .map(|(x, &yl)| {
            let nearest = backbone
                .points()
                .enumerate()
                .map(|(j, c)| (j, crate::graph::weighted_sq_dist(c, x, &kernel.psi)))
                .fold((0, f64::INFINITY), |b, c| if c.1 < b.1 { c } else { b })
                .0;
            (ell[nearest] - f64::from(yl)).abs()
        })
        .collect())
}

/// Per-task min/max of training scores for linear rescaling to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskScaling {
    pub bounds: Vec<(f64, f64)>,
}

impl TaskScaling {
    /// Fits one `(min, max)` pair per task from its training scores.
    pub fn fit(tasks: &[&[f64]]) -> Result<Self> {
        let bounds = tasks
            .iter()
            .map(|s| {
                let finite = s.iter().copied().filter(|v| v.is_finite());
                let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
                if lo > hi {
                    Err(Error::input("cannot fit scaling on an empty score vector"))
                } else {
                    Ok((lo, hi))
                }
            })
            .collect::<Result<_>>()?;
        Ok(Self { bounds })
    }

    /// `(s − min)/(max − min)` clamped to `[0, 1]`; a constant 0.5 when `max = min`.
    pub fn scale(&self, task: usize, raw: &[f64]) -> Vec<f64> {
        let (lo, hi) = self.bounds[task];
        raw.iter()
            .map(|&s| {
                if hi > lo {
                    ((s - lo) / (hi - lo)).clamp(0.0, 1.0)
                } else {
                    0.5
                }
            })
            .collect()
    }
}
