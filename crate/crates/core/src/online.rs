//! Online semi-supervised learning on a quantized graph.
//!
//! A stream is summarised by at most `k` centroids maintained with the
//! doubling algorithm for incremental k-centers (radius multiplied by `m`
//! instead of 2). Each centroid carries a multiplicity, the number of stream
//! points it stands for. Because duplicated vertices behave like resistors in
//! parallel, the harmonic solution on the full stream graph equals the
//! solution of the `k × k` system
//!
//! ```text
//! (Lq_uu + γ_g V_uu) ℓ_u = Wq_ul ℓ_l,   Wq = V W̃ V
//! ```
//!
//! so every step costs O(k³) independently of the stream length.
//!
//! Invariants after each [`QuantizerState::observe`]:
//! * every pair of centroids is at least `R` apart,
//! * at most `k` centroids remain,
//! * multiplicities sum to the number of observed points,
//! * every observed point is within `R·m/(m − 1)` of its centroid.

use crate::error::{Error, Result};
use crate::graph::{connected_components, kernel_from_sq_dist, SimilarityGraph};
use crate::harmonic::{clamped_solve, sign, Origin, SoftLabels};
use crate::sparse::CsrMatrix;

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Centroids, multiplicities and radius of the doubling quantizer.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizerState {
    centroids: Vec<Vec<f64>>,
    multiplicities: Vec<u64>,
    labels: Vec<i8>,
    radius: f64,
    multiplier: f64,
    capacity: usize,
    observed: u64,
    label_conflicts: u64,
}

/// What happened to one stream point.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// Index of the centroid that now represents the point.
    pub centroid: usize,
    /// When the step triggered a repartition: `remap[old] = new` for every
    /// centroid index that existed before the repartition.
    pub remap: Option<Vec<usize>>,
}

impl QuantizerState {
    /// Empty quantizer with capacity `k ≥ 2` and radius multiplier `m > 1`.
    ///
    /// The radius starts unset: until `k + 1` distinct points have been seen,
    /// every distinct point becomes a centroid. On the first overflow `R` is
    /// set to the smallest pairwise centroid distance and then multiplied.
    pub fn new(capacity: usize, multiplier: f64) -> Result<Self> {
        if capacity < 2 {
            return Err(Error::input(format!("capacity must be at least 2, got {capacity}")));
        }
        if !(multiplier.is_finite() && multiplier > 1.0) {
            return Err(Error::input(format!("radius multiplier must be > 1, got {multiplier}")));
        }
        Ok(Self {
            centroids: Vec::new(),
            multiplicities: Vec::new(),
            labels: Vec::new(),
            radius: 0.0,
            multiplier,
            capacity,
            observed: 0,
            label_conflicts: 0,
        })
    }

    /// Quantizer with an explicit starting radius.
    pub fn with_radius(capacity: usize, multiplier: f64, radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::input(format!("radius must be positive, got {radius}")));
        }
        let mut s = Self::new(capacity, multiplier)?;
        s.radius = radius;
        Ok(s)
    }

    pub fn centroids(&self) -> &[Vec<f64>] {
        &self.centroids
    }

    pub fn multiplicities(&self) -> &[u64] {
        &self.multiplicities
    }

    pub fn centroid_labels(&self) -> &[i8] {
        &self.labels
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn multiplier(&self) -> f64 {
        self.multiplier
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn observed(&self) -> u64 {
        self.observed
    }

    /// Labeled points that landed on a centroid already carrying the other label.
    pub fn label_conflicts(&self) -> u64 {
        self.label_conflicts
    }

    pub fn len(&self) -> usize {
        self.centroids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }

    /// Upper bound `R·m/(m − 1)` on any point-to-centroid distance.
    pub fn max_distortion(&self) -> f64 {
        self.radius * self.multiplier / (self.multiplier - 1.0)
    }

    /// Nearest centroid and its distance (lowest index on ties).
    pub fn nearest(&self, x: &[f64]) -> Option<(usize, f64)> {
        self.centroids
            .iter()
            .enumerate()
            .map(|(i, c)| (i, euclid(c, x)))
            .fold(None, |best, cur| match best {
                Some((_, d)) if d <= cur.1 => best,
                _ => Some(cur),
            })
    }

    fn merge_label(&mut self, idx: usize, label: i8) {
        match (self.labels[idx], label) {
            (_, 0) => {}
            (0, l) => self.labels[idx] = l,
            (a, b) if a != b => self.label_conflicts += 1,
            _ => {}
        }
    }

    /// Feeds one stream point.
    pub fn observe(&mut self, x: &[f64], label: i8) -> Result<Observation> {
        if let Some(c) = self.centroids.first() {
            if c.len() != x.len() {
                return Err(Error::input(format!("point has {} features, quantizer holds {}", x.len(), c.len())));
            }
        }
        if x.is_empty() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("stream point must be a finite, non-empty vector"));
        }
        if !matches!(label, -1..=1) {
            return Err(Error::input(format!("label {label} not in {{-1, 0, 1}}")));
        }
        self.observed += 1;
        let absorbed = match self.nearest(x) {
            Some((i, d)) if d < self.radius || (d == 0.0) => Some(i),
            _ => None,
        };
        let mut centroid = match absorbed {
            Some(i) => {
                self.multiplicities[i] += 1;
                self.merge_label(i, label);
                i
            }
            None => {
                self.centroids.push(x.to_vec());
                self.multiplicities.push(1);
                self.labels.push(label);
                self.centroids.len() - 1
            }
        };
        let mut remap: Option<Vec<usize>> = None;
        while self.centroids.len() > self.capacity {
            if self.radius == 0.0 {
                self.radius = self.min_pairwise_distance();
            }
            self.radius *= self.multiplier;
            let step = self.repartition();
            remap = Some(match remap {
                None => step,
                Some(prev) => prev.iter().map(|&i| step[i]).collect(),
            });
        }
        if let Some(r) = &remap {
            centroid = r[centroid];
        }
        Ok(Observation { centroid, remap })
    }

    fn min_pairwise_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.centroids.len() {
            for j in (i + 1)..self.centroids.len() {
                best = best.min(euclid(&self.centroids[i], &self.centroids[j]));
            }
        }
        best
    }

    /// Greedy repartition at the current radius. Centroids are visited in
    /// insertion order; one is kept iff it is at least `R` from every kept
    /// centroid, otherwise it merges into its nearest kept centroid.
    fn repartition(&mut self) -> Vec<usize> {
        let n = self.centroids.len();
        let mut kept: Vec<usize> = Vec::new();
        let mut target = vec![usize::MAX; n];
        for i in 0..n {
            let nearest_kept = kept
                .iter()
                .enumerate()
                .map(|(slot, &k)| (slot, euclid(&self.centroids[i], &self.centroids[k])))
                .fold(None, |best: Option<(usize, f64)>, cur| match best {
                    Some((_, d)) if d <= cur.1 => best,
                    _ => Some(cur),
                });
            match nearest_kept {
                Some((slot, d)) if d < self.radius => target[i] = slot,
                _ => {
                    target[i] = kept.len();
                    kept.push(i);
                }
            }
        }
        let old_centroids = std::mem::take(&mut self.centroids);
        let old_mult = std::mem::take(&mut self.multiplicities);
        let old_labels = std::mem::take(&mut self.labels);
        self.centroids = kept.iter().map(|&i| old_centroids[i].clone()).collect();
        self.multiplicities = kept.iter().map(|&i| old_mult[i]).collect();
        self.labels = kept.iter().map(|&i| old_labels[i]).collect();
        for i in 0..n {
            if kept[target[i]] != i {
                self.multiplicities[target[i]] += old_mult[i];
                self.merge_label(target[i], old_labels[i]);
            }
        }
        target
    }

    /// Plain-text dump: radius, multiplier, then one `index,multiplicity,label,coords...` line per centroid.
    pub fn dump(&self) -> String {
        use crate::io::fmt_f64;
        let mut out = format!(
            "radius={}\nmultiplier={}\ncapacity={}\nobserved={}\nlabel_conflicts={}\n",
            fmt_f64(self.radius),
            fmt_f64(self.multiplier),
            self.capacity,
            self.observed,
            self.label_conflicts
        );
        for (i, c) in self.centroids.iter().enumerate() {
            let coords: Vec<String> = c.iter().map(|v| fmt_f64(*v)).collect();
            out.push_str(&format!("{i},{},{},{}\n", self.multiplicities[i], self.labels[i], coords.join(",")));
        }
        out
    }
}

/// Gaussian kernel and ε-cut used to connect centroids.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CentroidKernel {
    pub sigma: f64,
    pub normalize_by_p: bool,
    /// Weights below this value are dropped.
    pub epsilon: f64,
}

impl CentroidKernel {
    /// Kernel with the ε-cut tied to the regularizer, `ε = 0.1·γ_g`.
    pub fn for_gamma(sigma: f64, gamma_g: f64) -> Self {
        Self {
            sigma,
            normalize_by_p: false,
            epsilon: 0.1 * gamma_g,
        }
    }
}

/// Centroid similarity `W̃`, multiplicities `V`, and the compact graph `Wq = V W̃ V`.
#[derive(Debug, Clone)]
pub struct CompactGraph {
    pub centroid_graph: SimilarityGraph,
    pub multiplicities: Vec<f64>,
    pub graph: SimilarityGraph,
}

impl CompactGraph {
    pub fn new(centroid_graph: SimilarityGraph, multiplicities: Vec<f64>) -> Result<Self> {
        if multiplicities.len() != centroid_graph.len() {
            return Err(Error::input("one multiplicity per centroid required"));
        }
        if multiplicities.iter().any(|v| !(v.is_finite() && *v >= 1.0)) {
            return Err(Error::input("multiplicities must be >= 1"));
        }
        let weights = centroid_graph.weights().scale_rows_cols(&multiplicities, &multiplicities);
        Ok(Self {
            graph: SimilarityGraph::new_unchecked(weights),
            centroid_graph,
            multiplicities,
        })
    }

    pub fn from_state(state: &QuantizerState, kernel: &CentroidKernel) -> Result<Self> {
        if !(kernel.sigma.is_finite() && kernel.sigma > 0.0) {
            return Err(Error::input("centroid kernel width must be positive"));
        }
        let c = state.centroids();
        let k = c.len();
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); k];
        for i in 0..k {
            for j in (i + 1)..k {
                let d2 = euclid(&c[i], &c[j]).powi(2);
                let w = kernel_from_sq_dist(d2, kernel.sigma, c[i].len(), kernel.normalize_by_p);
                if w > 0.0 && w >= kernel.epsilon {
                    rows[i].push((j, w));
                    rows[j].push((i, w));
                }
            }
        }
        for r in rows.iter_mut() {
            r.sort_by_key(|e| e.0);
        }
        let g = SimilarityGraph::new_unchecked(CsrMatrix::from_sorted_rows(rows));
        Self::new(g, state.multiplicities().iter().map(|&v| v as f64).collect())
    }
}

/// Harmonic solution over centroids, `(Lq_uu + γ_g V_uu)⁻¹ Wq_ul ℓ_l`.
pub fn compact_harmonic(cg: &CompactGraph, centroid_labels: &[i8], gamma_g: f64) -> Result<SoftLabels> {
    let n = cg.graph.len();
    if centroid_labels.len() != n {
        return Err(Error::input("one label per centroid required"));
    }
    if centroid_labels.iter().all(|&l| l == 0) {
        return Err(Error::input("at least one labeled centroid is required"));
    }
    if !(gamma_g.is_finite() && gamma_g >= 0.0) {
        return Err(Error::input("γ_g must be finite and nonnegative"));
    }
    let values = clamped_solve(&cg.graph, centroid_labels, gamma_g, &cg.multiplicities)?;
    Ok(SoftLabels {
        values,
        origin: Origin::CompactHs,
    })
}

/// Result of one online prediction step.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineStep {
    pub centroid: usize,
    /// `Some(±1)` or `None` when the learner abstains.
    pub prediction: Option<i8>,
    /// Soft label of the point's centroid (0 when abstaining).
    pub value: f64,
    pub remap: Option<Vec<usize>>,
}

/// Observes `x` and predicts its label from the compact harmonic solution.
///
/// The learner abstains when the point's centroid has no edge to any other
/// centroid (an outlier), or when its component carries no label.
pub fn predict_online(
    state: &mut QuantizerState,
    x: &[f64],
    label: i8,
    gamma_g: f64,
    kernel: &CentroidKernel,
) -> Result<OnlineStep> {
    let obs = state.observe(x, label)?;
    let c = obs.centroid;
    let own = state.centroid_labels()[c];
    if own != 0 {
        return Ok(OnlineStep {
            centroid: c,
            prediction: Some(own),
            value: f64::from(own),
            remap: obs.remap,
        });
    }
    let cg = CompactGraph::from_state(state, kernel)?;
    let abstain = |remap| OnlineStep {
        centroid: c,
        prediction: None,
        value: 0.0,
        remap,
    };
    if cg.graph.neighbors(c).next().is_none() {
        return Ok(abstain(obs.remap));
    }
    // only the component of the point's centroid influences its value
    let comp = connected_components(&cg.graph)
        .into_iter()
        .find(|m| m.binary_search(&c).is_ok())
        .expect("every node belongs to a component");
    let labels: Vec<i8> = comp.iter().map(|&i| state.centroid_labels()[i]).collect();
    if labels.iter().all(|&l| l == 0) {
        return Ok(abstain(obs.remap));
    }
    let sub = CompactGraph::new(
        cg.centroid_graph.subgraph(&comp),
        comp.iter().map(|&i| cg.multiplicities[i]).collect(),
    )?;
    let sol = compact_harmonic(&sub, &labels, gamma_g)?;
    let pos = comp.binary_search(&c).unwrap();
    let value = sol.values[pos];
    let prediction = match sign(value) {
        0 => None,
        s => Some(s),
    };
    Ok(OnlineStep {
        centroid: c,
        prediction,
        value,
        remap: obs.remap,
    })
}
