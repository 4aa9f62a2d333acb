//! Synthetic datasets with known conditional anomaly ground truth.
//!
//! Two families: Gaussian-mixture class conditionals, where the true score
//! `P(y ≠ yᵢ | xᵢ)` is available in closed form, and the planar "core" layout
//! of overlapping uniform squares with planted mislabeled points and two tiny
//! far-away groups.

use std::path::Path;

use rand::seq::index::sample;
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::graph::PointSet;
use crate::io::KvConfig;
use crate::rng::{self, Rng};

#[derive(Debug, Clone, PartialEq)]
struct Component {
    weight: f64,
    mean: Vec<f64>,
    chol: Vec<Vec<f64>>,
    /// `−½(p ln 2π) − Σ ln Lᵢᵢ`.
    log_norm: f64,
}

impl Component {
    fn new(weight: f64, mean: Vec<f64>, cov: &[Vec<f64>]) -> Result<Self> {
        let p = mean.len();
        if cov.len() != p || cov.iter().any(|r| r.len() != p) {
            return Err(Error::input(format!("covariance must be {p}×{p}")));
        }
        let chol = cholesky(cov)?;
        let log_det_half: f64 = (0..p).map(|i| chol[i][i].ln()).sum();
        Ok(Self {
            weight,
            mean,
            chol,
            log_norm: -0.5 * p as f64 * (2.0 * std::f64::consts::PI).ln() - log_det_half,
        })
    }

    fn log_pdf(&self, x: &[f64]) -> f64 {
        // forward substitution for L z = x − μ
        let p = self.mean.len();
        let mut z = vec![0.0; p];
        let mut q = 0.0;
        for i in 0..p {
            let mut acc = x[i] - self.mean[i];
            for k in 0..i {
                acc -= self.chol[i][k] * z[k];
            }
            z[i] = acc / self.chol[i][i];
            q += z[i] * z[i];
        }
        self.log_norm - 0.5 * q
    }

    fn draw(&self, r: &mut Rng) -> Vec<f64> {
        let p = self.mean.len();
        let z: Vec<f64> = (0..p).map(|_| r.sample(StandardNormal)).collect();
        (0..p)
            .map(|i| self.mean[i] + (0..=i).map(|k| self.chol[i][k] * z[k]).sum::<f64>())
            .collect()
    }
}

/// Lower Cholesky factor; rejects matrices that are not symmetric positive definite.
pub fn cholesky(a: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let p = a.len();
    for i in 0..p {
        for j in 0..i {
            let tol = 1e-12 * (a[i][j].abs() + a[j][i].abs()).max(1.0);
            if (a[i][j] - a[j][i]).abs() > tol {
                return Err(Error::input("covariance is not symmetric"));
            }
        }
    }
    let mut l = vec![vec![0.0; p]; p];
    for i in 0..p {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = a[i][i] - s;
                if !(d > 0.0) || !d.is_finite() {
                    return Err(Error::input("covariance is not positive definite"));
                }
                l[i][i] = d.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    Ok(l)
}

fn log_sum_exp(v: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = v.collect();
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Gaussian mixture per class with class priors.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSpec {
    pub name: String,
    prior_pos: f64,
    pos: Vec<Component>,
    neg: Vec<Component>,
    dim: usize,
}

/// One class's mixture given as `(weight, mean, covariance)` triples.
pub type ClassComponents = Vec<(f64, Vec<f64>, Vec<Vec<f64>>)>;

impl MixtureSpec {
    pub fn new(name: &str, prior_pos: f64, pos: ClassComponents, neg: ClassComponents) -> Result<Self> {
        if !(0.0..=1.0).contains(&prior_pos) {
            return Err(Error::input(format!("prior {prior_pos} outside [0, 1]")));
        }
        let dim = pos
            .first()
            .or(neg.first())
            .map(|c| c.1.len())
            .ok_or_else(|| Error::input("mixture has no components"))?;
        let build = |cs: ClassComponents, class: &str| -> Result<Vec<Component>> {
            if cs.is_empty() {
                return Err(Error::input(format!("class {class} has no components")));
            }
            let total: f64 = cs.iter().map(|c| c.0).sum();
            if cs.iter().any(|c| !(c.0 >= 0.0)) || (total - 1.0).abs() > 1e-9 {
                return Err(Error::input(format!("class {class} weights must be nonnegative and sum to 1")));
            }
            cs.into_iter()
                .map(|(w, m, c)| {
                    if m.len() != dim {
                        return Err(Error::input("component means differ in dimension"));
                    }
                    Component::new(w, m, &c)
                })
                .collect()
        };
        Ok(Self {
            name: name.to_string(),
            prior_pos,
            pos: build(pos, "+1")?,
            neg: build(neg, "-1")?,
            dim,
        })
    }

    /// Keys: `name`, `prior_pos`, and per class `pos.`/`neg.` prefixed
    /// `weights` (array), `means` (array of vectors), `covs` (array of matrices).
    pub fn from_config(c: &KvConfig) -> Result<Self> {
        let class = |prefix: &str| -> Result<ClassComponents> {
            let w = c.vec(&format!("{prefix}.weights"))?;
            let m = c.matrix(&format!("{prefix}.means"))?;
            let s = c.matrices(&format!("{prefix}.covs"))?;
            if w.len() != m.len() || w.len() != s.len() {
                return Err(Error::input(format!("`{prefix}` weights, means and covs differ in length")));
            }
            Ok(w.into_iter().zip(m).zip(s).map(|((w, m), s)| (w, m, s)).collect())
        };
        let name = c.str("name").unwrap_or("mixture").to_string();
        Self::new(&name, c.f64("prior_pos")?, class("pos")?, class("neg")?)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_config(&KvConfig::from_file(path)?)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn prior(&self, y: i8) -> f64 {
        if y > 0 {
            self.prior_pos
        } else {
            1.0 - self.prior_pos
        }
    }

    /// `ln p(x | y)`.
    pub fn class_log_density(&self, x: &[f64], y: i8) -> f64 {
        let comps = if y > 0 { &self.pos } else { &self.neg };
        log_sum_exp(comps.iter().map(|c| c.weight.ln() + c.log_pdf(x)))
    }

    /// Exact posterior `P(y = +1 | x)`; the prior when both densities vanish.
    pub fn posterior_pos(&self, x: &[f64]) -> f64 {
        let a = self.prior(1).ln() + self.class_log_density(x, 1);
        let b = self.prior(-1).ln() + self.class_log_density(x, -1);
        if a == f64::NEG_INFINITY && b == f64::NEG_INFINITY {
            return self.prior(1);
        }
        1.0 / (1.0 + (b - a).exp())
    }
}

/// `n` i.i.d. draws: class by prior, component by weight, point by Gaussian.
pub fn gen_gauss_mixture(spec: &MixtureSpec, n: usize, seed: u64) -> Result<PointSet> {
    if n == 0 {
        return Err(Error::input("sample size must be positive"));
    }
    let mut r = rng::seeded(seed);
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let y: i8 = if r.random::<f64>() < spec.prior_pos { 1 } else { -1 };
        let comps = if y > 0 { &spec.pos } else { &spec.neg };
        let u: f64 = r.random();
        let mut acc = 0.0;
        let mut pick = comps.len() - 1;
        for (i, c) in comps.iter().enumerate() {
            acc += c.weight;
            if u < acc {
                pick = i;
                break;
            }
        }
        points.push(comps[pick].draw(&mut r));
        labels.push(y);
    }
    PointSet::new(points, labels)
}

/// `P(y ≠ y_obs | x)` from the exact mixture posteriors.
pub fn true_anomaly_score(spec: &MixtureSpec, x: &[f64], y: i8) -> Result<f64> {
    if x.len() != spec.dim {
        return Err(Error::input(format!("point has {} features, spec has {}", x.len(), spec.dim)));
    }
    let pp = spec.posterior_pos(x);
    Ok(match y {
        1 => 1.0 - pp,
        -1 => pp,
        _ => return Err(Error::input("label must be ±1")),
    })
}

/// Negates the labels of `⌊fraction·n⌋` distinct uniformly chosen points.
pub fn flip_labels(ps: &PointSet, fraction: f64, seed: u64) -> Result<(PointSet, Vec<bool>)> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::input(format!("flip fraction {fraction} outside [0, 1]")));
    }
    let n = ps.len();
    // guard against products like 0.29·100 = 28.999…
    let count = ((fraction * n as f64) + 1e-9).floor().min(n as f64) as usize;
    let mut r = rng::seeded(seed);
    let mut mask = vec![false; n];
    for i in sample(&mut r, n, count) {
        mask[i] = true;
    }
    let labels = ps
        .labels()
        .iter()
        .zip(&mask)
        .map(|(&l, &f)| if f { -l } else { l })
        .collect();
    let mut out = ps.clone();
    out.set_labels(labels)?;
    Ok((out, mask))
}

/// Axis-aligned square `[lo, hi]²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Square {
    pub lo: f64,
    pub hi: f64,
}

impl Square {
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().all(|&v| v >= self.lo && v <= self.hi)
    }

    fn inside(&self, other: &Square) -> bool {
        self.lo >= other.lo && self.hi <= other.hi
    }

    fn overlaps(&self, other: &Square) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }

    fn draw(&self, r: &mut Rng) -> Vec<f64> {
        (0..2).map(|_| r.random_range(self.lo..self.hi)).collect()
    }
}

/// A tiny square with its per-class training counts `(+1, −1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TinyGroup {
    pub square: Square,
    pub pos: usize,
    pub neg: usize,
}

/// Geometry and counts of the core dataset. The big square holds class −1,
/// the inner square class +1. Test counts are `test_factor` times training.
#[derive(Debug, Clone, PartialEq)]
pub struct CoreSpec {
    pub big: Square,
    pub big_count: usize,
    pub inner: Square,
    pub inner_count: usize,
    pub tiny: Vec<TinyGroup>,
    pub anomalies: usize,
    pub test_factor: usize,
}

impl Default for CoreSpec {
    fn default() -> Self {
        Self {
            big: Square { lo: 0.0, hi: 10.0 },
            big_count: 100,
            inner: Square { lo: 4.0, hi: 6.0 },
            inner_count: 50,
            tiny: vec![
                TinyGroup {
                    square: Square { lo: 12.0, hi: 12.5 },
                    pos: 3,
                    neg: 0,
                },
                TinyGroup {
                    square: Square { lo: -2.5, hi: -2.0 },
                    pos: 0,
                    neg: 3,
                },
            ],
            anomalies: 12,
            test_factor: 2,
        }
    }
}

impl CoreSpec {
    pub fn validate(&self) -> Result<()> {
        for s in std::iter::once(&self.big).chain([&self.inner]).chain(self.tiny.iter().map(|t| &t.square)) {
            if !(s.lo < s.hi) || !s.lo.is_finite() || !s.hi.is_finite() {
                return Err(Error::input(format!("square [{}, {}] is empty", s.lo, s.hi)));
            }
        }
        if !self.inner.inside(&self.big) || self.inner == self.big {
            return Err(Error::input("inner square must lie strictly inside the big square"));
        }
        for t in &self.tiny {
            if t.square.overlaps(&self.big) {
                return Err(Error::input("tiny squares must be disjoint from the big square"));
            }
        }
        if self.big_count == 0 || self.inner_count == 0 || self.test_factor == 0 {
            return Err(Error::input("core counts must be positive"));
        }
        Ok(())
    }

    /// Keys: `big`, `inner` (`[lo, hi]`), `big_count`, `inner_count`,
    /// `tiny` (array of `[lo, hi]`), `tiny_counts` (array of `[n_pos, n_neg]`),
    /// `anomalies`, `test_factor`. Missing keys keep their defaults.
    pub fn from_config(c: &KvConfig) -> Result<Self> {
        let d = Self::default();
        let square = |key: &str, default: Square| -> Result<Square> {
            if c.get(key).is_none() {
                return Ok(default);
            }
            match c.vec(key)?.as_slice() {
                [lo, hi] => Ok(Square { lo: *lo, hi: *hi }),
                _ => Err(Error::input(format!("`{key}` must be [lo, hi]"))),
            }
        };
        let tiny = if c.get("tiny").is_some() || c.get("tiny_counts").is_some() {
            let sq = c.matrix("tiny")?;
            let counts = c.matrix("tiny_counts")?;
            if sq.len() != counts.len() {
                return Err(Error::input("`tiny` and `tiny_counts` differ in length"));
            }
            sq.iter()
                .zip(&counts)
                .map(|(s, n)| match (s.as_slice(), n.as_slice()) {
                    ([lo, hi], [p, q]) if *p >= 0.0 && *q >= 0.0 => Ok(TinyGroup {
                        square: Square { lo: *lo, hi: *hi },
                        pos: *p as usize,
                        neg: *q as usize,
                    }),
                    _ => Err(Error::input("tiny entries must be [lo, hi] with counts [n_pos, n_neg]")),
                })
                .collect::<Result<_>>()?
        } else {
            d.tiny.clone()
        };
        let spec = Self {
            big: square("big", d.big)?,
            big_count: c.usize_or("big_count", d.big_count)?,
            inner: square("inner", d.inner)?,
            inner_count: c.usize_or("inner_count", d.inner_count)?,
            tiny,
            anomalies: c.usize_or("anomalies", d.anomalies)?,
            test_factor: c.usize_or("test_factor", d.test_factor)?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_config(&KvConfig::from_file(path)?)
    }
}

/// Where a core-dataset point was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Big,
    Inner,
    Tiny(usize),
    /// Planted class −1 point inside the inner square.
    Anomaly,
}

#[derive(Debug, Clone)]
pub struct CoreDataset {
    pub train: PointSet,
    pub test: PointSet,
    pub test_regions: Vec<Region>,
    /// True conditional anomalies of the test set.
    pub anomaly: Vec<bool>,
}

fn draw_core(spec: &CoreSpec, factor: usize, anomalies: usize, r: &mut Rng) -> Result<(PointSet, Vec<Region>)> {
    let mut pts = Vec::new();
    let mut labels = Vec::new();
    let mut regions = Vec::new();
    for _ in 0..spec.big_count * factor {
        // the big square's class lives outside the inner square
        let x = loop {
            let x = spec.big.draw(r);
            if !spec.inner.contains(&x) {
                break x;
            }
        };
        pts.push(x);
        labels.push(-1);
        regions.push(Region::Big);
    }
    for _ in 0..spec.inner_count * factor {
        pts.push(spec.inner.draw(r));
        labels.push(1);
        regions.push(Region::Inner);
    }
    for (g, t) in spec.tiny.iter().enumerate() {
        for (count, y) in [(t.pos, 1), (t.neg, -1)] {
            for _ in 0..count * factor {
                pts.push(t.square.draw(r));
                labels.push(y);
                regions.push(Region::Tiny(g));
            }
        }
    }
    for _ in 0..anomalies {
        pts.push(spec.inner.draw(r));
        labels.push(-1);
        regions.push(Region::Anomaly);
    }
    Ok((PointSet::new(pts, labels)?, regions))
}

/// Training and test sets of the core layout; anomalies are planted in the test set only.
pub fn gen_core_dataset(spec: &CoreSpec, seed: u64) -> Result<CoreDataset> {
    spec.validate()?;
    let mut r = rng::seeded(seed);
    let (train, _) = draw_core(spec, 1, 0, &mut r)?;
    let (test, test_regions) = draw_core(spec, spec.test_factor, spec.anomalies, &mut r)?;
    let anomaly = test_regions.iter().map(|&g| g == Region::Anomaly).collect();
    Ok(CoreDataset {
        train,
        test,
        test_regions,
        anomaly,
    })
}
