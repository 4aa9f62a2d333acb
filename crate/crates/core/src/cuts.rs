//! Max-margin graph cuts.
//!
//! Two stages: the regularized harmonic solution induces labels on the
//! unlabeled points, points with confidence `|ℓ*ᵢ| < ε` are dropped, and a
//! kernel hinge-loss classifier `min Σ hinge + γ‖f‖²_K` is fit to the rest.
//!
//! The trainer is SMO on the dual with second-order working-set selection,
//! box `C = 1/(2γ)` and an unregularized bias. It stops when the duality gap
//! falls below the requested relative tolerance.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::graph::{build_graph, GraphConfig, PointSet, SimilarityGraph};
use crate::harmonic::hard_harmonic;
use crate::io::fmt_f64;
use crate::rng;

pub const DEFAULT_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    Linear,
    /// `(⟨a, b⟩ + 1)^degree`.
    Polynomial { degree: u32 },
    /// `exp(−‖a − b‖² / (2 width²))`.
    Rbf { width: f64 },
}

impl KernelSpec {
    pub fn cubic() -> Self {
        KernelSpec::Polynomial { degree: 3 }
    }

    /// RBF with width `√p·σ`, `σ` resolved by the graph config's rule.
    pub fn default_rbf(ps: &PointSet, cfg: &GraphConfig) -> Result<Self> {
        let sigma = cfg.resolve_sigma(ps)?;
        Ok(KernelSpec::Rbf {
            width: (ps.dim() as f64).sqrt() * sigma,
        })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Rbf { width } if !(width > 0.0 && width.is_finite()) => {
                Err(Error::input(format!("rbf width must be positive, got {width}")))
            }
            KernelSpec::Polynomial { degree: 0 } => Err(Error::input("polynomial degree must be ≥ 1")),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            KernelSpec::Linear => dot(a, b),
            KernelSpec::Polynomial { degree } => (dot(a, b) + 1.0).powi(degree as i32),
            KernelSpec::Rbf { width } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-d2 / (2.0 * width * width)).exp()
            }
        }
    }

    /// Parses `linear`, `cubic`, `poly:D` or `rbf:W`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || Error::input(format!("unknown kernel `{s}` (expected linear, cubic, poly:D or rbf:W)"));
        let k = match s.split_once(':') {
            None if s == "linear" => KernelSpec::Linear,
            None if s == "cubic" => KernelSpec::cubic(),
            Some(("poly", d)) => KernelSpec::Polynomial {
                degree: d.parse().map_err(|_| bad())?,
            },
            Some(("rbf", w)) => KernelSpec::Rbf {
                width: w.parse().map_err(|_| bad())?,
            },
            _ => return Err(bad()),
        };
        k.validate()?;
        Ok(k)
    }
}

impl std::fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            KernelSpec::Linear => write!(f, "linear"),
            KernelSpec::Polynomial { degree } => write!(f, "poly:{degree}"),
            KernelSpec::Rbf { width } => write!(f, "rbf:{}", fmt_f64(*width)),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Runs the hard harmonic solution and keeps nodes whose confidence reaches
/// `epsilon`, paired with the sign of their soft label. Labeled nodes are
/// always kept with their given label; nodes with `ℓ*ᵢ = 0` carry no sign and
/// are dropped.
pub fn induce_labels(g: &SimilarityGraph, labels: &[i8], gamma_g: f64, epsilon: f64) -> Result<Vec<(usize, i8)>> {
    if !(epsilon >= 0.0) {
        return Err(Error::input(format!("ε must be nonnegative, got {epsilon}")));
    }
    let sl = hard_harmonic(g, labels, gamma_g)?;
    Ok(sl
        .values
        .iter()
        .enumerate()
        .filter_map(|(i, &v)| {
            if labels[i] != 0 {
                Some((i, labels[i]))
            } else if v != 0.0 && v.abs() >= epsilon {
                Some((i, if v > 0.0 { 1 } else { -1 }))
            } else {
                None
            }
        })
        .collect())
}

/// Solver settings for [`train_maxmargin`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxMarginConfig {
    /// Weight `γ` of `‖f‖²_K`.
    pub gamma: f64,
    /// Relative duality-gap tolerance.
    pub tol: f64,
    pub max_iter: usize,
    /// Random feasible starting point instead of `α = 0`.
    pub init_seed: Option<u64>,
}

impl MaxMarginConfig {
    pub fn new(gamma: f64) -> Self {
        Self {
            gamma,
            tol: 1e-6,
            max_iter: 1_000_000,
            init_seed: None,
        }
    }
}

/// Trained kernel classifier `f(x) = Σ coefᵢ k(xᵢ, x) + bias`, `coefᵢ = αᵢ yᵢ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CutClassifier {
    pub kernel: KernelSpec,
    /// Indices (into the training set) of the retained examples.
    pub retained: Vec<usize>,
    pub points: Vec<Vec<f64>>,
    pub coef: Vec<f64>,
    pub bias: f64,
    pub gamma: f64,
    /// `Σ hinge + γ‖f‖²_K` at the returned solution.
    pub objective: f64,
    pub duality_gap: f64,
    pub iterations: usize,
}

impl CutClassifier {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.points
            .iter()
            .zip(&self.coef)
            .filter(|(_, &c)| c != 0.0)
            .map(|(p, c)| c * self.kernel.eval(p, x))
            .sum::<f64>()
            + self.bias
    }

    /// Decision value and predicted class; `f(x) = 0` maps to `+1`.
    pub fn predict(&self, x: &[f64]) -> (f64, i8) {
        let f = self.decision(x);
        (f, if f >= 0.0 { 1 } else { -1 })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "kernel {}", self.kernel);
        let _ = writeln!(s, "bias {}", fmt_f64(self.bias));
        let _ = writeln!(s, "gamma {}", fmt_f64(self.gamma));
        let _ = writeln!(s, "objective {}", fmt_f64(self.objective));
        let _ = writeln!(s, "retained {}", self.retained.len());
        for ((i, c), p) in self.retained.iter().zip(&self.coef).zip(&self.points) {
            let _ = write!(s, "{i} {}", fmt_f64(*c));
            for v in p {
                let _ = write!(s, " {}", fmt_f64(*v));
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str, source: &Path) -> Result<Self> {
        let err = |m: String| Error::parse(source, m);
        let mut lines = text.lines();
        let mut header = |key: &str| -> Result<String> {
            let line = lines.next().ok_or_else(|| err(format!("missing `{key}` line")))?;
            line.strip_prefix(key)
                .and_then(|r| r.strip_prefix(' '))
                .map(str::to_string)
                .ok_or_else(|| err(format!("expected `{key}`, found `{line}`")))
        };
        let kernel = KernelSpec::parse(&header("kernel")?).map_err(|e| err(e.to_string()))?;
        let num = |s: String| s.parse::<f64>().map_err(|_| err(format!("bad number `{s}`")));
        let bias = num(header("bias")?)?;
        let gamma = num(header("gamma")?)?;
        let objective = num(header("objective")?)?;
        let count: usize = header("retained")?.parse().map_err(|_| err("bad retained count".into()))?;
        let (mut retained, mut coef, mut points) = (Vec::new(), Vec::new(), Vec::new());
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let mut f = line.split_whitespace();
            let i = f.next().and_then(|v| v.parse().ok()).ok_or_else(|| err(format!("bad row `{line}`")))?;
            let vals: Vec<f64> = f
                .map(|v| v.parse().map_err(|_| err(format!("bad number `{v}`"))))
                .collect::<Result<_>>()?;
            if vals.len() < 2 {
                return Err(err(format!("row `{line}` has no features")));
            }
            retained.push(i);
            coef.push(vals[0]);
            points.push(vals[1..].to_vec());
        }
        if retained.len() != count {
            return Err(err(format!("expected {count} rows, found {}", retained.len())));
        }
        Ok(Self {
            kernel,
            retained,
            points,
            coef,
            bias,
            gamma,
            objective,
            duality_gap: 0.0,
            iterations: 0,
        })
    }
}

const TAU: f64 = 1e-12;

/// Minimizes `Σᵢ max(0, 1 − yᵢ f(xᵢ)) + γ‖f‖²_K` over `f = h + b`, `h` in the
/// kernel's RKHS. `retained` holds training indices and their (induced) labels.
pub fn train_maxmargin(ps: &PointSet, retained: &[(usize, i8)], kernel: KernelSpec, cfg: &MaxMarginConfig) -> Result<CutClassifier> {
    kernel.validate()?;
    if !(cfg.gamma > 0.0 && cfg.gamma.is_finite()) {
        return Err(Error::input(format!("γ must be positive, got {}", cfg.gamma)));
    }
    if !(cfg.tol > 0.0) {
        return Err(Error::input("tolerance must be positive"));
    }
    if !(retained.iter().any(|r| r.1 > 0) && retained.iter().any(|r| r.1 < 0)) {
        return Err(Error::input("max-margin training needs both classes among the retained examples"));
    }
    if let Some(&(i, _)) = retained.iter().find(|r| r.0 >= ps.len()) {
        return Err(Error::input(format!("retained index {i} out of range")));
    }
    let n = retained.len();
    let x: Vec<Vec<f64>> = retained.iter().map(|&(i, _)| ps.point(i).to_vec()).collect();
    let y: Vec<f64> = retained.iter().map(|&(_, l)| f64::from(l)).collect();
    let k: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| kernel.eval(&x[i], &x[j])).collect()).collect();
    let c = 1.0 / (2.0 * cfg.gamma);

    let mut alpha = vec![0.0; n];
    if let Some(seed) = cfg.init_seed {
        let mut r = rng::seeded(seed);
        for a in alpha.iter_mut() {
            *a = r.random_range(0.0..c);
        }
        let sum = |s: f64| -> f64 { (0..n).filter(|&i| y[i] == s).map(|i| alpha[i]).sum() };
        let (sp, sn) = (sum(1.0), sum(-1.0));
        let (scale_p, scale_n) = if sp > sn { (sn / sp, 1.0) } else { (1.0, sp / sn) };
        for i in 0..n {
            alpha[i] *= if y[i] > 0.0 { scale_p } else { scale_n };
        }
    }
    // gradient of ½αᵀQα − Σα with Q = (yyᵀ)∘K
    let mut grad: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| y[i] * y[j] * k[i][j] * alpha[j]).sum::<f64>() - 1.0)
        .collect();

    let mut iterations = 0;
    let mut kkt_eps = 1e-3;
    loop {
        let converged_kkt = loop {
            if iterations >= cfg.max_iter {
                break false;
            }
            let Some((i, j)) = select_pair(&alpha, &grad, &y, &k, c, kkt_eps) else {
                break true;
            };
            smo_update(i, j, &mut alpha, &mut grad, &y, &k, c);
            iterations += 1;
        };
        let (objective, dual, _) = objectives(&alpha, &y, &k, c, cfg.gamma);
        let gap = (objective - dual).max(0.0);
        if gap <= cfg.tol * objective.abs().max(1e-300) || kkt_eps < 1e-14 {
            return Ok(finish(retained, x, &alpha, &grad, &y, kernel, cfg.gamma, c, objective, gap, iterations));
        }
        if !converged_kkt {
            return Err(Error::Solver {
                iterations,
                residual: gap / objective.abs().max(1e-300),
            });
        }
        kkt_eps *= 0.1;
    }
}

/// Second-order working-set selection; `None` when the maximal KKT violation is below `eps`.
fn select_pair(alpha: &[f64], grad: &[f64], y: &[f64], k: &[Vec<f64>], c: f64, eps: f64) -> Option<(usize, usize)> {
    let n = alpha.len();
    let mut gmax = f64::NEG_INFINITY;
    let mut i = usize::MAX;
    for t in 0..n {
        let up = if y[t] > 0.0 { alpha[t] < c } else { alpha[t] > 0.0 };
        if up && -y[t] * grad[t] >= gmax {
            gmax = -y[t] * grad[t];
            i = t;
        }
    }
    if i == usize::MAX {
        return None;
    }
    let mut gmax2 = f64::NEG_INFINITY;
    let mut j = usize::MAX;
    let mut best = f64::INFINITY;
    for t in 0..n {
        let low = if y[t] > 0.0 { alpha[t] > 0.0 } else { alpha[t] < c };
        if !low {
            continue;
        }
        let v = y[t] * grad[t];
        gmax2 = gmax2.max(v);
        let diff = gmax + v;
        if diff > 0.0 {
            let mut quad = k[i][i] + k[t][t] - 2.0 * k[i][t];
            if quad <= 0.0 {
                quad = TAU;
            }
            let obj = -diff * diff / quad;
            if obj <= best {
                best = obj;
                j = t;
            }
        }
    }
    if gmax + gmax2 < eps || j == usize::MAX {
        None
    } else {
        Some((i, j))
    }
}

fn smo_update(i: usize, j: usize, alpha: &mut [f64], grad: &mut [f64], y: &[f64], k: &[Vec<f64>], c: f64) {
    let (old_i, old_j) = (alpha[i], alpha[j]);
    let qij = y[i] * y[j] * k[i][j];
    let (mut ai, mut aj) = (old_i, old_j);
    if y[i] != y[j] {
        let mut quad = k[i][i] + k[j][j] + 2.0 * qij;
        if quad <= 0.0 {
            quad = TAU;
        }
        let delta = (-grad[i] - grad[j]) / quad;
        let diff = ai - aj;
        ai += delta;
        aj += delta;
        if diff > 0.0 {
            if aj < 0.0 {
                aj = 0.0;
                ai = diff;
            }
        } else if ai < 0.0 {
            ai = 0.0;
            aj = -diff;
        }
        if diff > 0.0 {
            if ai > c {
                ai = c;
                aj = c - diff;
            }
        } else if aj > c {
            aj = c;
            ai = c + diff;
        }
    } else {
        let mut quad = k[i][i] + k[j][j] - 2.0 * qij;
        if quad <= 0.0 {
            quad = TAU;
        }
        let delta = (grad[i] - grad[j]) / quad;
        let sum = ai + aj;
        ai -= delta;
        aj += delta;
        if sum > c {
            if ai > c {
                ai = c;
                aj = sum - c;
            }
        } else if aj < 0.0 {
            aj = 0.0;
            ai = sum;
        }
        if sum > c {
            if aj > c {
                aj = c;
                ai = sum - c;
            }
        } else if ai < 0.0 {
            ai = 0.0;
            aj = sum;
        }
    }
    alpha[i] = ai;
    alpha[j] = aj;
    let (di, dj) = (ai - old_i, aj - old_j);
    for t in 0..alpha.len() {
        grad[t] += y[t] * (y[i] * k[t][i] * di + y[j] * k[t][j] * dj);
    }
}

/// Bias minimizing the hinge sum for fixed `h(xᵢ) = gᵢ`: the loss is convex
/// piecewise linear in `b` with kinks at `yᵢ − gᵢ`.
fn best_bias(g: &[f64], y: &[f64]) -> f64 {
    let mut kinks: Vec<f64> = g.iter().zip(y).map(|(g, y)| y - g).collect();
    kinks.sort_by(f64::total_cmp);
    // far left every positive term is active with slope −1; each kink adds +1
    let mut slope = -(y.iter().filter(|&&v| v > 0.0).count() as f64);
    for &b in &kinks {
        slope += 1.0;
        if slope >= 0.0 {
            return b;
        }
    }
    kinks.last().copied().unwrap_or(0.0)
}

/// Primal `Σ hinge + γ‖h‖²` at the hinge-optimal bias, the scaled dual value and that bias.
fn objectives(alpha: &[f64], y: &[f64], k: &[Vec<f64>], c: f64, gamma: f64) -> (f64, f64, f64) {
    let n = alpha.len();
    let h: Vec<f64> = (0..n).map(|i| (0..n).map(|j| alpha[j] * y[j] * k[i][j]).sum()).collect();
    let norm2: f64 = (0..n).map(|i| alpha[i] * y[i] * h[i]).sum();
    let b = best_bias(&h, y);
    let hinge: f64 = (0..n).map(|i| (1.0 - y[i] * (h[i] + b)).max(0.0)).sum();
    let primal = hinge + gamma * norm2;
    // SVM dual Σα − ½‖h‖², scaled by 2γ = 1/C to the primal's units
    let dual = (alpha.iter().sum::<f64>() - 0.5 * norm2) / c;
    (primal, dual, b)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    retained: &[(usize, i8)],
    points: Vec<Vec<f64>>,
    alpha: &[f64],
    _grad: &[f64],
    y: &[f64],
    kernel: KernelSpec,
    gamma: f64,
    c: f64,
    objective: f64,
    gap: f64,
    iterations: usize,
) -> CutClassifier {
    let k: Vec<Vec<f64>> = points.iter().map(|a| points.iter().map(|b| kernel.eval(a, b)).collect()).collect();
    let (_, _, bias) = objectives(alpha, y, &k, c, gamma);
    CutClassifier {
        kernel,
        retained: retained.iter().map(|r| r.0).collect(),
        points,
        coef: alpha.iter().zip(y).map(|(a, y)| a * y).collect(),
        bias,
        gamma,
        objective,
        duality_gap: gap,
        iterations,
    }
}

/// Full pipeline: graph on `ps`, induced labels at `(γ_g, ε)`, then the max-margin fit.
pub fn mmgc_fit(
    ps: &PointSet,
    graph_cfg: &GraphConfig,
    gamma_g: f64,
    epsilon: f64,
    kernel: KernelSpec,
    cfg: &MaxMarginConfig,
) -> Result<CutClassifier> {
    let g = build_graph(ps, graph_cfg)?;
    let retained = induce_labels(&g, ps.labels(), gamma_g, epsilon)?;
    train_maxmargin(ps, &retained, kernel, cfg)
}
