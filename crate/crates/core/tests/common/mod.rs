//! Generators and dense oracles shared by the integration tests.
#![allow(dead_code)]

use graphlearn::graph::{PointSet, SimilarityGraph};
use graphlearn::rng::{seeded, Rng};
use graphlearn::sparse::CsrMatrix;
use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> Rng {
    seeded(seed)
}

pub fn gauss(r: &mut Rng) -> f64 {
    StandardNormal.sample(r)
}

pub fn uniform_points(r: &mut Rng, n: usize, p: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..p).map(|_| r.random::<f64>()).collect()).collect()
}

/// Random symmetric weights with the given edge density plus a random
/// spanning path, so the graph is connected.
pub fn random_connected_graph(r: &mut Rng, n: usize, density: f64) -> SimilarityGraph {
    let mut w = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            if r.random::<f64>() < density {
                let v = r.random_range(0.05..1.0);
                w[i][j] = v;
                w[j][i] = v;
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, r.random_range(0..=i));
    }
    for k in 1..n {
        let (a, b) = (order[k - 1], order[k]);
        if w[a][b] == 0.0 {
            let v = r.random_range(0.05..1.0);
            w[a][b] = v;
            w[b][a] = v;
        }
    }
    SimilarityGraph::from_dense(&w).unwrap()
}

/// `n_l` labeled nodes (at least one of each class when `n_l ≥ 2`), rest 0.
pub fn random_labels(r: &mut Rng, n: usize, n_l: usize) -> Vec<i8> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        idx.swap(i, r.random_range(0..=i));
    }
    let mut labels = vec![0i8; n];
    for (k, &i) in idx.iter().take(n_l).enumerate() {
        labels[i] = match k {
            0 => 1,
            1 => -1,
            _ if r.random::<bool>() => 1,
            _ => -1,
        };
    }
    labels
}

pub fn dense(m: &CsrMatrix) -> DMatrix<f64> {
    let d = m.to_dense();
    DMatrix::from_fn(d.len(), d.len(), |i, j| d[i][j])
}

pub fn graph_dense(g: &SimilarityGraph) -> DMatrix<f64> {
    dense(g.weights())
}

/// Dense `D − W`.
pub fn dense_laplacian(g: &SimilarityGraph) -> DMatrix<f64> {
    let w = graph_dense(g);
    let d = DMatrix::from_diagonal(&DVector::from_iterator(w.nrows(), w.row_iter().map(|r| r.sum())));
    d - w
}

/// Oracle for the clamped harmonic solution via a dense LU solve.
pub fn dense_hard_harmonic(g: &SimilarityGraph, labels: &[i8], gamma_g: f64) -> Vec<f64> {
    let l = dense_laplacian(g);
    let w = graph_dense(g);
    let u: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 0).collect();
    let lab: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] != 0).collect();
    let a = DMatrix::from_fn(u.len(), u.len(), |i, j| l[(u[i], u[j])] + if i == j { gamma_g } else { 0.0 });
    let b = DVector::from_fn(u.len(), |i, _| lab.iter().map(|&j| w[(u[i], j)] * f64::from(labels[j])).sum());
    let x = a.lu().solve(&b).expect("nonsingular");
    let mut out: Vec<f64> = labels.iter().map(|&l| f64::from(l)).collect();
    for (k, &i) in u.iter().enumerate() {
        out[i] = x[k];
    }
    out
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Two interleaved half circles with Gaussian noise; the first moon is class +1.
pub fn two_moons(r: &mut Rng, n: usize, noise: f64) -> (Vec<Vec<f64>>, Vec<i8>) {
    let mut pts = Vec::with_capacity(n);
    let mut cls = Vec::with_capacity(n);
    for i in 0..n {
        let upper = i % 2 == 0;
        let t = std::f64::consts::PI * r.random::<f64>();
        let (x, y) = if upper { (t.cos(), t.sin()) } else { (1.0 - t.cos(), 0.5 - t.sin()) };
        pts.push(vec![x + noise * gauss(r), y + noise * gauss(r)]);
        cls.push(if upper { 1 } else { -1 });
    }
    (pts, cls)
}

/// Hides all but the first `per_class` examples of each class.
pub fn keep_labels(classes: &[i8], per_class: usize) -> Vec<i8> {
    let (mut pos, mut neg) = (0, 0);
    classes
        .iter()
        .map(|&c| {
            let seen = if c > 0 { &mut pos } else { &mut neg };
            *seen += 1;
            if *seen <= per_class {
                c
            } else {
                0
            }
        })
        .collect()
}

pub fn point_set(points: Vec<Vec<f64>>, labels: Vec<i8>) -> PointSet {
    PointSet::new(points, labels).unwrap()
}
