#![allow(clippy::needless_range_loop)]

mod common;

use common::*;
use graphlearn::graph::{build_graph, GraphConfig, GraphMode, PointSet, SigmaRule};
use graphlearn::harmonic::{soft_harmonic, SoftConfig};
use graphlearn::joint::{
    elastic_joint, infer_unlabeled, nearest_centroid, propagate_on_backbone, quantization_step, BackboneState, JointConfig,
};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng as _;

fn blobs(seed: u64, n: usize, sep: f64) -> (PointSet, Vec<i8>) {
    let mut r = rng(seed);
    let mut pts = Vec::new();
    let mut cls = Vec::new();
    for i in 0..n {
        let c: i8 = if i % 2 == 0 { 1 } else { -1 };
        pts.push(vec![f64::from(c) * sep / 2.0 + gauss(&mut r), gauss(&mut r)]);
        cls.push(c);
    }
    let labels = keep_labels(&cls, 3);
    (point_set(pts, labels), cls)
}

fn random_state(ps: &PointSet, k: usize, seed: u64, soft_spread: f64) -> BackboneState {
    let mut r = rng(seed);
    let labeled = ps.labeled_indices();
    let mut centroids: Vec<Vec<f64>> = labeled.iter().map(|&i| ps.point(i).to_vec()).collect();
    let m = centroids.len();
    for _ in 0..k {
        centroids.push(vec![r.random_range(-4.0..4.0), r.random_range(-2.0..2.0)]);
    }
    let mut targets = vec![0.0; m + k];
    for (t, &i) in targets.iter_mut().zip(&labeled) {
        *t = f64::from(ps.labels()[i]);
    }
    let soft = (0..m + k).map(|_| soft_spread * r.random_range(-1.0..1.0)).collect();
    let assignment = (0..ps.len())
        .map(|i| nearest_centroid(&centroids, ps.point(i), ps.feature_weights()))
        .collect();
    BackboneState {
        centroids,
        m,
        targets,
        soft,
        assignment,
        sigma: 0.5,
        objective: vec![],
        residuals: vec![],
        surrogate: vec![],
        reseeds: 0,
    }
}

/// Centroid equations exactly as stated, with the fixed centroids moved to the right-hand side.
fn dense_centroid_oracle(ps: &PointSet, s: &BackboneState, gamma_q: f64) -> Vec<Vec<f64>> {
    let t = s.centroids.len();
    let n = ps.len() as f64;
    let a = |i: usize, j: usize| (s.soft[i] - s.soft[j]).powi(2) / ((t * t) as f64 * s.sigma * s.sigma);
    let free: Vec<usize> = (s.m..t).collect();
    let mut mat = DMatrix::zeros(free.len(), free.len());
    let mut rhs = DMatrix::zeros(free.len(), ps.dim());
    for (r, &j) in free.iter().enumerate() {
        let members: Vec<usize> = (0..ps.len()).filter(|&i| s.assignment[i] == j).collect();
        let coupling: f64 = (0..t).map(|i| a(i, j)).sum();
        mat[(r, r)] += 2.0 * gamma_q * members.len() as f64 / n - coupling;
        for d in 0..ps.dim() {
            rhs[(r, d)] = 2.0 * gamma_q / n * members.iter().map(|&i| ps.point(i)[d]).sum::<f64>();
        }
        for i in 0..t {
            if i == j {
                continue;
            }
            if i < s.m {
                for d in 0..ps.dim() {
                    rhs[(r, d)] -= a(i, j) * s.centroids[i][d];
                }
            } else {
                mat[(r, i - s.m)] += a(i, j);
            }
        }
        mat[(r, r)] += a(j, j);
    }
    let sol = mat.lu().solve(&rhs).expect("nonsingular");
    (0..t)
        .map(|j| if j < s.m { s.centroids[j].clone() } else { sol.row(j - s.m).iter().copied().collect() })
        .collect()
}

#[test]
fn centroid_solve_matches_dense_oracle() {
    for seed in 0..20 {
        let (ps, _) = blobs(seed, 80, 4.0);
        let mut state = random_state(&ps, 6, seed + 100, 1.0);
        // one free cell emptied on purpose; label terms keep the system solvable
        state.centroids[state.m + 5] = vec![50.0, 50.0];
        state.assignment = (0..ps.len())
            .map(|i| nearest_centroid(&state.centroids, ps.point(i), ps.feature_weights()))
            .collect();
        let cfg = JointConfig { k: 6, gamma_q: 0.5, ..JointConfig::default() };
        let out = quantization_step(&ps, &state, &cfg).unwrap();
        assert!(out.residual < 1e-8);
        assert!(out.reseeded.is_empty());
        let oracle = dense_centroid_oracle(&ps, &state, cfg.gamma_q);
        for (c, o) in out.centroids.iter().zip(&oracle) {
            assert!(max_abs_diff(c, o) < 1e-8 * o.iter().map(|v| v.abs()).fold(1.0, f64::max));
        }
        assert_eq!(&out.centroids[..state.m], &state.centroids[..state.m]);
    }
}

#[test]
fn uniform_labels_give_exact_means() {
    let (ps, _) = blobs(3, 60, 4.0);
    let mut state = random_state(&ps, 5, 9, 0.0);
    state.soft = vec![0.25; state.centroids.len()];
    let cfg = JointConfig { k: 5, ..JointConfig::default() };
    let out = quantization_step(&ps, &state, &cfg).unwrap();
    for j in state.m..state.centroids.len() {
        let members: Vec<usize> = (0..ps.len()).filter(|&i| state.assignment[i] == j).collect();
        if members.is_empty() {
            continue;
        }
        for d in 0..2 {
            let mut s = 0.0;
            for &i in &members {
                s += ps.point(i)[d];
            }
            assert_eq!(out.centroids[j][d], s / members.len() as f64);
        }
    }
}

#[test]
fn propagation_matches_soft_harmonic() {
    let (ps, _) = blobs(4, 80, 4.0);
    let state = random_state(&ps, 10, 4, 0.0);
    let cfg = JointConfig { k: 10, ..JointConfig::default() };
    let got = propagate_on_backbone(&state, &cfg, ps.feature_weights()).unwrap();
    let backbone = point_set(state.centroids.clone(), vec![0; state.centroids.len()]);
    let g = build_graph(
        &backbone,
        &GraphConfig { mode: GraphMode::Knn(cfg.graph_k), sigma: SigmaRule::Explicit(state.sigma), normalize_by_p: true },
    )
    .unwrap();
    let soft = SoftConfig { gamma_g: cfg.gamma_g, c_l: cfg.f_l, c_u: cfg.f_u };
    let oracle = soft_harmonic(&g, &state.targets, &soft).unwrap().values;
    assert!(max_abs_diff(&got, &oracle) < 1e-12);

    let mut zero = state.clone();
    zero.targets = vec![0.0; zero.targets.len()];
    assert!(propagate_on_backbone(&zero, &cfg, ps.feature_weights()).unwrap().iter().all(|v| *v == 0.0));
}

#[test]
fn labeled_backbone_with_heavy_fit_reproduces_targets() {
    let (ps, _) = blobs(5, 40, 4.0);
    let mut state = random_state(&ps, 0, 5, 0.0);
    state.centroids.truncate(state.m);
    let cfg = JointConfig { k: 1, f_l: 1e8, graph_k: 2, ..JointConfig::default() };
    let got = propagate_on_backbone(&state, &cfg, ps.feature_weights()).unwrap();
    assert!(max_abs_diff(&got, &state.targets) < 1e-6);
}

#[test]
fn huge_quantization_cost_gives_kmeans_fixed_point() {
    let (ps, _) = blobs(6, 120, 5.0);
    let cfg = JointConfig { k: 6, gamma_q: 1e12, max_outer: 10, ..JointConfig::default() };
    let s = elastic_joint(&ps, &cfg, 1).unwrap();
    for j in s.m..s.centroids.len() {
        let members: Vec<usize> = (0..ps.len()).filter(|&i| s.assignment[i] == j).collect();
        if members.is_empty() {
            continue;
        }
        for d in 0..2 {
            let mean = members.iter().map(|&i| ps.point(i)[d]).sum::<f64>() / members.len() as f64;
            assert!((s.centroids[j][d] - mean).abs() < 1e-6, "centroid {j} is not the mean of its cell");
        }
    }
}

#[test]
fn one_nn_inference_agrees_with_full_graph() {
    let (ps, cls) = blobs(8, 500, 6.0);
    let cfg = JointConfig { k: 50, ..JointConfig::default() };
    let state = elastic_joint(&ps, &cfg, 2).unwrap();
    let pred = infer_unlabeled(&ps, &state).unwrap();
    let g = build_graph(&ps, &GraphConfig::knn(5)).unwrap();
    let full = soft_harmonic(&g, &ps.label_vector(), &SoftConfig::default()).unwrap();
    let agree = pred.iter().zip(full.signs()).filter(|(p, f)| p.1 == *f).count();
    assert!(agree as f64 >= 0.9 * 500.0, "agreement {agree}/500");
    let correct = pred.iter().zip(&cls).filter(|(p, c)| p.1 == **c).count();
    assert!(correct as f64 >= 0.9 * 500.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn alternation_invariants(seed in 0u64..1000, k in 2usize..12, gq in prop::sample::select(vec![1.0, 1e2, 1e5])) {
        let (ps, _) = blobs(seed, 90, 3.0);
        let cfg = JointConfig { k, gamma_q: gq, ..JointConfig::default() };
        let a = elastic_joint(&ps, &cfg, seed).unwrap();
        let b = elastic_joint(&ps, &cfg, seed).unwrap();
        prop_assert_eq!(&a, &b);
        let labeled: Vec<Vec<f64>> = ps.labeled_indices().iter().map(|&i| ps.point(i).to_vec()).collect();
        prop_assert_eq!(&a.centroids[..a.m], &labeled[..]);
        prop_assert!(a.residuals.iter().all(|r| *r < 1e-8));
        for trace in &a.surrogate {
            for w in trace.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0));
            }
        }
        for (i, &c) in a.assignment.iter().enumerate() {
            prop_assert_eq!(c, nearest_centroid(&a.centroids, ps.point(i), ps.feature_weights()));
        }
    }
}
