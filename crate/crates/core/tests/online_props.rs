#![allow(clippy::needless_range_loop)]

mod common;

use std::time::Instant;

use common::*;
use graphlearn::graph::{build_graph, GraphConfig, GraphMode, SigmaRule, SimilarityGraph};
use graphlearn::harmonic::{hard_harmonic, sign};
use graphlearn::online::{compact_harmonic, predict_online, CentroidKernel, CompactGraph, QuantizerState};
use proptest::prelude::*;
use rand::Rng as _;

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Replays a stream and checks every invariant against the stored history.
fn replay(stream: &[Vec<f64>], k: usize, m: f64) -> Result<(), TestCaseError> {
    let mut q = QuantizerState::new(k, m).unwrap();
    let mut owner: Vec<usize> = Vec::new();
    for (t, x) in stream.iter().enumerate() {
        let obs = q.observe(x, 0).unwrap();
        if let Some(remap) = &obs.remap {
            for o in owner.iter_mut() {
                *o = remap[*o];
            }
        }
        owner.push(obs.centroid);
        let c = q.centroids();
        prop_assert!(c.len() <= k);
        prop_assert_eq!(q.multiplicities().iter().sum::<u64>(), t as u64 + 1);
        let r = q.radius();
        for i in 0..c.len() {
            for j in (i + 1)..c.len() {
                prop_assert!(dist(&c[i], &c[j]) >= r, "centroids {i},{j} closer than R = {r}");
            }
        }
        let bound = q.max_distortion();
        for (s, &o) in owner.iter().enumerate() {
            prop_assert!(dist(&stream[s], &c[o]) <= bound * (1.0 + 1e-12), "point {s} too far at step {t}");
        }
        let mut counts = vec![0u64; c.len()];
        owner.iter().for_each(|&o| counts[o] += 1);
        prop_assert_eq!(&counts[..], q.multiplicities());
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn quantizer_invariants(
        stream in prop::collection::vec(prop::collection::vec(-10.0..10.0f64, 2), 1..300),
        k in 2usize..12,
        m in 1.1f64..3.0,
    ) {
        replay(&stream, k, m)?;
    }

    #[test]
    fn quantizer_invariants_with_duplicates(seed in 0u64..10_000, k in 2usize..8) {
        let mut r = rng(seed);
        let base = uniform_points(&mut r, 15, 3);
        let stream: Vec<Vec<f64>> = (0..200).map(|_| base[r.random_range(0..15)].clone()).collect();
        replay(&stream, k, 1.5)?;
    }
}

#[test]
fn compact_solution_equals_expanded_graph() {
    let mut r = rng(7);
    for _ in 0..20 {
        let unique = uniform_points(&mut r, 8, 2);
        let mult: Vec<usize> = (0..8).map(|_| r.random_range(1..5)).collect();
        let labels_u: Vec<i8> = (0..8).map(|i| match i { 0 => 1, 1 => -1, _ => 0 }).collect();
        let mut pts = Vec::new();
        let mut labels = Vec::new();
        let mut first = Vec::new();
        for i in 0..8 {
            first.push(pts.len());
            for _ in 0..mult[i] {
                pts.push(unique[i].clone());
                labels.push(labels_u[i]);
            }
        }
        let cfg = GraphConfig {
            mode: GraphMode::Epsilon(0.0),
            sigma: SigmaRule::Explicit(0.4),
            normalize_by_p: false,
        };
        let full_g = build_graph(&point_set(pts, labels.clone()), &cfg).unwrap();
        let small_g = build_graph(&point_set(unique, labels_u.clone()), &cfg).unwrap();
        let cg = CompactGraph::new(small_g, mult.iter().map(|&v| v as f64).collect()).unwrap();
        for gamma in [0.0, 0.01, 1.0] {
            let full = hard_harmonic(&full_g, &labels, gamma).unwrap().values;
            let compact = compact_harmonic(&cg, &labels_u, gamma).unwrap().values;
            for i in 0..8 {
                for rep in 0..mult[i] {
                    assert!((full[first[i] + rep] - compact[i]).abs() < 1e-8);
                }
            }
        }
    }
}

#[test]
fn two_cluster_stream_matches_offline_oracle() {
    let mut r = rng(11);
    let mut stream = Vec::new();
    let mut cluster = Vec::new();
    for t in 0..150 {
        let c = if t == 0 { 0 } else if t == 1 { 1 } else { r.random_range(0..2) };
        let cx = if c == 0 { -3.0 } else { 3.0 };
        stream.push(vec![cx + 0.5 * gauss(&mut r), 0.5 * gauss(&mut r)]);
        cluster.push(c);
    }
    let gamma = 0.01;
    let kernel = CentroidKernel::for_gamma(1.0, gamma);
    let mut q = QuantizerState::new(30, 1.5).unwrap();
    for t in 0..stream.len() {
        let label = match t {
            0 => 1,
            1 => -1,
            _ => 0,
        };
        let step = predict_online(&mut q, &stream[t], label, gamma, &kernel).unwrap();
        if t < 2 {
            continue;
        }
        let truth = if cluster[t] == 0 { 1 } else { -1 };
        assert_eq!(step.prediction, Some(truth), "step {t}");
        // offline oracle on every point seen so far, same kernel and cut
        let seen: Vec<Vec<f64>> = stream[..=t].to_vec();
        let mut w = vec![vec![0.0; t + 1]; t + 1];
        for i in 0..=t {
            for j in 0..=t {
                let v = (-dist(&seen[i], &seen[j]).powi(2) / 1.0).exp();
                if i != j && v >= kernel.epsilon {
                    w[i][j] = v;
                }
            }
        }
        let mut labels = vec![0i8; t + 1];
        labels[0] = 1;
        labels[1] = -1;
        let offline = hard_harmonic(&SimilarityGraph::from_dense(&w).unwrap(), &labels, gamma).unwrap();
        assert_eq!(sign(offline.values[t]), truth);
    }
}

#[test]
fn step_cost_does_not_grow_with_stream_length() {
    let k = 32;
    let mut r = rng(5);
    let kernel = CentroidKernel::for_gamma(0.3, 0.01);
    let mut q = QuantizerState::new(k, 1.5).unwrap();
    let mut times = Vec::new();
    for t in 0..(10 * k + 2000) {
        let x = vec![r.random::<f64>(), r.random::<f64>()];
        let label = if t % 97 == 0 { if t % 2 == 0 { 1 } else { -1 } } else { 0 };
        let start = Instant::now();
        predict_online(&mut q, &x, label, 0.01, &kernel).unwrap();
        times.push(start.elapsed().as_secs_f64());
    }
    let median = |s: &[f64]| {
        let mut v = s.to_vec();
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    let early = median(&times[k..k + 1000]);
    let late = median(&times[times.len() - 1000..]);
    assert!(late < 4.0 * early + 1e-5, "median step time grew from {early:e} to {late:e}");
}
