//! Graph-based semi-supervised learning and conditional anomaly detection.
//!
//! The crate is organised bottom-up:
//!
//! | module | contents |
//! |--------|----------|
//! | [`graph`] | point sets, Gaussian similarity graphs, Laplacians, stationary distribution |
//! | [`solver`] | preconditioned conjugate gradient and dense LU |
//! | [`harmonic`] | hard/regularized, soft and block-decomposed harmonic solutions |
//! | [`online`] | doubling k-centers quantizer and the compact harmonic solution |
//! | [`joint`] | alternating backbone quantization and label propagation |
//! | [`cad`] | λ-RWCAD, SoftHAD, backbone SoftHAD, weighted k-NN, score scaling |
//! | [`cuts`] | max-margin graph cuts on harmonic-induced labels |
//! | [`data`] | synthetic generators with exact posteriors, label flipping |
//! | [`eval`] | AUROC and rank statistics |
//! | [`io`] | CSV and config formats |
//! | [`plan`] | multi-run experiment orchestration |

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod cad;
pub mod cuts;
pub mod data;
pub mod error;
pub mod eval;
pub mod graph;
pub mod harmonic;
pub mod io;
pub mod joint;
pub mod online;
pub mod plan;
pub mod rng;
pub mod solver;
pub mod sparse;

pub use error::{Error, Result};
pub use graph::{build_graph, GraphConfig, GraphMode, PointSet, SigmaRule, SimilarityGraph};
pub use harmonic::{SoftConfig, SoftLabels};
