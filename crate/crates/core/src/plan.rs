//! Experiment plans: a method, a parameter grid, a synthetic data source and a
//! number of seeded runs, executed cell by cell with results on disk.
//!
//! Layout under the output directory:
//!
//! ```text
//! <out>/<method>/<grid-hash>/run<k>/scores.csv
//! <out>/<method>/<grid-hash>/run<k>/metrics.json
//! <out>/summary.csv
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::cad::{softhad_score, weighted_knn_score, CadModel};
use crate::data::{flip_labels, gen_core_dataset, gen_gauss_mixture, true_anomaly_score, CoreSpec, MixtureSpec};
use crate::error::{Error, Result};
use crate::eval::{auroc, mean, sample_variance};
use crate::graph::{build_graph, GaussianKernel, GraphConfig, PointSet};
use crate::harmonic::SoftConfig;
use crate::io::{fmt_f64, write_table, KvConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum CadMethod {
    Rwcad,
    SoftHad,
    Knn,
}

impl CadMethod {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "rwcad" => Ok(CadMethod::Rwcad),
            "softhad" => Ok(CadMethod::SoftHad),
            "knn" => Ok(CadMethod::Knn),
            _ => Err(Error::input(format!("unknown method `{s}` (expected rwcad, softhad or knn)"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CadMethod::Rwcad => "rwcad",
            CadMethod::SoftHad => "softhad",
            CadMethod::Knn => "knn",
        }
    }

    /// Grid keys the method reads, with their defaults.
    pub fn parameters(self) -> &'static [(&'static str, f64)] {
        match self {
            CadMethod::Rwcad => &[("lambda", 1e-3)],
            CadMethod::SoftHad => &[("gamma_g", 1.0), ("c_l", 1.0), ("graph_k", 10.0)],
            CadMethod::Knn => &[],
        }
    }
}

/// One point of the parameter grid, keyed by name.
pub type Params = BTreeMap<String, f64>;

fn param(p: &Params, key: &str, method: CadMethod) -> f64 {
    p.get(key)
        .copied()
        .or_else(|| method.parameters().iter().find(|d| d.0 == key).map(|d| d.1))
        .unwrap_or(f64::NAN)
}

/// `a=1;b=0.5` with keys in sorted order.
pub fn params_string(p: &Params) -> String {
    p.iter().map(|(k, v)| format!("{k}={v:e}")).collect::<Vec<_>>().join(";")
}

/// First 12 hex digits of the SHA-256 of the canonical parameter string.
pub fn grid_hash(p: &Params) -> String {
    let digest = Sha256::digest(params_string(p).as_bytes());
    digest[..6].iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// `n` draws, `flip` fraction of labels negated before the 50/50 split.
    Mixture { spec: MixtureSpec, n: usize, flip: f64 },
    Core(CoreSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub method: CadMethod,
    pub grid: Vec<Params>,
    pub data: DataSource,
    pub n_runs: usize,
    pub base_seed: u64,
    pub out_dir: PathBuf,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::input("parameter grid is empty"));
        }
        if self.n_runs == 0 {
            return Err(Error::input("n_runs must be at least 1"));
        }
        Ok(())
    }

    /// Keys: `method`, `dataset` (`mixture` or `core`), `spec` (path, relative
    /// to the plan file), `n`, `flip`, `runs`, `seed`, `out`, plus one scalar or
    /// array per grid parameter of the method.
    pub fn from_file(path: &Path) -> Result<Self> {
        let c = KvConfig::from_file(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let method = CadMethod::parse(c.str("method")?)?;
        let spec_path = |c: &KvConfig| -> Result<PathBuf> { Ok(base.join(c.str("spec")?)) };
        let data = match c.str("dataset")? {
            "mixture" => DataSource::Mixture {
                spec: MixtureSpec::from_file(&spec_path(&c)?)?,
                n: c.usize_or("n", 1000)?,
                flip: c.f64_or("flip", 0.03)?,
            },
            "core" => DataSource::Core(match c.get("spec") {
                Some(_) => CoreSpec::from_file(&spec_path(&c)?)?,
                None => CoreSpec::default(),
            }),
            other => return Err(Error::parse(path, format!("unknown dataset `{other}`"))),
        };
        let mut grid = vec![Params::new()];
        for &(key, default) in method.parameters() {
            let values = if c.get(key).is_some() { c.grid(key)? } else { vec![default] };
            grid = grid
                .iter()
                .flat_map(|g| {
                    values.iter().map(move |&v| {
                        let mut g = g.clone();
                        g.insert(key.to_string(), v);
                        g
                    })
                })
                .collect();
        }
        let out = c.str("out").unwrap_or("results");
        let plan = Self {
            method,
            grid,
            data,
            n_runs: c.usize_or("runs", 10)?,
            base_seed: c.get("seed").map(|_| c.usize("seed")).transpose()?.unwrap_or(0) as u64,
            out_dir: base.join(out),
        };
        plan.validate()?;
        Ok(plan)
    }
}

/// Scores and binary truth of one evaluated test set.
#[derive(Debug, Clone, PartialEq)]
pub struct CellOutput {
    pub scores: Vec<f64>,
    pub truth: Vec<bool>,
    pub auroc: f64,
    pub n_test: usize,
}

/// Anomaly scores of `test` (labels as observed) given fully labeled `train`.
/// SoftHAD scores the test nodes of one graph built over both sets.
pub fn score_cad(method: CadMethod, params: &Params, train: &PointSet, test: &PointSet) -> Result<Vec<f64>> {
    let complete = GraphConfig::epsilon(0.0);
    match method {
        CadMethod::Rwcad => {
            let m = CadModel::fit(train, &complete, param(params, "lambda", method))?;
            test.points().zip(test.labels()).map(|(x, &y)| m.score(x, y)).collect()
        }
        CadMethod::Knn => {
            let k = GaussianKernel::for_points(train, &complete)?;
            test.points()
                .zip(test.labels())
                .map(|(x, &y)| weighted_knn_score(train, &k, x, y, None))
                .collect()
        }
        CadMethod::SoftHad => {
            let all = train.concat(test)?;
            let gk = param(params, "graph_k", method);
            if !(gk >= 1.0 && gk.fract() == 0.0) {
                return Err(Error::input(format!("graph_k must be a positive integer, got {gk}")));
            }
            let g = build_graph(&all, &GraphConfig::knn(gk as usize))?;
            let cfg = SoftConfig {
                gamma_g: param(params, "gamma_g", method),
                c_l: param(params, "c_l", method),
                c_u: param(params, "c_l", method),
            };
            let s = softhad_score(&g, all.labels(), &cfg)?;
            Ok(s[train.len()..].to_vec())
        }
    }
}

/// Scores of the training examples themselves, used to fit score scaling.
/// λ-RWCAD and weighted k-NN leave each example out; SoftHAD runs on a graph
/// over the training set alone.
pub fn training_scores(method: CadMethod, params: &Params, train: &PointSet) -> Result<Vec<f64>> {
    let complete = GraphConfig::epsilon(0.0);
    match method {
        CadMethod::Rwcad => CadModel::fit(train, &complete, param(params, "lambda", method))?.score_training_set(train),
        CadMethod::Knn => {
            let k = GaussianKernel::for_points(train, &complete)?;
            (0..train.len())
                .map(|i| weighted_knn_score(train, &k, train.point(i), train.labels()[i], Some(i)))
                .collect()
        }
        CadMethod::SoftHad => {
            let gk = param(params, "graph_k", method) as usize;
            let g = build_graph(train, &GraphConfig::knn(gk.max(1)))?;
            let c_l = param(params, "c_l", method);
            let cfg = SoftConfig {
                gamma_g: param(params, "gamma_g", method),
                c_l,
                c_u: c_l,
            };
            softhad_score(&g, train.labels(), &cfg)
        }
    }
}

/// Seed for the label flips of a run, decorrelated from the sampling seed.
pub fn flip_seed(seed: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1)
}

/// Samples, corrupts, splits and scores one run. For mixtures the truth is
/// whether the observed label disagrees with the Bayes posterior
/// (true anomaly score above ½); for the core layout it is the planted mask.
pub fn run_cell(method: CadMethod, params: &Params, data: &DataSource, seed: u64) -> Result<CellOutput> {
    let (train, test, truth) = match data {
        DataSource::Mixture { spec, n, flip } => {
            let clean = gen_gauss_mixture(spec, *n, seed)?;
            let (noisy, _) = flip_labels(&clean, *flip, flip_seed(seed))?;
            let half = n / 2;
            let train = noisy.select(&(0..half).collect::<Vec<_>>());
            let test = noisy.select(&(half..*n).collect::<Vec<_>>());
            let truth = test
                .points()
                .zip(test.labels())
                .map(|(x, &y)| true_anomaly_score(spec, x, y).map(|s| s > 0.5))
                .collect::<Result<Vec<bool>>>()?;
            (train, test, truth)
        }
        DataSource::Core(spec) => {
            let d = gen_core_dataset(spec, seed)?;
            (d.train, d.test, d.anomaly)
        }
    };
    let scores = score_cad(method, params, &train, &test)?;
    let a = auroc(&scores, &truth)?;
    Ok(CellOutput {
        n_test: scores.len(),
        scores,
        truth,
        auroc: a,
    })
}

/// One row of the summary table.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: String,
    pub grid_hash: String,
    pub params: String,
    /// Run index, or `None` for the aggregate row.
    pub run: Option<usize>,
    pub seed: Option<u64>,
    pub status: String,
    pub auroc: Option<f64>,
    pub mean: Option<f64>,
    pub variance: Option<f64>,
    pub n_success: Option<usize>,
}

impl SummaryRow {
    fn cells(&self) -> Vec<String> {
        let f = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        vec![
            self.method.clone(),
            self.grid_hash.clone(),
            self.params.clone(),
            self.run.map_or("all".into(), |r| r.to_string()),
            self.seed.map(|s| s.to_string()).unwrap_or_default(),
            self.status.clone(),
            f(self.auroc),
            f(self.mean),
            f(self.variance),
            self.n_success.map(|n| n.to_string()).unwrap_or_default(),
        ]
    }
}

pub const SUMMARY_HEADER: [&str; 10] = [
    "method", "grid_hash", "params", "run", "seed", "status", "auroc", "mean_auroc", "var_auroc", "n_success",
];

fn metrics_json(auroc: f64, n: usize, method: &str, params: &Params, seed: u64, run: usize, flipped_before_split: bool) -> String {
    let mut s = String::from("{\n");
    let _ = writeln!(s, "  \"auroc\": {},", fmt_f64(auroc));
    let _ = writeln!(s, "  \"n\": {n},");
    let _ = writeln!(s, "  \"method\": {},", serde_json::Value::from(method));
    let ps: Vec<String> = params
        .iter()
        .map(|(k, v)| format!("{}: {}", serde_json::Value::from(k.as_str()), fmt_f64(*v)))
        .collect();
    let _ = writeln!(s, "  \"params\": {{{}}},", ps.join(", "));
    let _ = writeln!(s, "  \"seed\": {seed},");
    let _ = writeln!(s, "  \"run\": {run},");
    let _ = writeln!(s, "  \"flips_before_split\": {flipped_before_split}");
    s.push_str("}\n");
    s
}

/// Executes every (grid point, run) cell, writes per-cell files and
/// `summary.csv`, and returns the summary rows (per-run rows followed by the
/// aggregate, grouped by grid hash in sorted order).
pub fn run_plan(plan: &ExperimentPlan) -> Result<Vec<SummaryRow>> {
    plan.validate()?;
    let method = plan.method.name();
    let mut grid: Vec<(String, &Params)> = plan.grid.iter().map(|p| (grid_hash(p), p)).collect();
    grid.sort_by(|a, b| a.0.cmp(&b.0));
    grid.dedup_by(|a, b| a.0 == b.0);
    let cells: Vec<(usize, usize)> = (0..grid.len()).flat_map(|g| (0..plan.n_runs).map(move |r| (g, r))).collect();
    let flipped = matches!(plan.data, DataSource::Mixture { .. });

    let results: Vec<Result<std::result::Result<CellOutput, String>>> = cells
        .par_iter()
        .map(|&(g, r)| {
            let (hash, params) = &grid[g];
            let seed = plan.base_seed.wrapping_add(r as u64);
            let dir = plan.out_dir.join(method).join(hash).join(format!("run{r}"));
            match run_cell(plan.method, params, &plan.data, seed) {
                Ok(out) => {
                    let rows: Vec<Vec<String>> = out
                        .scores
                        .iter()
                        .zip(&out.truth)
                        .enumerate()
                        .map(|(i, (s, t))| vec![i.to_string(), fmt_f64(*s), u8::from(*t).to_string()])
                        .collect();
                    write_table(&dir.join("scores.csv"), &["index", "score", "truth"], &rows)?;
                    let json = metrics_json(out.auroc, out.n_test, method, params, seed, r, flipped);
                    fs::write(dir.join("metrics.json"), json).map_err(|e| Error::io(dir.join("metrics.json"), e))?;
                    Ok(Ok(out))
                }
                Err(e) => Ok(Err(e.to_string())),
            }
        })
        .collect();

    let mut rows = Vec::new();
    for (g, (hash, params)) in grid.iter().enumerate() {
        let mut ok = Vec::new();
        for r in 0..plan.n_runs {
            let seed = plan.base_seed.wrapping_add(r as u64);
            let res = &results[g * plan.n_runs + r];
            let (status, a) = match res {
                Ok(Ok(out)) => {
                    ok.push(out.auroc);
                    ("ok".to_string(), Some(out.auroc))
                }
                Ok(Err(msg)) => (format!("error: {msg}"), None),
                Err(e) => return Err(Error::input(format!("writing results failed: {e}"))),
            };
            rows.push(SummaryRow {
                method: method.into(),
                grid_hash: hash.clone(),
                params: params_string(params),
                run: Some(r),
                seed: Some(seed),
                status,
                auroc: a,
                mean: None,
                variance: None,
                n_success: None,
            });
        }
        rows.push(SummaryRow {
            method: method.into(),
            grid_hash: hash.clone(),
            params: params_string(params),
            run: None,
            seed: None,
            status: if ok.is_empty() { "no successful runs".into() } else { "ok".into() },
            auroc: None,
            mean: (!ok.is_empty()).then(|| mean(&ok)),
            variance: (!ok.is_empty()).then(|| sample_variance(&ok)),
            n_success: Some(ok.len()),
        });
    }
    let table: Vec<Vec<String>> = rows.iter().map(SummaryRow::cells).collect();
    write_table(&plan.out_dir.join("summary.csv"), &SUMMARY_HEADER, &table)?;
    Ok(rows)
}
