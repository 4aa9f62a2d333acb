//! `graphlearn` command-line front end.
//!
//! `--config FILE` supplies defaults for any long option of the chosen
//! subcommand: each `key = value` line becomes `--key value` unless the option
//! is already on the command line.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use graphlearn::cad::TaskScaling;
use graphlearn::cuts::{mmgc_fit, CutClassifier, KernelSpec, MaxMarginConfig, DEFAULT_EPSILON};
use graphlearn::data::{flip_labels, gen_core_dataset, gen_gauss_mixture, true_anomaly_score, CoreSpec, MixtureSpec};
use graphlearn::eval::auroc;
use graphlearn::graph::{build_graph, GraphConfig, GraphMode, SigmaRule};
use graphlearn::harmonic::{hard_harmonic, sign, soft_harmonic, SoftConfig};
use graphlearn::io::{fmt_f64, read_column, read_points_csv, write_points_csv, write_table, KvConfig};
use graphlearn::joint::{elastic_joint, infer_unlabeled, JointConfig, JointInit};
use graphlearn::online::{predict_online, CentroidKernel, QuantizerState};
use graphlearn::plan::{run_plan, score_cad, training_scores, CadMethod, ExperimentPlan, Params};

#[derive(Parser, Debug)]
#[command(name = "graphlearn", version, about = "Graph-based semi-supervised learning and conditional anomaly detection")]
struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// `key = value` file supplying defaults for subcommand options.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a synthetic dataset and its truth sidecar.
    GenData(GenData),
    /// Build a similarity graph and export it as an edge list.
    BuildGraph(BuildGraph),
    /// Hard or soft harmonic solution on a graph over the input.
    Ssl(Ssl),
    /// Stream the input through the doubling quantizer with online predictions.
    OnlineSsl(OnlineSsl),
    /// Joint backbone quantization and label propagation.
    JointSsl(JointSsl),
    /// Train a max-margin graph cut.
    Mmgc(Mmgc),
    /// Apply a trained graph cut to new points.
    MmgcPredict(MmgcPredict),
    /// Conditional anomaly scores of test labels.
    Cad(Cad),
    /// AUROC of a score file against a truth file.
    Eval(Eval),
    /// Execute a multi-run experiment plan.
    RunPlan(RunPlan),
}

#[derive(Args, Debug, Clone)]
struct GraphArgs {
    /// `knn:K` or `eps:E`.
    #[arg(long, default_value = "knn:5")]
    graph: String,
    /// `auto` (a tenth of the mean feature std) or a positive width.
    #[arg(long, default_value = "auto")]
    sigma: String,
}

impl GraphArgs {
    fn config(&self) -> Result<GraphConfig> {
        let mode = match self.graph.split_once(':') {
            Some(("knn", k)) => GraphMode::Knn(k.parse().with_context(|| format!("bad k in `{}`", self.graph))?),
            Some(("eps", e)) => GraphMode::Epsilon(e.parse().with_context(|| format!("bad cut in `{}`", self.graph))?),
            _ => bail!("graph must be `knn:K` or `eps:E`, got `{}`", self.graph),
        };
        let cfg = GraphConfig {
            mode,
            sigma: parse_sigma(&self.sigma)?.map_or(SigmaRule::TenthOfMeanStd, SigmaRule::Explicit),
            ..GraphConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_sigma(s: &str) -> Result<Option<f64>> {
    if s == "auto" {
        return Ok(None);
    }
    let v: f64 = s.parse().with_context(|| format!("sigma must be `auto` or a number, got `{s}`"))?;
    Ok(Some(v))
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum DataKind {
    Mixture,
    Core,
}

#[derive(Args, Debug)]
struct GenData {
    #[arg(long, value_enum)]
    kind: DataKind,
    /// Mixture or core spec file; the core layout has built-in defaults.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Mixture sample size.
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Fraction of mixture labels to negate (before any split).
    #[arg(long, default_value_t = 0.0)]
    flip: f64,
    /// Data file (the training half when `--test-out` is set).
    #[arg(long)]
    out: PathBuf,
    /// Test file. Required for `core`; splits a mixture sample in halves.
    #[arg(long)]
    test_out: Option<PathBuf>,
    /// Truth sidecar describing the rows of the evaluation file.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BuildGraph {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum SslMode {
    Hard,
    Soft,
}

#[derive(Args, Debug)]
struct Ssl {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "hard")]
    mode: SslMode,
    #[arg(long, default_value_t = 1e-6)]
    gamma_g: f64,
    #[arg(long, default_value_t = 10.0)]
    c_l: f64,
    #[arg(long, default_value_t = 0.1)]
    c_u: f64,
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct OnlineSsl {
    #[arg(long)]
    input: PathBuf,
    /// Centroid capacity.
    #[arg(long, default_value_t = 100)]
    k: usize,
    /// Radius multiplier.
    #[arg(long, default_value_t = 1.5)]
    m: f64,
    /// Regularizer; centroid edges below 0.1·γ_g are cut.
    #[arg(long, default_value_t = 0.1)]
    gamma_g: f64,
    /// `auto` (a tenth of the mean feature std of the file) or a width.
    #[arg(long, default_value = "auto")]
    sigma: String,
    #[arg(long)]
    out: PathBuf,
    /// Final quantizer state.
    #[arg(long)]
    state: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum InitArg {
    Random,
    Kmeans,
}

#[derive(Args, Debug)]
struct JointSsl {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 20)]
    k: usize,
    #[arg(long, default_value_t = 1e5)]
    gamma_q: f64,
    #[arg(long, default_value_t = 1e-6)]
    gamma_g: f64,
    #[arg(long, default_value_t = 10.0)]
    f_l: f64,
    #[arg(long, default_value_t = 0.1)]
    f_u: f64,
    #[arg(long, default_value = "auto")]
    sigma: String,
    #[arg(long, default_value_t = 10)]
    max_outer: usize,
    #[arg(long, value_enum, default_value = "random")]
    init: InitArg,
    #[arg(long)]
    out: PathBuf,
    /// Objective value after every outer iteration.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct Mmgc {
    #[arg(long)]
    train: PathBuf,
    /// Weight of the RKHS norm.
    #[arg(long, default_value_t = 0.1)]
    gamma: f64,
    #[arg(long, default_value_t = 1e-6)]
    gamma_g: f64,
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
    /// `linear`, `cubic`, `poly:D`, `rbf` (width √p·σ) or `rbf:W`.
    #[arg(long, default_value = "linear")]
    kernel: String,
    #[command(flatten)]
    graph: GraphArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct MmgcPredict {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum ScaleArg {
    None,
    Minmax,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum MethodArg {
    Rwcad,
    Softhad,
    Knn,
}

impl From<MethodArg> for CadMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Rwcad => CadMethod::Rwcad,
            MethodArg::Softhad => CadMethod::SoftHad,
            MethodArg::Knn => CadMethod::Knn,
        }
    }
}

#[derive(Args, Debug)]
struct Cad {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long, value_enum)]
    method: MethodArg,
    #[arg(long, default_value_t = 1e-3)]
    lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma_g: f64,
    #[arg(long, default_value_t = 1.0)]
    c_l: f64,
    /// Neighbors per node of the SoftHAD graph.
    #[arg(long, default_value_t = 10)]
    graph_k: usize,
    /// `minmax` rescales by the range of the training scores.
    #[arg(long, value_enum, default_value = "none")]
    scale: ScaleArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct Eval {
    #[arg(long)]
    scores: PathBuf,
    #[arg(long, default_value = "raw_score")]
    score_column: String,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long, default_value = "true_anomaly_score")]
    truth_column: String,
    /// Truth values above this threshold are positives.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long, default_value = "")]
    method: String,
    /// `key=value`, repeatable.
    #[arg(long = "param")]
    params: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RunPlan {
    #[arg(long)]
    plan: PathBuf,
    /// Overrides the plan's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> Result<()> {
    let args = with_config_defaults(std::env::args().collect())?;
    let cli = Cli::parse_from(args);
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .context("configuring the thread pool")?;
    let seed = cli.seed;
    match cli.command {
        Command::GenData(a) => gen_data(a, seed.unwrap_or(0)),
        Command::BuildGraph(a) => cmd_build_graph(a),
        Command::Ssl(a) => ssl(a),
        Command::OnlineSsl(a) => online_ssl(a),
        Command::JointSsl(a) => joint_ssl(a, seed.unwrap_or(0)),
        Command::Mmgc(a) => mmgc(a),
        Command::MmgcPredict(a) => mmgc_predict(a),
        Command::Cad(a) => cad(a),
        Command::Eval(a) => eval(a),
        Command::RunPlan(a) => cmd_run_plan(a, seed),
    }
}

/// Appends `--key value` for every config entry whose option is absent.
fn with_config_defaults(mut args: Vec<String>) -> Result<Vec<String>> {
    let mut path = None;
    for (i, a) in args.iter().enumerate() {
        if a == "--config" {
            path = args.get(i + 1).cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        }
    }
    let Some(path) = path else { return Ok(args) };
    let cfg = KvConfig::from_file(Path::new(&path))?;
    let mut extra = Vec::new();
    for key in cfg.keys() {
        let flag = format!("--{}", key.replace('_', "-"));
        let present = args.iter().any(|a| *a == flag || a.starts_with(&format!("{flag}=")));
        if present {
            continue;
        }
        let value = match cfg.get(key).expect("listed key") {
            serde_json::Value::String(s) => s.clone(),
            serde_json::Value::Bool(true) => {
                extra.push(flag);
                continue;
            }
            serde_json::Value::Bool(false) => continue,
            other => other.to_string(),
        };
        extra.push(flag);
        extra.push(value);
    }
    args.extend(extra);
    Ok(args)
}

fn gen_data(a: GenData, seed: u64) -> Result<()> {
    let header = ["index", "true_label", "flipped", "true_anomaly_score"];
    let truth_path = a.truth.clone().unwrap_or_else(|| sibling(&a.out, "truth.csv"));
    match a.kind {
        DataKind::Mixture => {
            let spec_path = a.spec.as_ref().context("--spec is required for mixture data")?;
            let spec = MixtureSpec::from_file(spec_path)?;
            let clean = gen_gauss_mixture(&spec, a.n, seed)?;
            let (noisy, mask) = flip_labels(&clean, a.flip, graphlearn::plan::flip_seed(seed))?;
            let rows_for = |range: std::ops::Range<usize>| -> Result<Vec<Vec<String>>> {
                range
                    .enumerate()
                    .map(|(row, i)| {
                        let s = true_anomaly_score(&spec, noisy.point(i), noisy.labels()[i])?;
                        Ok(vec![
                            row.to_string(),
                            clean.labels()[i].to_string(),
                            u8::from(mask[i]).to_string(),
                            fmt_f64(s),
                        ])
                    })
                    .collect()
            };
            let n = noisy.len();
            match &a.test_out {
                Some(test_out) => {
                    let half = n / 2;
                    write_points_csv(&a.out, &noisy.select(&(0..half).collect::<Vec<_>>()))?;
                    write_points_csv(test_out, &noisy.select(&(half..n).collect::<Vec<_>>()))?;
                    write_table(&truth_path, &header, &rows_for(half..n)?)?;
                }
                None => {
                    write_points_csv(&a.out, &noisy)?;
                    write_table(&truth_path, &header, &rows_for(0..n)?)?;
                }
            }
        }
        DataKind::Core => {
            let spec = match &a.spec {
                Some(p) => CoreSpec::from_file(p)?,
                None => CoreSpec::default(),
            };
            let test_out = a.test_out.as_ref().context("--test-out is required for core data")?;
            let d = gen_core_dataset(&spec, seed)?;
            write_points_csv(&a.out, &d.train)?;
            write_points_csv(test_out, &d.test)?;
            let rows: Vec<Vec<String>> = d
                .anomaly
                .iter()
                .enumerate()
                .map(|(i, &anom)| {
                    let observed = d.test.labels()[i];
                    let true_label = if anom { -observed } else { observed };
                    vec![
                        i.to_string(),
                        true_label.to_string(),
                        u8::from(anom).to_string(),
                        fmt_f64(if anom { 1.0 } else { 0.0 }),
                    ]
                })
                .collect();
            write_table(&truth_path, &header, &rows)?;
        }
    }
    Ok(())
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    path.parent().map_or_else(|| PathBuf::from(name), |d| d.join(name))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn cmd_build_graph(a: BuildGraph) -> Result<()> {
    let ps = read_points_csv(&a.input)?;
    let g = build_graph(&ps, &a.graph.config()?)?;
    write_text(&a.out, &g.to_edge_list())
}

fn labels_table(values: &[f64]) -> Vec<Vec<String>> {
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| vec![i.to_string(), fmt_f64(v), sign(v).to_string()])
        .collect()
}

fn ssl(a: Ssl) -> Result<()> {
    let ps = read_points_csv(&a.input)?;
    let g = build_graph(&ps, &a.graph.config()?)?;
    let sol = match a.mode {
        SslMode::Hard => hard_harmonic(&g, ps.labels(), a.gamma_g)?,
        SslMode::Soft => {
            let cfg = SoftConfig {
                gamma_g: a.gamma_g,
                c_l: a.c_l,
                c_u: a.c_u,
            };
            soft_harmonic(&g, &ps.label_vector(), &cfg)?
        }
    };
    write_table(&a.out, &["index", "soft_label", "predicted_sign"], &labels_table(&sol.values))?;
    Ok(())
}

fn online_ssl(a: OnlineSsl) -> Result<()> {
    let ps = read_points_csv(&a.input)?;
    let sigma = match parse_sigma(&a.sigma)? {
        Some(s) => s,
        None => GraphConfig::default().resolve_sigma(&ps)?,
    };
    let kernel = CentroidKernel::for_gamma(sigma, a.gamma_g);
    let mut state = QuantizerState::new(a.k, a.m)?;
    let mut rows = Vec::with_capacity(ps.len());
    for t in 0..ps.len() {
        let step = predict_online(&mut state, ps.point(t), ps.labels()[t], a.gamma_g, &kernel)?;
        rows.push(vec![
            t.to_string(),
            step.centroid.to_string(),
            step.prediction.unwrap_or(0).to_string(),
            u8::from(step.prediction.is_none()).to_string(),
        ]);
    }
    write_table(&a.out, &["t", "assigned_centroid", "prediction", "abstained"], &rows)?;
    if let Some(p) = &a.state {
        write_text(p, &state.dump())?;
    }
    Ok(())
}

fn joint_ssl(a: JointSsl, seed: u64) -> Result<()> {
    let ps = read_points_csv(&a.input)?;
    let cfg = JointConfig {
        k: a.k,
        gamma_q: a.gamma_q,
        gamma_g: a.gamma_g,
        f_l: a.f_l,
        f_u: a.f_u,
        sigma: parse_sigma(&a.sigma)?,
        max_outer: a.max_outer,
        init: match a.init {
            InitArg::Random => JointInit::Random,
            InitArg::Kmeans => JointInit::KMeans,
        },
        ..JointConfig::default()
    };
    let state = elastic_joint(&ps, &cfg, seed)?;
    let values: Vec<f64> = infer_unlabeled(&ps, &state)?.into_iter().map(|(v, _)| v).collect();
    write_table(&a.out, &["index", "soft_label", "predicted_sign"], &labels_table(&values))?;
    if let Some(p) = &a.trace {
        let rows: Vec<Vec<String>> = state
            .objective
            .iter()
            .enumerate()
            .map(|(i, v)| vec![i.to_string(), fmt_f64(*v)])
            .collect();
        write_table(p, &["iteration", "objective"], &rows)?;
    }
    Ok(())
}

fn mmgc(a: Mmgc) -> Result<()> {
    let ps = read_points_csv(&a.train)?;
    let graph = a.graph.config()?;
    let kernel = if a.kernel == "rbf" {
        KernelSpec::default_rbf(&ps, &graph)?
    } else {
        KernelSpec::parse(&a.kernel)?
    };
    let model = mmgc_fit(&ps, &graph, a.gamma_g, a.epsilon, kernel, &MaxMarginConfig::new(a.gamma))?;
    write_text(&a.out, &model.to_text())
}

fn mmgc_predict(a: MmgcPredict) -> Result<()> {
    let text = fs::read_to_string(&a.model).with_context(|| format!("reading {}", a.model.display()))?;
    let model = CutClassifier::from_text(&text, &a.model)?;
    let ps = read_points_csv(&a.input)?;
    let rows: Vec<Vec<String>> = ps
        .points()
        .enumerate()
        .map(|(i, x)| {
            let (f, y) = model.predict(x);
            vec![i.to_string(), fmt_f64(f), y.to_string()]
        })
        .collect();
    write_table(&a.out, &["index", "decision", "predicted_sign"], &rows)?;
    Ok(())
}

fn cad(a: Cad) -> Result<()> {
    let train = read_points_csv(&a.train)?;
    let test = read_points_csv(&a.test)?;
    let method = CadMethod::from(a.method);
    let params: Params = match method {
        CadMethod::Rwcad => [("lambda".to_string(), a.lambda)].into(),
        CadMethod::SoftHad => [
            ("gamma_g".to_string(), a.gamma_g),
            ("c_l".to_string(), a.c_l),
            ("graph_k".to_string(), a.graph_k as f64),
        ]
        .into(),
        CadMethod::Knn => Params::new(),
    };
    let raw = score_cad(method, &params, &train, &test)?;
    let scaled = match a.scale {
        ScaleArg::None => raw.clone(),
        ScaleArg::Minmax => {
            let ts = training_scores(method, &params, &train)?;
            TaskScaling::fit(&[&ts])?.scale(0, &raw)
        }
    };
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&i, &j| raw[j].total_cmp(&raw[i]).then(i.cmp(&j)));
    let mut rank = vec![0usize; raw.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r + 1;
    }
    let rows: Vec<Vec<String>> = (0..raw.len())
        .map(|i| vec![i.to_string(), fmt_f64(raw[i]), fmt_f64(scaled[i]), rank[i].to_string()])
        .collect();
    write_table(&a.out, &["index", "raw_score", "scaled_score", "rank"], &rows)?;
    Ok(())
}

fn eval(a: Eval) -> Result<()> {
    let scores = read_column(&a.scores, &a.score_column)?;
    let score_idx = read_column(&a.scores, "index")?;
    let truth = read_column(&a.truth, &a.truth_column)?;
    let truth_idx = read_column(&a.truth, "index")?;
    let by_index: BTreeMap<u64, f64> = truth_idx.iter().map(|&i| i as u64).zip(truth).collect();
    let labels = score_idx
        .iter()
        .map(|&i| {
            by_index
                .get(&(i as u64))
                .map(|&t| t > a.threshold)
                .with_context(|| format!("index {i} has no truth entry"))
        })
        .collect::<Result<Vec<bool>>>()?;
    let value = auroc(&scores, &labels)?;
    let mut params = Vec::new();
    for p in &a.params {
        let (k, v) = p.split_once('=').with_context(|| format!("--param expects key=value, got `{p}`"))?;
        let v = match v.parse::<f64>() {
            Ok(x) => fmt_f64(x),
            Err(_) => serde_json::Value::from(v).to_string(),
        };
        params.push(format!("{}: {v}", serde_json::Value::from(k)));
    }
    let mut json = String::from("{\n");
    let _ = writeln!(json, "  \"auroc\": {},", fmt_f64(value));
    let _ = writeln!(json, "  \"n\": {},", scores.len());
    let _ = writeln!(json, "  \"method\": {},", serde_json::Value::from(a.method.as_str()));
    let _ = writeln!(json, "  \"params\": {{{}}}", params.join(", "));
    json.push_str("}\n");
    write_text(&a.out, &json)
}

fn cmd_run_plan(a: RunPlan, seed: Option<u64>) -> Result<()> {
    let mut plan = ExperimentPlan::from_file(&a.plan)?;
    if let Some(out) = a.out {
        plan.out_dir = out;
    }
    if let Some(s) = seed {
        plan.base_seed = s;
    }
    let rows = run_plan(&plan)?;
    let failed = rows.iter().filter(|r| r.run.is_some() && r.status != "ok").count();
    println!(
        "{} cells, {failed} failed; summary at {}",
        rows.iter().filter(|r| r.run.is_some()).count(),
        plan.out_dir.join("summary.csv").display()
    );
    Ok(())
}
