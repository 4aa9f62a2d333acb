use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_graphlearn"))
}

fn config_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../config")
}

fn run(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("spawn graphlearn");
    assert!(
        out.status.success(),
        "graphlearn {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect()
}

fn two_blobs(path: &Path) {
    let mut s = String::from("x0,x1,label\n");
    for i in 0..20 {
        let t = i as f64 * 0.05;
        let label = match i {
            0 => "1",
            10 => "-1",
            _ => "0",
        };
        let cx = if i < 10 { 0.0 } else { 5.0 };
        s.push_str(&format!("{},{},{label}\n", cx + t, (t * 7.0).sin() * 0.3));
    }
    fs::write(path, s).unwrap();
}

#[test]
fn mixture_cad_eval_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let (train, test, truth) = (dir.path().join("train.csv"), dir.path().join("test.csv"), dir.path().join("truth.csv"));
    let spec = config_dir().join("d1.conf");
    run(&[
        "gen-data", "--kind", "mixture", "--spec", p(&spec), "--n", "200", "--flip", "0.05", "--out", p(&train),
        "--test-out", p(&test), "--truth", p(&truth), "--seed", "3",
    ]);
    assert_eq!(rows(&train).len(), 100);
    let t = rows(&truth);
    assert_eq!(t.len(), 100);
    let scores = dir.path().join("scores.csv");
    run(&["cad", "--train", p(&train), "--test", p(&test), "--method", "rwcad", "--lambda", "1e-3", "--scale", "minmax", "--out", p(&scores)]);
    let s = rows(&scores);
    assert_eq!(s.len(), 100);
    let mut ranks: Vec<usize> = s.iter().map(|r| r[3].parse().unwrap()).collect();
    ranks.sort_unstable();
    assert_eq!(ranks, (1..=100).collect::<Vec<_>>());
    for r in &s {
        let scaled: f64 = r[2].parse().unwrap();
        assert!((0.0..=1.0).contains(&scaled));
    }
    let metrics = dir.path().join("m.json");
    run(&["eval", "--scores", p(&scores), "--truth", p(&truth), "--method", "rwcad", "--param", "lambda=1e-3", "--out", p(&metrics)]);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&metrics).unwrap()).unwrap();
    let a = v["auroc"].as_f64().unwrap();
    assert!(a > 0.5 && a <= 1.0, "auroc {a}");
    assert_eq!(v["n"], 100);
    assert_eq!(v["method"], "rwcad");
    assert_eq!(v["params"]["lambda"].as_f64(), Some(1e-3));
}

#[test]
fn gen_data_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let spec = config_dir().join("d2.conf");
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        run(&["--seed", "11", "gen-data", "--kind", "mixture", "--spec", p(&spec), "--n", "50", "--out", p(out), "--truth", p(&dir.path().join("t.csv"))]);
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn core_dataset_and_knn_scores() {
    let dir = tempfile::tempdir().unwrap();
    let (train, test, truth) = (dir.path().join("train.csv"), dir.path().join("test.csv"), dir.path().join("truth.csv"));
    run(&[
        "gen-data", "--kind", "core", "--spec", p(&config_dir().join("core.conf")), "--out", p(&train), "--test-out", p(&test),
        "--truth", p(&truth),
    ]);
    assert_eq!(rows(&train).len(), 156);
    let t = rows(&truth);
    assert_eq!(t.len(), rows(&test).len());
    assert_eq!(t.iter().filter(|r| r[2] == "1").count(), 12);
    let scores = dir.path().join("s.csv");
    run(&["cad", "--train", p(&train), "--test", p(&test), "--method", "knn", "--out", p(&scores)]);
    let metrics = dir.path().join("m.json");
    run(&["eval", "--scores", p(&scores), "--truth", p(&truth), "--truth-column", "flipped", "--out", p(&metrics)]);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&metrics).unwrap()).unwrap();
    assert!(v["auroc"].as_f64().unwrap() > 0.9);
}

#[test]
fn ssl_hard_and_config_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    two_blobs(&data);
    let out = dir.path().join("l.csv");
    run(&["ssl", "--input", p(&data), "--mode", "hard", "--graph", "knn:3", "--out", p(&out)]);
    let r = rows(&out);
    assert_eq!(r.len(), 20);
    assert!(r[..10].iter().all(|row| row[2] == "1"));
    assert!(r[10..].iter().all(|row| row[2] == "-1"));
    assert_eq!(r[0][1].parse::<f64>().unwrap(), 1.0);

    let soft = dir.path().join("soft.csv");
    run(&["ssl", "--config", p(&config_dir().join("ssl.conf")), "--input", p(&data), "--out", p(&soft)]);
    let r = rows(&soft);
    let v0: f64 = r[0][1].parse().unwrap();
    assert!(v0 < 1.0 && v0 > 0.5, "soft solution should not clamp labels: {v0}");
    assert!(r[10..].iter().all(|row| row[2] == "-1"));
}

#[test]
fn build_graph_edge_list() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    two_blobs(&data);
    let out = dir.path().join("g.txt");
    run(&["build-graph", "--input", p(&data), "--graph", "knn:2", "--sigma", "0.5", "--out", p(&out)]);
    let text = fs::read_to_string(&out).unwrap();
    assert!(!text.is_empty());
    for line in text.lines() {
        let f: Vec<&str> = line.split(',').collect();
        let (i, j): (usize, usize) = (f[0].parse().unwrap(), f[1].parse().unwrap());
        let w: f64 = f[2].parse().unwrap();
        assert!(i < j && w > 0.0 && w <= 1.0);
    }
}

#[test]
fn online_and_joint() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    two_blobs(&data);
    let preds = dir.path().join("p.csv");
    let state = dir.path().join("state.txt");
    run(&["online-ssl", "--input", p(&data), "--k", "6", "--gamma-g", "0.01", "--sigma", "1", "--out", p(&preds), "--state", p(&state)]);
    let r = rows(&preds);
    assert_eq!(r.len(), 20);
    assert_eq!(r[0][2], "1");
    assert!(fs::read_to_string(&state).unwrap().starts_with("radius="));

    let jp = dir.path().join("j.csv");
    let trace = dir.path().join("trace.csv");
    run(&["joint-ssl", "--input", p(&data), "--k", "4", "--seed", "2", "--out", p(&jp), "--trace", p(&trace)]);
    let r = rows(&jp);
    assert_eq!(r.len(), 20);
    assert!(r[..10].iter().all(|row| row[2] == "1"));
    assert!(r[10..].iter().all(|row| row[2] == "-1"));
    assert!(!rows(&trace).is_empty());
}

#[test]
fn mmgc_train_and_predict() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    two_blobs(&data);
    let model = dir.path().join("model.txt");
    run(&["mmgc", "--train", p(&data), "--gamma", "0.01", "--kernel", "linear", "--graph", "knn:3", "--out", p(&model)]);
    assert!(fs::read_to_string(&model).unwrap().starts_with("kernel linear"));
    let preds = dir.path().join("preds.csv");
    run(&["mmgc-predict", "--model", p(&model), "--input", p(&data), "--out", p(&preds)]);
    let r = rows(&preds);
    assert!(r[..10].iter().all(|row| row[2] == "1"));
    assert!(r[10..].iter().all(|row| row[2] == "-1"));
}

fn small_plan(dir: &Path) -> PathBuf {
    let plan = dir.join("plan.conf");
    fs::write(
        &plan,
        format!(
            "method = rwcad\ndataset = mixture\nspec = {}\nn = 120\nruns = 3\nseed = 5\nout = res\nlambda = [1e-3, 1e-1]\n",
            p(&config_dir().join("d3.conf"))
        ),
    )
    .unwrap();
    plan
}

#[test]
fn run_plan_reproduces_summary_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let plan = small_plan(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run(&["run-plan", "--plan", p(&plan), "--out", p(&a), "--threads", "1"]);
    run(&["run-plan", "--plan", p(&plan), "--out", p(&b), "--threads", "4"]);
    let sa = fs::read(a.join("summary.csv")).unwrap();
    assert_eq!(sa, fs::read(b.join("summary.csv")).unwrap());
    let text = String::from_utf8(sa).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 * 4);
}

#[test]
fn missing_input_names_the_path() {
    let out = bin().args(["ssl", "--input", "/nonexistent/data.csv", "--out", "/tmp/x.csv"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/data.csv"));
}
