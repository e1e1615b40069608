use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn scgfm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scgfm"))
        .args(args)
        .env_remove("SCGFM_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = scgfm(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Three small labeled graphs in the JSON-lines format.
fn toy(dir: &Path) -> PathBuf {
    let path = dir.join("toy.jsonl");
    std::fs::write(
        &path,
        concat!(
            "{\"n\": 4, \"edges\": [[0,1],[1,2],[2,3],[3,0]], \"label\": 0, \"id\": \"c4\"}\n",
            "{\"n\": 5, \"edges\": [[0,1],[0,2],[1,2],[2,3],[3,4]], \"label\": 1}\n",
            "{\"n\": 3, \"edges\": [[0,1],[1,2]], \"label\": 0}\n",
        ),
    )
    .unwrap();
    path
}

const SMALL: &[&str] = &["--k", "3", "--m-nodes", "5", "--slices", "10", "--hidden", "8"];

fn train_toy(dir: &Path, data: &Path, name: &str) -> PathBuf {
    let out = dir.join(name);
    let mut args = vec!["pretrain", "--data", s(data), "--out", s(&out), "--epochs", "1"];
    args.extend_from_slice(SMALL);
    ok(&args);
    out
}

#[test]
fn help_lists_defaults() {
    let help = ok(&["pretrain", "--help"]);
    for needle in ["[default: 16]", "[default: 32]", "[default: 0.01]", "[default: 0.3]", "[default: 60]", "[default: 42]", "[default: json]"] {
        assert!(help.contains(needle), "missing {needle}");
    }
    let help = ok(&["eval", "--help"]);
    assert!(help.contains("[default: 50]") && help.contains("[default: 5]"));
    assert!(ok(&["--help"]).contains("SCGFM_THREADS"));
}

#[test]
fn pretrain_writes_checkpoint_and_metrics_reproducibly() {
    let dir = TempDir::new().unwrap();
    let data = toy(dir.path());
    let a = train_toy(dir.path(), &data, "a.ckpt");
    let b = train_toy(dir.path(), &data, "b.ckpt");
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let metrics = std::fs::read_to_string(dir.path().join("a.ckpt.metrics.jsonl")).unwrap();
    assert_eq!(metrics.lines().count(), 1);
    let row: serde_json::Value = serde_json::from_str(metrics.lines().next().unwrap()).unwrap();
    assert_eq!(row["epoch"], 1);
}

#[test]
fn config_file_is_strict_and_flags_win() {
    let dir = TempDir::new().unwrap();
    let data = toy(dir.path());
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "epochs = 3\nk = 3\nm_nodes = 5\nslices = 10\nhidden = 8\n").unwrap();
    let out = dir.path().join("c.ckpt");
    ok(&["pretrain", "--data", s(&data), "--out", s(&out), "--config", s(&cfg), "--epochs", "2"]);
    let metrics = std::fs::read_to_string(dir.path().join("c.ckpt.metrics.jsonl")).unwrap();
    assert_eq!(metrics.lines().count(), 2);

    std::fs::write(&cfg, "epochs = 1\nlearning_rat = 0.1\n").unwrap();
    let res = scgfm(&["pretrain", "--data", s(&data), "--out", s(&out), "--config", s(&cfg)]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("learning_rat"));
}

#[test]
fn embed_formats_agree() {
    let dir = TempDir::new().unwrap();
    let data = toy(dir.path());
    let ckpt = train_toy(dir.path(), &data, "e.ckpt");
    let (jsonl, bin) = (dir.path().join("z.jsonl"), dir.path().join("z.bin"));
    ok(&["embed", "--checkpoint", s(&ckpt), "--data", s(&data), "--out", s(&jsonl)]);
    ok(&["embed", "--checkpoint", s(&ckpt), "--data", s(&data), "--out", s(&bin), "--output-format", "bin"]);
    let a = scgfm::embed::read_jsonl(&jsonl).unwrap();
    let b = scgfm::embed::read_binary(&bin).unwrap();
    assert_eq!(a.len(), 3);
    assert_eq!(a[0].graph_id, "c4");
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.label, y.label);
        for (u, v) in x.z.iter().zip(&y.z) {
            assert!((u - v).abs() <= 1e-15);
        }
    }
}

#[test]
fn missing_checkpoint_fails() {
    let dir = TempDir::new().unwrap();
    let data = toy(dir.path());
    let out = dir.path().join("z.jsonl");
    let res = scgfm(&["embed", "--checkpoint", "/nonexistent.ckpt", "--data", s(&data), "--out", s(&out)]);
    assert!(!res.status.success());
    assert!(!out.exists());
}

fn separable_embeddings(path: &Path) {
    let mut text = String::new();
    for i in 0..120 {
        let label = i % 2;
        let center = 10.0 * label as f64;
        let jitter = (i as f64 * 0.37).sin() * 0.5;
        text += &format!(
            "{{\"graph_id\": \"g{i}\", \"label\": {label}, \"z\": [{}, {}, {}]}}\n",
            center + jitter,
            -center + 0.3 * jitter,
            jitter
        );
    }
    std::fs::write(path, text).unwrap();
}

#[test]
fn eval_on_separable_embeddings_is_perfect_and_deterministic() {
    let dir = TempDir::new().unwrap();
    let z = dir.path().join("sep.jsonl");
    separable_embeddings(&z);
    let first = ok(&["eval", "--embeddings", s(&z), "--seed", "3"]);
    assert_eq!(first, ok(&["eval", "--embeddings", s(&z), "--seed", "3"]));
    let rows: Vec<serde_json::Value> = first.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), 51);
    assert_eq!(rows[0]["dataset"], "sep");
    assert_eq!(rows[0]["standardize"], true);
    assert_eq!(rows[50]["mean"], 1.0);
}

#[test]
fn eval_names_short_classes() {
    let dir = TempDir::new().unwrap();
    let z = dir.path().join("sep.jsonl");
    separable_embeddings(&z);
    let res = scgfm(&["eval", "--embeddings", s(&z), "--queries", "70"]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("class 0"));
}

#[test]
fn bench_table_has_a_row_per_size() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("bench.csv");
    ok(&["diagnose", "bench", "--sizes", "100,200,400", "--reps", "1", "--slices", "10", "--out", s(&out)]);
    let csv = std::fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.starts_with("n,edges,seconds,ratio"));
}

#[test]
fn gradcheck_passes_on_defaults() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("gc.json");
    ok(&["diagnose", "gradcheck", "--out", s(&out)]);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    for c in report["components"].as_array().unwrap() {
        assert_eq!(c["passed"], true, "{c}");
        if c["component"] == "div" || c["component"] == "rec/decoder" {
            assert!(c["max_rel_error"].as_f64().unwrap() < 1e-4);
        }
    }
}

#[test]
fn synthetic_diagnostics_run_end_to_end() {
    let dir = TempDir::new().unwrap();
    let p = |name: &str| dir.path().join(name);
    let synth = ["--format", "synthetic", "--synthetic-graphs", "24", "--synthetic-max-nodes", "12"];
    let ckpt = p("s.ckpt");
    let mut args = vec!["pretrain", "--out", s(&ckpt), "--epochs", "2"];
    args.extend_from_slice(&synth);
    args.extend_from_slice(SMALL);
    ok(&args);

    let run = |cmd: &[&str]| {
        let mut a = cmd.to_vec();
        a.extend_from_slice(&synth);
        ok(&a)
    };
    let iso = p("iso.csv");
    let summary = run(&["diagnose", "isometry", "--checkpoint", s(&ckpt), "--pairs", "30", "--out", s(&iso)]);
    assert!(summary.contains("\"rho\""));
    assert_eq!(std::fs::read_to_string(&iso).unwrap().lines().count(), 31);

    let corr = p("corr.csv");
    run(&["diagnose", "sgw-corr", "--pairs", "20", "--out", s(&corr)]);
    assert_eq!(std::fs::read_to_string(&corr).unwrap().lines().count(), 21);

    let sur = p("sur.jsonl");
    run(&["diagnose", "surrogate", "--checkpoint", s(&ckpt), "--graphs", "4", "--iterations", "3", "--out", s(&sur)]);
    assert_eq!(std::fs::read_to_string(&sur).unwrap().lines().count(), 5);

    let rew = p("rew.jsonl");
    run(&["diagnose", "rewire", "--checkpoint", s(&ckpt), "--epsilons", "0,0.5", "--out", s(&rew)]);
    assert_eq!(std::fs::read_to_string(&rew).unwrap().lines().count(), 2);

    let z = p("z.jsonl");
    run(&["embed", "--checkpoint", s(&ckpt), "--out", s(&z)]);
    let fisher = p("fisher.jsonl");
    ok(&["diagnose", "fisher", "--embeddings", s(&z), "--checkpoint", s(&ckpt), "--out", s(&fisher)]);
    let rows: Vec<serde_json::Value> = std::fs::read_to_string(&fisher)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows.iter().filter(|r| r["dominant"] == true).count(), 1);
}
