use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use unimrp::synthetic;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_unimrp"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn ok(out: Output) -> Output {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn data(dir: &Path, n: usize) -> synthetic::SyntheticFiles {
    let corpus = synthetic::corpus(n, 11);
    let emb = synthetic::embeddings(&corpus, 16, 2, 16, 3);
    synthetic::write_files(dir, &corpus, &emb).unwrap()
}

/// train, parse and evaluate, returning (predictions, score report).
fn pipeline(files: &synthetic::SyntheticFiles, work: &Path, jobs: &str) -> (Vec<u8>, Vec<u8>) {
    let s = |p: &Path| p.to_str().unwrap().to_string();
    ok(bin()
        .args(["train", "--config"])
        .arg(config("small.toml"))
        .args(["--framework", "dm,psd", "--seed", "5", "--scale", "0.5", "--jobs", jobs, "--name", "det"])
        .args(["--graphs", &s(&files.graphs), "--companion", &s(&files.companion)])
        .args(["--static", &s(files.statics.as_ref().unwrap())])
        .args(["--contextual", &s(files.contextual.as_ref().unwrap())])
        .arg("--out")
        .arg(work)
        .output()
        .unwrap());
    let model = work.join("det/model");
    let pred = work.join("pred.mrp");
    let report = work.join("scores.json");
    ok(bin()
        .args(["parse", "--model", &s(&model), "--jobs", jobs, "--companion", &s(&files.companion)])
        .args(["--static", &s(files.statics.as_ref().unwrap())])
        .args(["--contextual", &s(files.contextual.as_ref().unwrap())])
        .args(["--out", &s(&pred)])
        .output()
        .unwrap());
    ok(bin()
        .args(["evaluate", "--gold", &s(&files.graphs), "--pred", &s(&pred), "--framework", "dm,psd"])
        .args(["--out", &s(&report)])
        .output()
        .unwrap());
    (std::fs::read(pred).unwrap(), std::fs::read(report).unwrap())
}

#[test]
fn same_seed_gives_identical_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let files = data(&tmp.path().join("data"), 12);
    let a = pipeline(&files, &tmp.path().join("a"), "1");
    let b = pipeline(&files, &tmp.path().join("b"), "1");
    assert!(!a.0.is_empty());
    assert!(a.0 == b.0, "prediction files differ");
    assert!(a.1 == b.1, "score reports differ");
    let c = pipeline(&files, &tmp.path().join("c"), "2");
    assert!(a.0 == c.0 && a.1 == c.1, "thread count changed the outputs");
    let run = tmp.path().join("a/det");
    for f in ["config.toml", "split.json", "metrics.jsonl", "summary.json", "model/model.json"] {
        assert!(run.join(f).exists(), "missing {f}");
    }
}

#[test]
fn identical_files_score_one() {
    let tmp = tempfile::tempdir().unwrap();
    let files = data(tmp.path(), 6);
    let out = ok(bin()
        .args(["evaluate", "--gold"])
        .arg(&files.graphs)
        .arg("--pred")
        .arg(&files.graphs)
        .arg("--out")
        .arg(tmp.path().join("r.json"))
        .output()
        .unwrap());
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.contains("1.0000"), "{table}");
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(tmp.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(json["macro_f1"].as_f64(), Some(1.0));
}

#[test]
fn missing_model_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let files = data(tmp.path(), 2);
    let out = bin()
        .args(["parse", "--model"])
        .arg(tmp.path().join("nowhere"))
        .arg("--companion")
        .arg(&files.companion)
        .arg("--out")
        .arg(tmp.path().join("p.mrp"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn bad_arguments_exit_two() {
    let out = bin().args(["train", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = bin().args(["evaluate", "--gold", "a", "--pred", "b", "--framework", "xyz"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn split_writes_disjoint_manifests() {
    let tmp = tempfile::tempdir().unwrap();
    let files = data(&tmp.path().join("data"), 20);
    let out_dir = tmp.path().join("split");
    ok(bin()
        .args(["split", "--config"])
        .arg(config("small.toml"))
        .args(["--scale", "0.25"])
        .arg("--graphs")
        .arg(&files.graphs)
        .arg("--companion")
        .arg(&files.companion)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap());
    let read = |n: &str| -> Vec<String> {
        std::fs::read_to_string(out_dir.join(n))
            .map(|t| t.lines().map(String::from).collect())
            .unwrap_or_default()
    };
    let train = read("train.ids");
    assert!(!train.is_empty());
    for fw in ["dm", "psd", "eds", "ucca", "amr"] {
        for part in ["validation-i", "validation-ii"] {
            for id in read(&format!("{part}.{fw}.ids")) {
                assert!(!train.contains(&id), "{id} in train and {part}");
            }
        }
    }
}

#[test]
fn convert_without_model_uses_rules() {
    let tmp = tempfile::tempdir().unwrap();
    let files = data(tmp.path(), 4);
    let out = tmp.path().join("eds.mrp");
    ok(bin()
        .args(["convert", "--pred"])
        .arg(&files.graphs)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap());
    let graphs = unimrp::graph::read_mrp(std::io::BufReader::new(std::fs::File::open(out).unwrap())).unwrap();
    assert_eq!(graphs.len(), 4);
    assert!(graphs.iter().all(|g| g.framework == unimrp::Framework::Eds));
}

#[test]
fn shipped_configs_parse() {
    for name in ["small.toml", "single.toml", "multitask.toml"] {
        let text = std::fs::read_to_string(config(name)).unwrap();
        let cfg = unimrp::trainer::TrainConfig::from_toml(&text).unwrap();
        cfg.validate().unwrap();
    }
}
