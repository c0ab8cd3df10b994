use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn leda(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_leda"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Generated data plus a small config whose `data` entry is relative to the config file.
struct Workspace {
    _dir: tempfile::TempDir,
    root: PathBuf,
    config: PathBuf,
    manifest: PathBuf,
}

fn workspace(epochs: usize) -> Workspace {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let out = leda(&["gen-sbm", "--dim", "10,12,14", "--nodes", "12", "--out", s(&root.join("data"))]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let config = root.join("run.json");
    fs::write(
        &config,
        format!(
            r#"{{"data": "data/manifest.json",
                "model": {{"k": 6, "h": 8, "m": 6, "h_e": 8, "z": 4}},
                "train": {{"epochs": {epochs}, "lr": 0.01}},
                "eval": {{"repeats": 40, "runs": 3}}}}"#
        ),
    )
    .unwrap();
    Workspace {
        manifest: root.join("data/manifest.json"),
        _dir: dir,
        root,
        config,
    }
}

fn without_timestamp(path: &Path) -> Value {
    let mut v: Value = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    let ts = v.as_object_mut().unwrap().remove("timestamp");
    assert!(ts.and_then(|t| t.as_u64()).is_some(), "missing timestamp in {}", path.display());
    v
}

#[test]
fn full_workflow_is_reproducible() {
    let ws = workspace(20);
    let ckpt = ws.root.join("model.ckpt");
    let out = leda(&["pretrain", "--config", s(&ws.config), "--out", s(&ckpt)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let target = ["--ckpt", s(&ckpt), "--manifest", s(&ws.manifest), "--config", s(&ws.config)];
    let runs: [(&str, &[&str]); 4] = [
        ("eval-fewshot", &["--domain", "sbm-2"]),
        ("eval-linear", &["--domain", "sbm-2"]),
        ("mi-diag", &["--domains", "sbm-0,sbm-1"]),
        ("embed", &["--domain", "sbm-1"]),
    ];
    for (cmd, extra) in runs {
        let mut reports = Vec::new();
        for i in 0..2 {
            let path = ws.root.join(format!("{cmd}-{i}.out"));
            let mut args = vec![cmd];
            if cmd == "embed" {
                args.extend(["--ckpt", s(&ckpt), "--manifest", s(&ws.manifest)]);
            } else {
                args.extend(target);
            }
            args.extend(extra);
            args.extend(["--out", s(&path)]);
            let out = leda(&args);
            assert_eq!(code(&out), 0, "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
            reports.push(path);
        }
        if cmd == "embed" {
            let text = fs::read_to_string(&reports[0]).unwrap();
            assert_eq!(text.lines().count(), 36);
            assert_eq!(text, fs::read_to_string(&reports[1]).unwrap());
        } else {
            let a = without_timestamp(&reports[0]);
            assert_eq!(a, without_timestamp(&reports[1]), "{cmd} differs between runs");
            assert!(a.get("config").is_some(), "{cmd} report lacks its config");
        }
    }

    let fewshot = without_timestamp(&ws.root.join("eval-fewshot-0.out"));
    assert_eq!(fewshot["repeats"], 40);
    assert_eq!(fewshot["config"]["train"]["seed"], 66666);
    let mi = without_timestamp(&ws.root.join("mi-diag-0.out"));
    assert_eq!(mi["delta"], "not-estimated");
    assert_eq!(mi["pairs"], 36 * 36);
    assert!(mi["entropy"]["sbm-0"].is_number());
}

#[test]
fn ablation_report_lists_each_variant() {
    let ws = workspace(5);
    let report = ws.root.join("ablate.json");
    let out = leda(&[
        "ablate",
        "--config",
        s(&ws.config),
        "--test-domain",
        "sbm-2",
        "--variant",
        "full,no-lda",
        "--repeats",
        "10",
        "--out",
        s(&report),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let doc = without_timestamp(&report);
    let rows = doc["rows"].as_array().unwrap();
    let names: Vec<&str> = rows.iter().map(|r| r["variant"].as_str().unwrap()).collect();
    assert_eq!(names, ["full", "no-lda"]);
    assert_eq!(doc["train_domains"], serde_json::json!(["sbm-0", "sbm-1"]));
}

#[test]
fn failures_map_to_exit_codes() {
    let ws = workspace(2);
    let ckpt = ws.root.join("model.ckpt");
    assert_eq!(code(&leda(&["pretrain", "--config", s(&ws.config), "--out", s(&ckpt)])), 0);

    // Usage and configuration problems.
    assert_eq!(code(&leda(&["pretrain"])), 2);
    assert_eq!(code(&leda(&["--threads", "0", "gen-sbm", "--out", s(&ws.root.join("x"))])), 2);
    let bad = ws.root.join("bad.json");
    fs::write(&bad, r#"{"model": {"kk": 3}}"#).unwrap();
    let out = leda(&["pretrain", "--config", s(&bad), "--out", s(&ws.root.join("b.ckpt"))]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("kk"));

    // Data and format problems.
    let out = leda(&["eval-fewshot", "--ckpt", s(&ckpt), "--manifest", s(&ws.manifest), "--domain", "nope"]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("sbm-0"));
    let broken = ws.root.join("broken.ckpt");
    let mut bytes = fs::read(&ckpt).unwrap();
    bytes.truncate(bytes.len() / 2);
    fs::write(&broken, bytes).unwrap();
    let out = leda(&["eval-fewshot", "--ckpt", s(&broken), "--manifest", s(&ws.manifest), "--domain", "sbm-0"]);
    assert_eq!(code(&out), 3);

    // Numeric failure: a step size that blows the loss up.
    let wild = ws.root.join("wild.json");
    fs::write(
        &wild,
        r#"{"data": "data/manifest.json", "model": {"k": 6, "h": 8, "m": 6, "h_e": 8, "z": 4},
            "train": {"epochs": 50, "lr": 1e200}}"#,
    )
    .unwrap();
    let out = leda(&["pretrain", "--config", s(&wild), "--out", s(&ws.root.join("w.ckpt"))]);
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!ws.root.join("w.ckpt").exists());
}
