use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const SMALL: &str = r#"{
  "seed": 3,
  "system": { "k": 4, "lbar": 3, "r": 3, "t_in": 120, "t_out": 60 },
  "data": { "dgp": "SCR", "skus": 2, "dcs": 1, "instances": 2 },
  "policies": ["benchmark", "e2e-pil", "e2e-bpil", "pto-pb", "pto-ppb"],
  "train": { "epochs": 2, "batch_size": 64 },
  "tune": null,
  "boost": { "gamma_grid": [0.9, 1.0, 1.1] },
  "pto": { "scenarios": 20 }
}"#;

fn perishlab(dir: &Path, args: &[&str]) -> Output {
    let cfg = dir.join("config.json");
    if !cfg.exists() {
        fs::write(&cfg, SMALL).unwrap();
    }
    Command::new(env!("CARGO_BIN_EXE_perishlab"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .output()
        .unwrap()
}

fn ok(out: Output) -> Output {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn gen_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        ok(perishlab(
            dir.path(),
            &["gen", "--out", d.to_str().unwrap()],
        ));
    }
    for f in [
        "data/instance_0.csv",
        "data/instance_1.csv",
        "manifest/gen.json",
    ] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let other = dir.path().join("c");
    ok(perishlab(
        dir.path(),
        &["gen", "--seed", "4", "--out", other.to_str().unwrap()],
    ));
    assert_ne!(
        fs::read(a.join("data/instance_0.csv")).unwrap(),
        fs::read(other.join("data/instance_0.csv")).unwrap()
    );
}

#[test]
fn manifest_hashes_match_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    ok(perishlab(
        dir.path(),
        &["gen", "--out", out.to_str().unwrap()],
    ));
    let m: Value =
        serde_json::from_slice(&fs::read(out.join("manifest/gen.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "gen");
    assert_eq!(m["config"]["seed"], 3);
    assert_eq!(m["config_sha256"].as_str().unwrap().len(), 64);
    let outputs = m["outputs"].as_object().unwrap();
    assert_eq!(outputs.len(), 4);
    for (path, hash) in outputs {
        use sha2::Digest;
        let bytes = fs::read(out.join(path)).unwrap();
        assert_eq!(
            hex::encode(sha2::Sha256::digest(&bytes)),
            hash.as_str().unwrap()
        );
    }
}

#[test]
fn full_pipeline_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = out.to_str().unwrap();
    for cmd in ["gen", "train", "eval", "compare"] {
        ok(perishlab(dir.path(), &[cmd, "--out", o, "--workers", "2"]));
    }
    let eval = fs::read_to_string(out.join("reports/eval.csv")).unwrap();
    assert_eq!(eval.lines().count(), 1 + 2 * 5);
    assert!(eval.starts_with("instance,policy,total,"));
    let table = fs::read_to_string(out.join("reports/ttests_table.csv")).unwrap();
    assert!(table.starts_with("policy,benchmark,e2e-pil,e2e-bpil,pto-pb,pto-ppb"));
    let gaps = fs::read_to_string(out.join("reports/gaps.csv")).unwrap();
    assert!(gaps.lines().nth(1).unwrap().ends_with(",0.0"));
    for f in ["e2e-pil", "e2e-pil.train", "e2e-bpil", "pto-pb", "pto-ppb"] {
        assert!(
            out.join(format!("models/instance_1/{f}.json")).exists(),
            "{f}"
        );
    }

    // Evaluating one policy again reproduces its row exactly.
    let again = dir.path().join("again");
    fs::create_dir_all(&again).unwrap();
    for f in ["data", "models"] {
        copy_dir(&out.join(f), &again.join(f));
    }
    ok(perishlab(
        dir.path(),
        &[
            "eval",
            "--policy",
            "e2e-bpil",
            "--out",
            again.to_str().unwrap(),
        ],
    ));
    let one = fs::read_to_string(again.join("reports/eval.csv")).unwrap();
    let row = one.lines().nth(1).unwrap();
    assert!(eval.lines().any(|l| l == row), "{row}");
}

fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for e in fs::read_dir(from).unwrap() {
        let e = e.unwrap();
        if e.file_type().unwrap().is_dir() {
            copy_dir(&e.path(), &to.join(e.file_name()));
        } else {
            fs::copy(e.path(), to.join(e.file_name())).unwrap();
        }
    }
}

#[test]
fn sweep_writes_one_report_per_value() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("config.json"),
        SMALL.replace(
            r#"["benchmark", "e2e-pil", "e2e-bpil", "pto-pb", "pto-ppb"]"#,
            r#"["benchmark"]"#,
        ),
    )
    .unwrap();
    let out = dir.path().join("sw");
    ok(perishlab(
        dir.path(),
        &[
            "sweep",
            "--vary",
            "K",
            "--values",
            "4,5,6,7",
            "--workers",
            "2",
            "--out",
            out.to_str().unwrap(),
        ],
    ));
    for k in 4..=7 {
        assert!(out.join(format!("sweep/K={k}/reports/eval.csv")).exists());
    }
    let summary = fs::read_to_string(out.join("reports/sweep_K.csv")).unwrap();
    assert_eq!(summary.lines().count(), 5);
}

#[test]
fn contract_violations_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = out.to_str().unwrap();
    let r = perishlab(dir.path(), &["eval", "--out", o]);
    assert!(!r.status.success());
    assert!(String::from_utf8_lossy(&r.stderr).contains("missing artifact"));

    let r = perishlab(
        dir.path(),
        &["sweep", "--vary", "zeta", "--values", "1", "--out", o],
    );
    assert!(!r.status.success());

    let bad = dir.path().join("bad");
    fs::create_dir_all(&bad).unwrap();
    fs::write(bad.join("config.json"), r#"{"seed": 1, "sytem": {}}"#).unwrap();
    let r = perishlab(&bad, &["gen", "--out", o]);
    assert!(!r.status.success());
    assert!(String::from_utf8_lossy(&r.stderr).contains("unknown field"));

    let r = perishlab(dir.path(), &["train", "--policy", "e2e-bb", "--out", o]);
    assert!(!r.status.success());
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("st");
    let r = ok(perishlab(
        dir.path(),
        &["selftest", "--out", out.to_str().unwrap()],
    ));
    let text = String::from_utf8_lossy(&r.stdout);
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 6);
    assert!(out.join("reports/selftest.json").exists());
}

#[test]
fn theory_writes_curves() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("config.json"),
        r#"{"theory": {"experiment": {"n_grid": [30, 60], "seeds": 5, "test_size": 2000}}}"#,
    )
    .unwrap();
    let out = dir.path().join("th");
    ok(perishlab(
        dir.path(),
        &["theory", "--out", out.to_str().unwrap()],
    ));
    let curves = fs::read_to_string(out.join("reports/curves.csv")).unwrap();
    assert_eq!(curves.lines().count(), 5);
    assert!(curves.contains("60,constrained,"));
}
