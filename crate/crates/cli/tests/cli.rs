use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn erasmo(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_erasmo"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn write_dataset(dir: &Path) {
    let mut csv = String::from("age,job,balance\n");
    for i in 0..40 {
        if i % 2 == 0 {
            csv += &format!("{},student,{}.5\n", 20 + i % 7, 100 + i);
        } else {
            csv += &format!("{},retired,{}.25\n", 60 + i % 9, 40000 + 37 * i);
        }
    }
    fs::write(dir.join("data.csv"), csv).unwrap();
}

const SMALL: &str = r#"{
  "dataset": "data.csv",
  "model": {"layers": 1, "heads": 2, "embed_dim": 16, "context_len": 64, "vocab_size": 280},
  "train": {"epochs": 1, "warmup_steps": 1},
  "algorithms": [{"kind": "kmeans"}, {"kind": "ahc_ward"}],
  "k_range": [2, 3]
}"#;

#[test]
fn full_run_prints_the_report() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path());
    fs::write(dir.path().join("cfg.json"), SMALL).unwrap();
    let out = erasmo(
        dir.path(),
        &[
            "--config",
            "cfg.json",
            "--seed",
            "7",
            "--variant",
            "nv",
            "--out",
            "o",
            "run",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("approach,algorithm,best_k,ss,chi,dbi\n"));
    assert!(stdout.contains("best: "));
    for f in [
        "report.csv",
        "report.json",
        "manifest.json",
        "embeddings.ersm",
        "projection.csv",
    ] {
        assert!(dir.path().join("o").join(f).exists(), "{f}");
    }
    let cfg = fs::read_to_string(dir.path().join("o/config.json")).unwrap();
    assert!(cfg.contains("\"seed\": 7"));
}

#[test]
fn stages_run_one_at_a_time() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path());
    fs::write(dir.path().join("cfg.json"), SMALL).unwrap();
    for stage in ["encode", "train", "embed", "cluster", "project", "report"] {
        let out = erasmo(dir.path(), &["--config", "cfg.json", "--out", "o", stage]);
        assert!(
            out.status.success(),
            "{stage}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    assert!(dir.path().join("o/manifest.json").exists());
}

#[test]
fn bad_configuration_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("cfg.json"), r#"{"no_such_key": 1}"#).unwrap();
    let out = erasmo(dir.path(), &["--config", "cfg.json", "run"]);
    assert_eq!(out.status.code(), Some(2));

    fs::write(dir.path().join("cfg.json"), r#"{"k_range": [5, 2]}"#).unwrap();
    let out = erasmo(dir.path(), &["--config", "cfg.json", "run"]);
    assert_eq!(out.status.code(), Some(2));

    fs::write(dir.path().join("cfg.json"), r#"{"model": {"layer": 1}}"#).unwrap();
    let out = erasmo(dir.path(), &["--config", "cfg.json", "run"]);
    assert_eq!(out.status.code(), Some(2));

    fs::write(dir.path().join("cfg.json"), r#"{"algorithms": [{"kind": "spectral", "sed": 3}]}"#).unwrap();
    let out = erasmo(dir.path(), &["--config", "cfg.json", "run"]);
    assert_eq!(out.status.code(), Some(2));

    let out = erasmo(dir.path(), &["--config", "missing.json", "run"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn stage_failure_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = erasmo(dir.path(), &["--out", "empty", "cluster"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cluster"));

    let out = erasmo(dir.path(), &["--dataset", "nope.csv", "encode"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn unparseable_flags_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = erasmo(dir.path(), &["--variant", "roman", "run"]);
    assert!(!out.status.success());
}
