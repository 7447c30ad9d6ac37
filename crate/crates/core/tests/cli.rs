use std::path::Path;
use std::process::{Command, Output};

fn gramsight(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gramsight"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_artifact_names_the_producing_command() {
    let tmp = tempfile::tempdir().unwrap();
    let o = gramsight(tmp.path(), &["synth", "--out", "."]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = gramsight(tmp.path(), &["train", "--config", "gramsight.json"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("run `gramsight select` first"), "{}", stderr(&o));
}

#[test]
fn invalid_config_lists_every_bad_field() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(
        tmp.path().join("bad.json"),
        r#"{"n": 0, "batches": 0, "logreg": {"c": -1}, "mlp": {"hidden": 0}, "synth": {"classes": 12}}"#,
    )
    .unwrap();
    let o = gramsight(tmp.path(), &["extract", "--config", "bad.json"]);
    assert!(!o.status.success());
    let err = stderr(&o);
    for field in ["n", "batches", "logreg.c", "mlp.hidden", "synth.classes"] {
        let named = err
            .split([';', ':'])
            .any(|p| p.trim() == field || p.trim().starts_with(&format!("{field} ")));
        assert!(named, "{field} missing from {err}");
    }
}

#[test]
fn unknown_config_field_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("typo.json"), r#"{"min_dff": 3}"#).unwrap();
    let o = gramsight(tmp.path(), &["extract", "--config", "typo.json"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("min_dff"), "{}", stderr(&o));
}

#[test]
fn bad_thread_count_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_gramsight"))
        .args(["synth", "--out", "."])
        .current_dir(tmp.path())
        .env("GRAMSIGHT_THREADS", "zero")
        .output()
        .unwrap();
    assert!(!o.status.success());
    assert!(stderr(&o).contains("GRAMSIGHT_THREADS"));
}

#[test]
fn logreg_class_report_is_a_ranked_table() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    for args in [
        &["synth", "--out", "."][..],
        &["extract", "--config", "gramsight.json"],
        &["select", "--config", "gramsight.json", "--scorer", "chi2"],
        &["train", "--config", "gramsight.json", "--model", "logreg"],
        &[
            "interpret",
            "--config",
            "gramsight.json",
            "--model",
            "logreg",
            "--class",
            "3",
            "--top",
            "15",
        ],
    ] {
        let o = gramsight(dir, args);
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
    }
    let reports = dir.join("run/reports");
    let text = std::fs::read_to_string(reports.join("interpret.logreg.class3.weight.txt")).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("#gramsight {"));
    assert_eq!(lines.next().unwrap(), "class_weight (class 3)");
    assert_eq!(
        lines.next().unwrap().split_whitespace().collect::<Vec<_>>(),
        ["Rank", "6-gram", "Weight"]
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split_whitespace().collect()).collect();
    assert_eq!(rows.len(), 15);
    let mut last = f64::INFINITY;
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r[0], (i + 1).to_string());
        assert_eq!(r[1].len(), 12);
        assert!(r[1].bytes().all(|b| b.is_ascii_hexdigit()));
        let w: f64 = r[2].parse().unwrap();
        assert!(w <= last);
        last = w;
    }

    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(reports.join("interpret.logreg.class3.weight.json")).unwrap())
            .unwrap();
    assert_eq!(json["config"]["class"], 3);
    let entries = json["report"]["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 15);
    assert_eq!(entries[0]["ngram"], rows[0][1]);
}
