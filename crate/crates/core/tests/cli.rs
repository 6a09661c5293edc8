//! End-to-end runs of the `eqodds` binary.

use std::path::Path;
use std::process::{Command, Output};

fn eqodds(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eqodds")).arg("--out-dir").arg(out).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn value<'a>(text: &'a str, key: &str) -> &'a str {
    text.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
}

#[test]
fn simulate_train_predict_citest_chain() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let data = out.join("sample.csv");
    let o = eqodds(out, &["simulate", "--model", "linear", "--n", "300", "--seed", "3", "--a-law", "uniform"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&data).unwrap();
    assert_eq!(text.lines().next(), Some("a,x0,y"));
    assert_eq!(text.lines().count(), 301);

    let o = eqodds(
        out,
        &[
            "train",
            "--data",
            data.to_str().unwrap(),
            "--epochs",
            "3",
            "--hidden",
            "8",
            "--stochastic",
            "1",
            "--lambda",
            "5",
        ],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    let (loss, penalty, objective): (f64, f64, f64) = (
        value(&s, "loss").parse().unwrap(),
        value(&s, "penalty").parse().unwrap(),
        value(&s, "objective").parse().unwrap(),
    );
    assert!((objective - (loss + 5.0 * penalty)).abs() <= 1e-12 * objective.abs().max(1.0));
    assert!(out.join("model.eqom").exists());
    assert!(out.join("model.eqom.txt").exists());

    let model = out.join("model.eqom");
    let o = eqodds(out, &["predict", "--model", model.to_str().unwrap(), "--data", data.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let preds = out.join("predictions.csv");
    let text = std::fs::read_to_string(&preds).unwrap();
    assert_eq!(text.lines().next(), Some("a,x0,y,yhat"));

    let o = eqodds(out, &["citest", "--data", preds.to_str().unwrap(), "--pred-col", "yhat", "--perms", "19"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let p: f64 = value(&stdout(&o), "p_value").parse().unwrap();
    assert!((0.0..=1.0).contains(&p));
}

#[test]
fn check_reports_exact_result_for_builtin_joint() {
    let dir = tempfile::tempdir().unwrap();
    let clf = dir.path().join("f.toml");
    std::fs::write(&clf, "kind = \"deterministic\"\nf = [[0, 1], [1, 0]]\n").unwrap();
    let o = eqodds(dir.path(), &["check", "--joint", "expL", "--clf", clf.to_str().unwrap()]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert_eq!(value(&s, "holds"), "true");
    assert_eq!(value(&s, "eo_violation"), "0");
}

#[test]
fn search_on_expr_finds_only_constants() {
    let dir = tempfile::tempdir().unwrap();
    let o = eqodds(dir.path(), &["search", "--joint", "expR"]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert_eq!(value(&s, "count"), "2");
    assert!(s.lines().filter(|l| l.starts_with("constant=")).all(|l| l == "constant=true"));
}

#[test]
fn postprocess_and_regions_write_their_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let o = eqodds(out, &["postprocess", "--joint", "expR", "--costs", "1,2", "--grid", "11"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: f64 = value(&stdout(&o), "eo_violation").parse().unwrap();
    assert!(v <= 1e-9);
    for f in ["feasible_in.csv", "feasible_in_pseudo.csv", "feasible.svg"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let o = eqodds(out, &["regions", "--joint", "expR", "--grid", "11"]);
    assert!(o.status.success());
    for f in ["regions.svg", "post_vertices.txt", "in_vertices.txt"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn experiment_writes_bundle_with_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let o = eqodds(out, &["experiment", "thm6-equiv", "--seeds", "0..3", "--set", "grid=21"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let bundle = out.join("thm6-equiv");
    let manifest = std::fs::read_to_string(bundle.join("MANIFEST")).unwrap();
    assert!(manifest.contains("seeds=0,1,2\n"));
    assert!(manifest.contains("grid=21\n"));
    assert!(bundle.join("summary.txt").exists());
}

#[test]
fn bad_arguments_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["experiment", "no-such-pipeline"][..],
        &["experiment", "thm6-equiv", "--set", "bogus=1"],
        &["experiment", "thm6-equiv", "--seeds", "x..y"],
        &["postprocess", "--joint", "expL", "--costs", "1"],
    ] {
        let o = eqodds(dir.path(), args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn missing_data_file_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let o = eqodds(dir.path(), &["citest", "--data", "does-not-exist.csv", "--pred-col", "yhat"]);
    assert!(!o.status.success());
    assert!(!o.stderr.is_empty());
}
