use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn pacset(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pacset")).args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json(bytes: &[u8]) -> serde_json::Value {
    serde_json::from_slice(bytes).unwrap()
}

fn synth_dir(dir: &Path) -> PathBuf {
    let out = dir.join("data");
    let o = pacset(&["synth", "--out-dir", p(&out), "--m", "1000", "--n", "1000", "--test-size", "500", "--seed", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn synth_writes_all_files() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_dir(dir.path());
    let lines = |f: &str| std::fs::read_to_string(data.join(f)).unwrap().lines().count();
    assert_eq!(lines("source.csv"), 1001);
    assert_eq!(lines("target.csv"), 1001);
    assert_eq!(lines("test.csv"), 1001);
    assert_eq!(lines("truth.csv"), 501);
}

#[test]
fn calibrate_then_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_dir(dir.path());
    let source = data.join("source.csv");
    let target = data.join("target.csv");
    for method in ["ps", "ps-c", "ps-r", "ps-m", "ps-w", "wsci"] {
        let result = dir.path().join(format!("{method}.json"));
        let o = pacset(&[
            "calibrate", "--scores", p(&source), "--target", p(&target), "--method", method,
            "--grid-step", "1e-4", "--seed", "1", "--out", p(&result),
        ]);
        let code = o.status.code().unwrap();
        // PS ignores the shift and PS-C is conservative; both may be infeasible here
        assert!(code == 0 || code == 2, "{method}: {code} {}", String::from_utf8_lossy(&o.stderr));
        let rep = json(&std::fs::read(&result).unwrap());
        let tau = rep[0]["tau_hat"].as_f64().unwrap();
        assert!(tau >= 0.0);

        let o = pacset(&[
            "evaluate", "--test", p(&data.join("test.csv")), "--truth", p(&data.join("truth.csv")),
            "--result", p(&result),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let ev = json(&o.stdout);
        let err = ev["evaluation"]["error_rate"].as_f64().unwrap();
        let size = ev["evaluation"]["mean_size"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&err) && (0.0..=2.0).contains(&size));
        assert_eq!(ev["tau"].as_f64().unwrap(), tau);
    }
}

#[test]
fn evaluate_compact_layout() {
    let dir = tempfile::tempdir().unwrap();
    let test = dir.path().join("test.csv");
    std::fs::write(&test, "example_id,true_score,n_labels_ge_tau\n0,0.9,1\n1,0.2,3\n2,0.5,2\n").unwrap();
    let o = pacset(&["evaluate", "--test", p(&test), "--tau", "0.3"]);
    assert!(o.status.success());
    let ev = json(&o.stdout);
    assert!((ev["evaluation"]["error_rate"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-12);
    assert_eq!(ev["evaluation"]["mean_size"].as_f64().unwrap(), 2.0);
}

#[test]
fn estimate_iw_reports_bins() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_dir(dir.path());
    let o = pacset(&[
        "estimate-iw", "--scores", p(&data.join("source.csv")), "--target", p(&data.join("target.csv")),
        "--bins", "5",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let est = json(&o.stdout);
    assert_eq!(est["bounds"]["intervals"].as_array().unwrap().len(), 5);
    assert!(est["b_hat"].as_f64().unwrap() >= 1.0);
}

#[test]
fn infeasible_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cal = dir.path().join("cal.csv");
    std::fs::write(&cal, "example_id,true_score\n0,0.3\n1,0.4\n2,0.5\n").unwrap();
    let o = pacset(&["calibrate", "--scores", p(&cal), "--epsilon", "0.001", "--delta", "0.001"]);
    assert_eq!(o.status.code(), Some(2));
    let rep = json(&o.stdout);
    assert_eq!(rep[0]["feasible"], false);
    assert_eq!(rep[0]["tau_hat"].as_f64(), Some(0.0));
}

#[test]
fn unbounded_interval_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cal = dir.path().join("cal.csv");
    std::fs::write(&cal, "example_id,true_score,iw_lower,iw_upper\n0,0.3,0.5,1.0\n1,0.4,0.5,inf\n").unwrap();
    let o = pacset(&["calibrate", "--scores", p(&cal), "--method", "ps-w", "--b", "2"]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn bad_input_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let o = pacset(&["calibrate", "--scores", p(&dir.path().join("missing.csv"))]);
    assert_eq!(o.status.code(), Some(4));
    let cal = dir.path().join("cal.csv");
    std::fs::write(&cal, "example_id,score\n0,0.3\n").unwrap();
    let o = pacset(&["calibrate", "--scores", p(&cal)]);
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains("true_score"));
}

#[test]
fn mc_validate_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for format in ["json", "csv"] {
        let files: Vec<Vec<u8>> = (0..2)
            .map(|i| {
                let out = dir.path().join(format!("run{i}.{format}"));
                let o = pacset(&[
                    "mc-validate", "--method", "ps-r,ps-w", "--iw", "estimated", "--trials", "10", "--m", "500",
                    "--n", "500", "--test-size", "1000", "--grid-step", "1e-4", "--seed", "5", "--format", format,
                    "--out", p(&out),
                ]);
                assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
                std::fs::read(&out).unwrap()
            })
            .collect();
        assert_eq!(files[0], files[1]);
    }
    // 10 trial rows and 6 aggregate rows per method, plus the header
    let csv = std::fs::read_to_string(dir.path().join("run0.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * (10 + 6));
}
