use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn hmmboost(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hmmboost"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// Small, well separated corpus so every run takes well under a second.
fn corpus(dir: &Path) {
    let out = hmmboost(
        dir,
        &[
            "gen-synth", "--dataset", "data", "--delta", "0.8", "--malware-samples", "15",
            "--benign-samples", "40", "--min-len", "30", "--max-len", "60", "--seed", "4",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

const SMALL: [&str; 6] = ["--restarts", "3", "--folds", "3", "--top-k", "10"];

#[test]
fn baseline_writes_every_report_file() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path());
    let mut args = vec!["experiment", "baseline", "--dataset", "data", "--family", "all", "--out", "res"];
    args.extend(SMALL);
    let out = hmmboost(dir.path(), &args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let res = dir.path().join("res");
    for f in ["results.csv", "report.json", "roc_baseline_fam_a.csv", "roc_baseline_fam_b.csv"] {
        assert!(res.join(f).is_file(), "{f} missing");
    }
    let csv = fs::read_to_string(res.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 3);
    assert!(stdout(&out).contains("baseline_fam_b"));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path());
    fs::write(
        dir.path().join("run.toml"),
        "dataset = \"data\"\nfamily = \"missing\"\nrestarts = 2\nfolds = 3\ntop_k = 10\n\
         morph_rates = [0.0, 0.5]\nout = \"from_file\"\nthreads = 1\n",
    )
    .unwrap();
    let out = hmmboost(dir.path(), &["experiment", "morph", "--config", "run.toml", "--family", "fam_a"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("from_file/results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 3);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("from_file/report.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["restarts"], 2);
    assert_eq!(report["config"]["family"], "fam_a");
}

#[test]
fn configuration_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path());
    let zero = hmmboost(dir.path(), &["experiment", "baseline", "--dataset", "data", "--restarts", "0"]);
    assert_eq!(code(&zero), 2);
    fs::write(dir.path().join("typo.toml"), "restart = 5\n").unwrap();
    let typo = hmmboost(dir.path(), &["experiment", "baseline", "--config", "typo.toml"]);
    assert_eq!(code(&typo), 2);
    let missing = hmmboost(dir.path(), &["experiment", "baseline", "--config", "nope.toml"]);
    assert_eq!(code(&missing), 2);
    let kind = hmmboost(dir.path(), &["experiment", "fig9"]);
    assert_eq!(code(&kind), 2);
    let rate = hmmboost(dir.path(), &["experiment", "morph", "--dataset", "data", "--morph-rates", "0.1,-1"]);
    assert_eq!(code(&rate), 2);
}

#[test]
fn dataset_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path());
    let absent = hmmboost(dir.path(), &["experiment", "baseline", "--dataset", "nowhere"]);
    assert_eq!(code(&absent), 3);
    let family = hmmboost(dir.path(), &["experiment", "baseline", "--dataset", "data", "--family", "zeus"]);
    assert_eq!(code(&family), 3);
    let folds = hmmboost(
        dir.path(),
        &["experiment", "baseline", "--dataset", "data", "--family", "fam_a", "--folds", "20"],
    );
    assert_eq!(code(&folds), 3);
    let size = hmmboost(
        dir.path(),
        &["experiment", "coldstart", "--dataset", "data", "--family", "fam_a", "--coldstart-sizes", "5,15"],
    );
    assert_eq!(code(&size), 3);
    assert!(String::from_utf8_lossy(&size.stderr).contains("size 15"));
}

#[test]
fn vocab_train_score_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path());
    let out = hmmboost(dir.path(), &["vocab", "--dataset", "data", "--family", "fam_a", "--top-k", "10", "--out", "m"]);
    assert_eq!(code(&out), 0);
    let vocab: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("m/vocab_fam_a.json")).unwrap()).unwrap();
    assert_eq!(vocab["family"], "fam_a");
    assert_eq!(vocab["k"], 10);
    assert_eq!(vocab["top_opcodes"].as_array().unwrap().len(), 10);

    let mut args = vec!["train", "--dataset", "data", "--family", "fam_a", "--out", "m"];
    args.extend(SMALL);
    let out = hmmboost(dir.path(), &args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let out = hmmboost(
        dir.path(),
        &["score", "--model", "m/model_fam_a.json", "data/fam_a/fam_a_0000.opcodes", "data/benign"],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "path,llpo,boosted_margin");
    assert_eq!(rows.len(), 1 + 1 + 40);
    // with K = 10 most benign opcodes land in the catch-all symbol, which
    // can favour benign LLPO; the ensemble's stumps may flip polarity
    let field = |row: &str, i: usize| row.split(',').nth(i).unwrap().parse::<f64>().unwrap();
    assert!(rows[1..].iter().all(|r| field(r, 1).is_finite()));
    assert!(field(rows[1], 2) > 0.0);
    let benign_flagged = rows[2..].iter().filter(|r| field(r, 2) >= 0.0).count();
    assert!(benign_flagged < 20, "{benign_flagged} benign samples flagged");
}

#[test]
fn report_command_reemits_saved_report() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path());
    let mut args = vec!["experiment", "baseline", "--dataset", "data", "--family", "fam_a", "--out", "a"];
    args.extend(SMALL);
    assert_eq!(code(&hmmboost(dir.path(), &args)), 0);
    let out = hmmboost(dir.path(), &["report", "a", "--out", "b"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("baseline_fam_a"));
    for f in ["results.csv", "roc_baseline_fam_a.csv", "report.json"] {
        assert_eq!(
            fs::read_to_string(dir.path().join("a").join(f)).unwrap(),
            fs::read_to_string(dir.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }
    assert_eq!(code(&hmmboost(dir.path(), &["report", "nothing_here"])), 2);
}

#[test]
fn thread_count_does_not_change_the_report() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path());
    for (threads, out) in [("1", "t1"), ("4", "t4")] {
        let mut args = vec!["experiment", "morph", "--dataset", "data", "--family", "fam_b", "--morph-rates", "0.5"];
        args.extend(SMALL);
        args.extend(["--threads", threads, "--out", out]);
        assert_eq!(code(&hmmboost(dir.path(), &args)), 0);
    }
    let strip = |p: &str| -> serde_json::Value {
        let mut v: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join(p).join("report.json")).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("timestamp");
        v
    };
    assert_eq!(strip("t1"), strip("t4"));
}
