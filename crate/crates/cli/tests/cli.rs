use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = "seed = 21\n[synth]\nn_conversations = 6\nduration_s = 150.0\n[classifiers.random_forest]\nn_trees = 25\n[classifiers.adaboost]\nrounds = 40\n";

fn bin(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_backchannel")).args(args).current_dir(dir).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = bin(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn fails_with(dir: &Path, args: &[&str], code: i32) -> serde_json::Value {
    let out = bin(dir, args);
    assert_eq!(out.status.code(), Some(code), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    let line = String::from_utf8(out.stderr).unwrap();
    serde_json::from_str(line.lines().last().unwrap()).expect("json error record")
}

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("pipeline.toml"), CONFIG).unwrap();
    dir
}

#[test]
fn help_and_version_succeed() {
    let dir = tempfile::tempdir().unwrap();
    assert!(ok(dir.path(), &["--help"]).contains("synth-gen"));
    ok(dir.path(), &["--version"]);
}

#[test]
fn configuration_errors_exit_2() {
    let dir = workspace();
    let p = dir.path();
    fails_with(p, &["merge"], 2);
    fails_with(p, &["no-such-command"], 2);
    fails_with(p, &["--config", "pipeline.toml", "--workers", "0", "merge"], 2);
    std::fs::write(p.join("bad.toml"), "seed = 1\nunknown_key = 3\n").unwrap();
    fails_with(p, &["--config", "bad.toml", "merge"], 2);
    fails_with(p, &["--seed", "1", "identify", "--classifier", "svm"], 2);
}

#[test]
fn missing_inputs_exit_3() {
    let dir = workspace();
    let rec = fails_with(dir.path(), &["--config", "pipeline.toml", "merge"], 3);
    assert!(rec.is_object());
}

#[test]
fn full_pipeline_and_provenance() {
    let dir = workspace();
    let p = dir.path();
    let c = ["--config", "pipeline.toml"];
    let run = |extra: &[&str]| ok(p, &[&c[..], extra].concat());
    run(&["synth-gen"]);
    run(&["merge"]);
    run(&["sample-neg"]);
    run(&["featurize"]);
    run(&["identify"]);
    run(&["evaluate"]);
    for f in ["consensus.csv", "negatives.csv", "kappa.txt"] {
        assert!(p.join("corpus").join(f).exists() || p.join("out").join(f).exists(), "{f}");
    }
    let report = std::fs::read_to_string(p.join("out/evaluation.txt")).unwrap();
    assert!(report.starts_with("# backchannel artifact="), "{report}");

    run(&[
        "sweep",
        "--task",
        "identify-opportunity",
        "--classifier",
        "knn",
        "--grid",
        "0.25,1.0",
        "--simulations",
        "1",
        "--folds",
        "2",
    ]);
    assert!(p.join("out/sweep_identify-opportunity.txt").exists());
    run(&["predict-train", "--task", "predict-signal", "--paradigm", "pseudo"]);
    assert!(p.join("out/model_predict-signal_pseudo.json").exists());

    std::fs::write(p.join("a.csv"), "item,rating\nq1,4\nq2,3\nq3,5\n").unwrap();
    std::fs::write(p.join("b.csv"), "item,rating\nq1,3\nq2,5\nq3,2\n").unwrap();
    let s = run(&["stats", "--ratings", "a.csv", "b.csv"]);
    assert!(s.contains("Wilcoxon W 2"), "{s}");
    std::fs::write(p.join("log.csv"), "t_s,category\n1.5,visual\n4.0,verbal\n9.0,both\n").unwrap();
    run(&["persona-sample", "--log", "log.csv", "--persona", "extrovert"]);
    let responses = std::fs::read_to_string(p.join("out/responses_extrovert.csv")).unwrap();
    assert_eq!(responses.lines().filter(|l| !l.starts_with('#')).count(), 4);
    std::fs::write(p.join("bad_log.csv"), "t_s,category\n1.5,gesture\n").unwrap();
    fails_with(p, &[&c[..], &["persona-sample", "--log", "bad_log.csv"]].concat(), 3);

    // features rebuilt under another configuration no longer match the ledgers
    run(&["featurize", "--set", "visual"]);
    let rec = fails_with(p, &[&c[..], &["evaluate"]].concat(), 3);
    assert!(rec.to_string().contains("hash"), "{rec}");
    run(&["--force", "evaluate"]);
}
