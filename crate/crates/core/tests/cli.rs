use std::path::Path;
use std::process::{Command, Output};

fn mmali(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmali")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn small_data(dir: &Path, modalities: usize) -> std::path::PathBuf {
    let out = dir.join(format!("data{modalities}"));
    let m = modalities.to_string();
    let o = mmali(&[
        "generate-data",
        "--modalities",
        &m,
        "--train-rows",
        "400",
        "--test-rows",
        "200",
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    out
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("run.config");
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn unknown_flag_exits_2() {
    assert_eq!(code(&mmali(&["train", "--bogus"])), 2);
    assert_eq!(code(&mmali(&["no-such-verb"])), 2);
}

#[test]
fn bad_generator_arguments_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d");
    assert_eq!(code(&mmali(&["generate-data", "--components", "1", "--out", p(&out)])), 2);
    assert_eq!(code(&mmali(&["generate-data", "--kind", "spiral", "--out", p(&out)])), 2);
}

#[test]
fn train_eval_export_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_data(dir.path(), 2);
    let run = dir.path().join("run");
    let cfg = write_config(
        dir.path(),
        &format!(
            "dataset = {}\nout_dir = {}\nmodality_dims = 2,2\ncontent_dim = 2\nstyle_dim = 1\niterations = 60\nreport_every = 20\n",
            p(&data),
            p(&run)
        ),
    );
    let o = mmali(&["train", "--config", p(&cfg)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(run.join("final").join("model.manifest").is_file());
    assert!(run.join("run.config").is_file());

    let report = dir.path().join("eval.json");
    let csv = run.join("metrics.csv");
    let o = mmali(&[
        "eval",
        "--checkpoint",
        p(&run.join("final")),
        "--dataset",
        p(&data),
        "--joint-draws",
        "500",
        "--cca",
        "--iteration",
        "60",
        "--out",
        p(&report),
        "--csv",
        p(&csv),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert!(json["coherence"]["joint"].as_f64().unwrap() >= 0.0);
    assert!(json["probes"]["content0"].as_f64().is_some());
    assert!(json["cca_generated"].as_f64().is_some());

    let series = dir.path().join("series");
    let o = mmali(&["export-metrics", "--csv", p(&csv), "--out", p(&series)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let disc = std::fs::read_to_string(series.join("disc_a0.seed0.tsv")).unwrap();
    assert_eq!(disc.lines().count(), 4);
    assert!(series.join("joint_coherence.seed0.tsv").is_file());
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_data(dir.path(), 2);
    let cfg = write_config(
        dir.path(),
        &format!(
            "dataset = {}\nout_dir = unused\nmodality_dims = 2,2\ncontent_dim = 2\nstyle_dim = 1\niterations = 1000\n",
            p(&data)
        ),
    );
    let run = dir.path().join("run");
    let o = mmali(&["train", "--config", p(&cfg), "--iterations", "10", "--seed", "4", "--out", p(&run)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let saved = std::fs::read_to_string(run.join("run.config")).unwrap();
    assert!(saved.contains("iterations = 10"), "{saved}");
    assert!(saved.contains("seed = 4"), "{saved}");
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_data(dir.path(), 2);
    let cfg = write_config(
        dir.path(),
        &format!("dataset = {}\nout_dir = run\nmodality_dims = 2,2\ncontent_dim = 2\nstyle_dim = 1\nlearning_rate = 0.1\n", p(&data)),
    );
    let o = mmali(&["train", "--config", p(&cfg)]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("learning_rate"));
}

#[test]
fn missing_dataset_exits_3_before_training() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let cfg = write_config(
        dir.path(),
        &format!("dataset = nowhere\nout_dir = {}\nmodality_dims = 2,2\ncontent_dim = 2\nstyle_dim = 1\n", p(&run)),
    );
    let o = mmali(&["train", "--config", p(&cfg)]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(!run.exists());
    assert_eq!(code(&mmali(&["train", "--config", p(&dir.path().join("absent.config"))])), 3);
}

#[test]
fn config_dims_disagreeing_with_dataset_exit_5() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_data(dir.path(), 3);
    let cfg = write_config(
        dir.path(),
        &format!("dataset = {}\nout_dir = run\nmodality_dims = 2,2\ncontent_dim = 2\nstyle_dim = 1\n", p(&data)),
    );
    assert_eq!(code(&mmali(&["train", "--config", p(&cfg)])), 5);
}

#[test]
fn eval_on_mismatched_dataset_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    let two = small_data(dir.path(), 2);
    let three = small_data(dir.path(), 3);
    let run = dir.path().join("run");
    let cfg = write_config(
        dir.path(),
        &format!(
            "dataset = {}\nout_dir = {}\nmodality_dims = 2,2\ncontent_dim = 2\nstyle_dim = 1\niterations = 5\n",
            p(&two),
            p(&run)
        ),
    );
    assert_eq!(code(&mmali(&["train", "--config", p(&cfg)])), 0);
    let o = mmali(&["eval", "--checkpoint", p(&run.join("final")), "--dataset", p(&three)]);
    assert_eq!(code(&o), 5, "{}", stderr(&o));
}

#[test]
fn exploding_learning_rate_exits_4_with_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_data(dir.path(), 2);
    let run = dir.path().join("run");
    let cfg = write_config(
        dir.path(),
        &format!(
            "dataset = {}\nout_dir = {}\nmodality_dims = 2,2\ncontent_dim = 2\nstyle_dim = 1\niterations = 200\nlr = 1e300\n",
            p(&data),
            p(&run)
        ),
    );
    let o = mmali(&["train", "--config", p(&cfg)]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    assert!(std::fs::read_to_string(run.join("diverged.txt")).unwrap().contains("iteration"));
}

#[test]
fn oracle_check_passes_and_rejects_unknown_suites() {
    let o = mmali(&["oracle-check", "--only", "gaussian,factorization"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).contains("0 failed"));
    assert_eq!(code(&mmali(&["oracle-check", "--only", "vibes"])), 2);
}

#[test]
fn export_of_empty_csv_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("empty.csv");
    std::fs::write(&csv, "").unwrap();
    let out = dir.path().join("out");
    let o = mmali(&["export-metrics", "--csv", p(&csv), "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(std::fs::read_dir(&out).unwrap().count(), 0);
}

#[test]
fn export_of_malformed_csv_exits_3_naming_the_row() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bad.csv");
    std::fs::write(&csv, "iteration,seed,name,value\n100,0,disc_c,0.5\n200,0,disc_c,oops\n").unwrap();
    let o = mmali(&["export-metrics", "--csv", p(&csv), "--out", p(&dir.path().join("out"))]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("row 3"), "{}", stderr(&o));
}

#[test]
fn export_reads_every_csv_in_a_directory() {
    let dir = tempfile::tempdir().unwrap();
    let logs = dir.path().join("logs");
    std::fs::create_dir(&logs).unwrap();
    std::fs::write(logs.join("a.csv"), "iteration,seed,name,value\n1,0,x,1.5\n").unwrap();
    std::fs::write(logs.join("b.csv"), "iteration,seed,name,value\n1,1,x,2.5\n").unwrap();
    std::fs::write(logs.join("notes.txt"), "ignored").unwrap();
    let out = dir.path().join("out");
    assert_eq!(code(&mmali(&["export-metrics", "--csv", p(&logs), "--out", p(&out)])), 0);
    assert_eq!(std::fs::read_to_string(out.join("x.seed1.tsv")).unwrap(), "iteration\tvalue\n1\t2.5\n");
}

#[test]
fn zero_iterations_writes_the_initial_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_data(dir.path(), 2);
    let run = dir.path().join("run");
    let cfg = write_config(
        dir.path(),
        &format!(
            "dataset = {}\nout_dir = {}\nmodality_dims = 2,2\ncontent_dim = 2\nstyle_dim = 1\niterations = 0\n",
            p(&data),
            p(&run)
        ),
    );
    let o = mmali(&["train", "--config", p(&cfg)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(run.join("final").join("generator.params").is_file());
    let o = mmali(&[
        "eval",
        "--checkpoint",
        p(&run.join("final")),
        "--dataset",
        p(&data),
        "--mean-function",
        "geometric",
        "--csv",
        p(&dir.path().join("eval.csv")),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("eval.csv")).unwrap();
    assert!(csv.contains("synergy_geometric_0"));
    assert!(!csv.contains("synergy_arithmetic_0"));
}

#[test]
fn generate_data_is_a_pure_function_of_its_flags() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = mmali(&["generate-data", "--seed", "7", "--train-rows", "300", "--test-rows", "100", "--out", p(&out)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        out
    };
    let (a, b) = (run("a"), run("b"));
    let mut names: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(!names.is_empty());
    for n in names {
        assert_eq!(std::fs::read(a.join(&n)).unwrap(), std::fs::read(b.join(&n)).unwrap(), "{n:?}");
    }
}

#[test]
fn full_oracle_check_is_quick() {
    let start = std::time::Instant::now();
    let o = mmali(&["oracle-check"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(start.elapsed().as_secs() < 60);
}
