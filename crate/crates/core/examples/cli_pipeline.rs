//! Drives the command-line verbs end to end in a temporary directory.

use mmali::cli::main_with_args;

fn main() {
    let dir = std::env::temp_dir().join("mmali-cli-pipeline");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).expect("temp dir");
    let d = |p: &str| dir.join(p).display().to_string();
    std::fs::write(
        dir.join("run.config"),
        "dataset = data\nout_dir = run\nmodality_dims = 2,2\ncontent_dim = 2\nstyle_dim = 1\niterations = 500\nreport_every = 100\n",
    )
    .expect("config");
    let steps: Vec<Vec<String>> = vec![
        vec!["generate-data".into(), "--out".into(), d("data")],
        vec!["train".into(), "--config".into(), d("run.config")],
        vec![
            "eval".into(),
            "--checkpoint".into(),
            d("run/final"),
            "--dataset".into(),
            d("data"),
            "--joint-draws".into(),
            "2000".into(),
            "--out".into(),
            d("eval.json"),
            "--csv".into(),
            d("run/metrics.csv"),
        ],
        vec!["export-metrics".into(), "--csv".into(), d("run/metrics.csv"), "--out".into(), d("series")],
    ];
    for args in steps {
        println!("$ mmali {}", args.join(" "));
        let code = main_with_args(std::iter::once("mmali".to_string()).chain(args));
        println!("-> {code:?}");
    }
}
