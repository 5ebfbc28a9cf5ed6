use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mfwno(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mfwno"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn tiny_config(dir: &Path, problem: &str) -> String {
    let path = dir.join(format!("{problem}.toml"));
    let text = format!(
        "version = 1\nproblem = \"{problem}\"\nn_hf = 4\nn_test = 4\n\
         [hf_net]\nwidth = 6\nn_layers = 1\nlevels = 1\nwavelet = \"db2\"\nproj_hidden = 8\n\
         [lf_net]\nwidth = 6\nn_layers = 1\nlevels = 1\nwavelet = \"db2\"\nproj_hidden = 8\n\
         [train]\nepochs = 3\nbatch_size = 4\n[lf_train]\nepochs = 3\n"
    );
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(mfwno(&["train", "--problem", "b1", "--bogus"]).status.code(), Some(2));
    assert_eq!(mfwno(&["train"]).status.code(), Some(2));
    assert_eq!(mfwno(&["train", "--problem", "nope"]).status.code(), Some(2));
    assert_eq!(mfwno(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn failed_runs_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = mfwno(&["train", "--problem", "poisson", "--lf-source", "analytic", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error:"));
    let missing = dir.path().join("none");
    assert_eq!(mfwno(&["evaluate", "--out", missing.to_str().unwrap()]).status.code(), Some(1));
    let cfg = tiny_config(dir.path(), "b1");
    let o = mfwno(&["train", "--config", &cfg, "--problem", "b2", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn gen_data_train_evaluate_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), "b1");
    let data = dir.path().join("data");
    let o = mfwno(&["gen-data", "--config", &cfg, "--out", data.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(data.join("manifest.toml").is_file());

    let run = dir.path().join("run");
    let o = mfwno(&[
        "train",
        "--config",
        &cfg,
        "--data-dir",
        data.to_str().unwrap(),
        "--out",
        run.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.starts_with("dataset_size,mfsm_mse,hfsm_mse,mse_lf\n4,"));
    for f in ["results.csv", "mfsm.toml", "hfsm.toml", "mfsm_eval.csv", "extras.csv", "config.toml"] {
        assert!(run.join(f).is_file(), "missing {f}");
    }

    let o = mfwno(&["evaluate", "--out", run.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = mfwno(&["report", "--out", run.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(run.join("report.csv").is_file());
}

#[test]
fn sweep_and_ablation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path(), "b3");
    let out = dir.path().join("sweep");
    let o = mfwno(&["sweep", "--config", &cfg, "--sizes", "2,3", "--epochs", "2", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = fs::read_to_string(out.join("report.csv")).unwrap();
    let sizes: Vec<&str> = report.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(sizes, ["2", "3"]);

    let abl = dir.path().join("abl");
    let o = mfwno(&["train", "--config", &cfg, "--ablation", "hf-only", "--out", abl.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let row = String::from_utf8(o.stdout).unwrap();
    assert!(row.lines().nth(1).unwrap().starts_with("4,,"));
}
