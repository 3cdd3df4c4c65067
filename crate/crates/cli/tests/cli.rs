use std::path::Path;
use std::process::{Command, Output};

fn tbnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tbnn")).args(args).output().expect("spawn tbnn")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.toml");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const SMALL: &str = "experiment = \"cli\"\nn = [120]\nsample_seeds = [1]\nnoise_seeds = [2]\ntau = [0.05]\nepochs = 200\neval_points = 20\n";

#[test]
fn build_sheaf_then_spectrum() {
    let dir = tempfile::tempdir().unwrap();
    let sheaf = dir.path().join("sheaf");
    let out = tbnn(&["build-sheaf", "--input", "sphere:150", "--seed", "4", "--out", sheaf.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["meta.json", "edges.csv", "bases.csv", "points.csv"] {
        assert!(sheaf.join(f).exists(), "{f}");
    }
    let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(sheaf.join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta["d_hat"], 2);
    assert_eq!(meta["seed"], 4);

    let spectral = dir.path().join("spec");
    let out = tbnn(&["spectrum", "--sheaf", sheaf.to_str().unwrap(), "--k", "16", "--out", spectral.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let eig = std::fs::read_to_string(spectral.join("eigenvalues.csv")).unwrap();
    assert_eq!(eig.lines().count(), 17);
    assert!(spectral.join("eigenvectors.bin").exists());
}

#[test]
fn build_sheaf_from_csv_points() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    assert_eq!(code(&tbnn(&["build-sheaf", "--input", "sphere:120", "--out", first.to_str().unwrap()])), 0);
    let points = first.join("points.csv");
    let second = dir.path().join("second");
    let out = tbnn(&["build-sheaf", "--input", points.to_str().unwrap(), "--out", second.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        std::fs::read(first.join("edges.csv")).unwrap(),
        std::fs::read(second.join("edges.csv")).unwrap()
    );
}

#[test]
fn table1_writes_results_summary_and_meta() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out_dir = dir.path().join("t1");
    let out = tbnn(&["table1", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let results = std::fs::read_to_string(out_dir.join("results.csv")).unwrap();
    let mut lines = results.lines();
    assert_eq!(
        lines.next(),
        Some("experiment,n,tau,seed_sample,seed_noise,model,eval_mse,train_mse_final,wallclock_s,error")
    );
    assert!(lines.next().unwrap().starts_with("cli,120,0.05,1,2,ddtnn,"));
    assert!(lines.next().unwrap().starts_with("cli,120,0.05,1,2,mnn,"));
    assert!(out_dir.join("summary.csv").exists());
    let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out_dir.join("meta.json")).unwrap()).unwrap();
    assert!(meta["git_hash"].is_string());
    assert_eq!(meta["config"]["n"], serde_json::json!([120]));
    assert_eq!(meta["config"]["epochs"], 200);
}

#[test]
fn denoise_saves_models() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out_dir = dir.path().join("dn");
    let out = tbnn(&["denoise", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let results = std::fs::read_to_string(out_dir.join("results.csv")).unwrap();
    assert_eq!(results.lines().count(), 2);
    let models: Vec<_> = std::fs::read_dir(out_dir.join("models")).unwrap().collect();
    assert_eq!(models.len(), 2);
}

#[test]
fn converge_and_spectral_converge() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{SMALL}n = [100, 150]\n").replace("n = [120]\n", ""));
    let conv = dir.path().join("conv");
    let out = tbnn(&["converge", "--config", &cfg, "--out", conv.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary = std::fs::read_to_string(conv.join("convergence_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    assert!(summary.lines().last().unwrap().starts_with("150,0.0"));

    let spectral = dir.path().join("spec");
    let out = tbnn(&["spectral-converge", "--config", &cfg, "--out", spectral.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(spectral.join("spectral_summary.csv").exists());
}

#[test]
fn output_dir_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from_cfg");
    let cfg = write_config(dir.path(), &format!("{SMALL}output_dir = {:?}\n", target.to_str().unwrap()));
    let out = tbnn(&["denoise", "--config", &cfg]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(target.join("results.csv").exists());
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("x");
    let bad = write_config(dir.path(), "n = [10]\n");
    assert_eq!(code(&tbnn(&["table1", "--config", &bad, "--out", out_dir.to_str().unwrap()])), 2);
    let missing = dir.path().join("missing.toml");
    assert_eq!(code(&tbnn(&["table1", "--config", missing.to_str().unwrap(), "--out", "x"])), 2);
    let no_out = write_config(dir.path(), SMALL);
    assert_eq!(code(&tbnn(&["denoise", "--config", &no_out])), 2);
    assert_eq!(code(&tbnn(&["build-sheaf", "--input", "sphere:lots", "--out", "x"])), 2);
    assert_eq!(code(&tbnn(&["no-such-command"])), 2);
}

#[test]
fn numeric_failures_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("s");
    let out = tbnn(&["build-sheaf", "--input", "sphere:100", "--epsilon", "1e-9", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));

    // failed trials are still written before the failure status
    let cfg = write_config(dir.path(), &format!("{SMALL}epsilon = 1e-9\n"));
    let t1 = dir.path().join("t1");
    assert_eq!(code(&tbnn(&["table1", "--config", &cfg, "--out", t1.to_str().unwrap()])), 3);
    let results = std::fs::read_to_string(t1.join("results.csv")).unwrap();
    assert_eq!(results.lines().count(), 3);
    assert!(results.lines().skip(1).all(|l| !l.ends_with(',')));
}

#[test]
fn shipped_configs_are_valid() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut names = Vec::new();
    for entry in std::fs::read_dir(root).unwrap() {
        let path = entry.unwrap().path();
        tbnn_core::experiments::ExperimentConfig::load(&path).unwrap();
        names.push(path.file_name().unwrap().to_str().unwrap().to_string());
    }
    names.sort();
    assert_eq!(names, ["convergence.toml", "spectral.toml", "table1.toml"]);
}

#[test]
fn table1_config_matches_library_defaults() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/table1.toml");
    let cfg = tbnn_core::experiments::ExperimentConfig::load(path).unwrap();
    assert_eq!(cfg, tbnn_core::experiments::ExperimentConfig::default());
}
