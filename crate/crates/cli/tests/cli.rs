use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qsp_core::experiment::{PreprocessReport, Summary};

fn manifest(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../manifests").join(name)
}

fn qsp_lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qsp-lab")).args(args).output().unwrap()
}

fn stage(cmd: &str, manifest: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--manifest", manifest.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    qsp_lab(&args)
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

const OUTPUTS: [&str; 9] = [
    "preprocess.toml",
    "block_encoding.circuit",
    "gate_counts.csv",
    "epsilon_poly.csv",
    "epsilon_total.csv",
    "optimal_degree.csv",
    "entropies.csv",
    "heuristic.csv",
    "summary.toml",
];

#[test]
fn run_all_replays_byte_for_byte() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        let out = stage("run-all", &manifest("smoke.toml"), dir.path(), &[]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in OUTPUTS {
        assert_eq!(read(a.path(), f), read(b.path(), f), "{f}");
    }
    let entropy_csv = read(a.path(), "entropies.csv");
    assert!(entropy_csv.starts_with("t,d,n_tq,p,success_prob,s_vn,s_vn_sigma,s_r2,s_r2_sigma,projected,variant"));
    for v in ["exact", "noiseless", "unmitigated", "mitigated"] {
        assert_eq!(entropy_csv.lines().filter(|l| l.ends_with(&format!(",{v}"))).count(), 3, "{v}");
    }
}

#[test]
fn seed_flag_overrides_manifest() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert!(stage("simulate", &manifest("smoke.toml"), a.path(), &[]).status.success());
    assert!(stage("simulate", &manifest("smoke.toml"), b.path(), &["--seed", "99"]).status.success());
    let summary: Summary = toml::from_str(&read(b.path(), "summary.toml")).unwrap();
    assert_eq!(summary.seed, 99);
    assert_ne!(read(a.path(), "entropies.csv"), read(b.path(), "entropies.csv"));
}

#[test]
fn stages_write_their_tables() {
    let dir = tempfile::tempdir().unwrap();
    let m = manifest("smoke.toml");
    assert!(stage("preprocess", &m, dir.path(), &[]).status.success());
    assert!(!dir.path().join("gate_counts.csv").exists());
    assert!(stage("block-encode", &m, dir.path(), &[]).status.success());
    let counts = read(dir.path(), "gate_counts.csv");
    assert!(counts.contains("block_encoding,") && counts.contains("naive_baseline,"));
    assert!(stage("angles", &m, dir.path(), &[]).status.success());
    assert_eq!(read(dir.path(), "epsilon_poly.csv").lines().count(), 1 + 3 * 3);
    assert!(stage("plan", &m, dir.path(), &[]).status.success());
    let plan_csv = read(dir.path(), "optimal_degree.csv");
    assert_eq!(plan_csv.lines().next().unwrap(), "t,d,epsilon_total");
    assert!(plan_csv.lines().nth(1).unwrap().starts_with("0.0,0,"));
}

#[test]
fn preprocess_of_experiment_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = stage("preprocess", &manifest("experiment-1.toml"), dir.path(), &[]);
    assert!(out.status.success());
    let r: PreprocessReport = toml::from_str(&read(dir.path(), "preprocess.toml")).unwrap();
    assert!((r.lambda_plus - 6.65).abs() < 1e-12 && (r.lambda_minus + 6.65).abs() < 1e-12);
    assert!((r.time_factor - 13.3).abs() < 1e-12);
}

#[test]
fn lcu_block_encode_of_experiment_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = stage("block-encode", &manifest("experiment-2.toml"), dir.path(), &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: Summary = toml::from_str(&read(dir.path(), "summary.toml")).unwrap();
    let block = summary.block_encoding.unwrap();
    assert!(block.epsilon_be < 1e-10);
    assert_eq!(block.a, 3);
    assert!(block.two_qubit_gates <= 44);
}

fn write_manifest(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("manifest.toml");
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let smoke = read(&manifest(""), "smoke.toml");
    let unknown = write_manifest(dir.path(), &smoke.replace("shots = 400", "shots = 400\nfidelity = 1"));
    let out = stage("run-all", &unknown, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());

    let out = stage("plan", &dir.path().join("missing.toml"), dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));

    let flat = smoke.replace("J = 1.0", "J = 0.0").replace("h = [0.7, 0.7]", "h = [0.0, 0.0]").replace("m = 0.3", "m = 0.0");
    let out = stage("preprocess", &write_manifest(dir.path(), &flat), dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("degenerate"));

    assert_eq!(qsp_lab(&["teleport", "--manifest", "x", "--out", "y"]).status.code(), Some(2));
}

#[test]
fn over_mitigation_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let smoke = read(&manifest(""), "smoke.toml");
    let text = smoke
        .replace("p_tq = 2e-3", "p_tq = 0.05")
        .replace("times = [0.0, 0.1, 0.2]", "times = [0.1, 0.2]")
        .replace("bootstrap = 20", "bootstrap = 5\nnoise = \"global\"\nheuristic = false\ndegrees = [4, 4]");
    let out = stage("simulate", &write_manifest(dir.path(), &text), dir.path(), &[]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("over-mitigation"));
}
