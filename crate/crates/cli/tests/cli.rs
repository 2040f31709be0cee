use std::path::Path;
use std::process::{Command, Output};

use fealm::io::{read_artifact, read_csv_file};
use fealm::validate_artifact;

fn fealm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fealm")).args(args).output().expect("binary runs")
}

fn gen(dir: &Path, kind: &str, name: &str, extra: &[&str]) -> std::path::PathBuf {
    let path = dir.join(name);
    let mut args = vec!["gen-data", "--kind", kind, "--seed", "4", "--output", path.to_str().unwrap()];
    args.extend_from_slice(extra);
    let out = fealm(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    path
}

#[test]
fn gen_data_shapes() {
    let dir = tempfile::tempdir().unwrap();
    for kind in ["spheres3class", "spheres3class-entangled"] {
        let path = gen(dir.path(), kind, &format!("{kind}.csv"), &[]);
        let d = read_csv_file(&path).unwrap();
        assert_eq!((d.n(), d.m()), (300, 4));
        assert_eq!(d.labels().len(), 2);
        let header = std::fs::read_to_string(&path).unwrap().lines().next().unwrap().to_string();
        assert_eq!(header, "x,y,z,class,label_sphere,label_class");
    }
}

#[test]
fn gen_data_errors_exit_2() {
    let out = fealm(&["gen-data", "--kind", "spheres3class"]);
    assert_eq!(out.status.code(), Some(2));
    let out = fealm(&["gen-data", "--output", "/nonexistent-dir/x/y.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot write"));
}

fn run_args<'a>(input: &'a str, output: &'a str, r: &'a str) -> Vec<&'a str> {
    vec![
        "run", "--input", input, "--output", output, "--r", r, "--evals", "50", "--k", "8", "--seed", "7",
        "--epochs", "30",
    ]
}

#[test]
fn run_writes_a_complete_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let csv = gen(dir.path(), "spheres3class", "d.csv", &["--n-outer", "60", "--n-inner", "30"]);
    let art = dir.path().join("a.json");
    let out = fealm(&run_args(csv.to_str().unwrap(), art.to_str().unwrap(), "2"));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.matches("iteration").count(), 2);
    let a = read_artifact(&art).unwrap();
    assert_eq!(a.len(), 3);
    assert_eq!(a.embeddings.len(), 3);
    assert_eq!(a.meta_points.len(), 3);
    assert!(validate_artifact(&a).is_empty());
}

#[test]
fn zero_repeats_gives_only_the_original() {
    let dir = tempfile::tempdir().unwrap();
    let csv = gen(dir.path(), "spheres3class", "d.csv", &["--n-outer", "40", "--n-inner", "20"]);
    let art = dir.path().join("a.json");
    let out = fealm(&run_args(csv.to_str().unwrap(), art.to_str().unwrap(), "0"));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let a = read_artifact(&art).unwrap();
    assert_eq!(a.len(), 1);
    assert_eq!(a.embeddings.len(), 1);
}

#[test]
fn run_reports_ingest_and_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "a,b\n1,2\n3,x\n4,5\n").unwrap();
    let art = dir.path().join("a.json");
    let out = fealm(&run_args(bad.to_str().unwrap(), art.to_str().unwrap(), "1"));
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("row 2") && err.contains("`b`"), "{err}");

    let small = dir.path().join("small.csv");
    std::fs::write(&small, "a,b\n1,2\n3,1\n4,5\n").unwrap();
    let out = fealm(&run_args(small.to_str().unwrap(), art.to_str().unwrap(), "1"));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("k must satisfy"));
}
