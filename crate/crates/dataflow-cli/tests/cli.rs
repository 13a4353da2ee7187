use std::fs;
use std::process::{Command, Output};

fn dataflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dataflow"))
        .args(args)
        .env_remove("DATAFLOW_OUTPUT_ROOT")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn lists_presets() {
    let o = dataflow(&["list-presets"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 6);
    assert!(text.contains("example3: V-shaped front with small eta"));
    assert!(text.contains("example4: smooth front with small eta"));
}

#[test]
fn runs_a_preset_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("e3");
    let o = dataflow(&[
        "run",
        "example3",
        "--n",
        "40",
        "--t-final",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("40x40 cells, t_final = 1"));
    for f in [
        "density_000.csv",
        "density_001.csv",
        "front_001.csv",
        "front_error.csv",
        "metadata.json",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    assert!(!out.join("density_002.csv").exists());
}

#[test]
fn output_root_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_dataflow"))
        .args(["run", "example2", "--n", "20"])
        .env("DATAFLOW_OUTPUT_ROOT", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("example2").join("metadata.json").exists());
}

#[test]
fn validates_config_files() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.toml");
    fs::write(
        &good,
        "name = \"g\"\npreset = \"example4\"\n[grid]\nnx = 30\n",
    )
    .unwrap();
    let o = dataflow(&["validate", good.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "g: ok");

    let bad = dir.path().join("bad.toml");
    fs::write(
        &bad,
        "name = \"b\"\npreset = \"example4\"\n[model]\neta = -2\n",
    )
    .unwrap();
    let o = dataflow(&["validate", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bad.toml:4"), "{}", stderr(&o));

    let unknown = dir.path().join("unknown.toml");
    fs::write(&unknown, "name = \"u\"\n[mdoel]\neta = 1\n").unwrap();
    assert_eq!(
        dataflow(&["validate", unknown.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn unknown_preset_is_a_config_error() {
    let o = dataflow(&["run", "example9"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numerical_failure_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let o = dataflow(&[
        "run",
        "example5",
        "--courant",
        "0.1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("eta dz/dx"));
}

#[test]
fn courant_above_scheme_limit_rejected() {
    let o = dataflow(&[
        "run",
        "example2",
        "--scheme",
        "relaxation",
        "--courant",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn reaching_the_top_exits_with_assumption_code() {
    let dir = tempfile::tempdir().unwrap();
    let o = dataflow(&[
        "run",
        "example2",
        "--n",
        "20",
        "--t-final",
        "6",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(4));
    assert!(dir.path().join("metadata.json").exists());
}

#[test]
fn micro_toggle() {
    let dir = tempfile::tempdir().unwrap();
    let o = dataflow(&[
        "run",
        "example3",
        "--n",
        "22",
        "--t-final",
        "0.5",
        "--micro",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("micro_density.csv").exists());
    assert!(
        stdout(&o).contains("lattice 22x20 differs"),
        "{}",
        stdout(&o)
    );
}
