#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn coopra() -> Command {
    Command::new(env!("CARGO_BIN_EXE_coopra"))
}

pub fn run(args: &[&str]) -> Output {
    coopra().args(args).output().expect("binary runs")
}

/// Runs and asserts success, returning stdout.
pub fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "coopra {args:?} failed ({:?}):\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

pub fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Name and contents of every file in `dir`, sorted by name.
pub fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

pub fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

pub fn schema_validator() -> jsonschema::Validator {
    let schema: serde_json::Value = serde_json::from_str(coopra_cli::REPORT_SCHEMA).unwrap();
    jsonschema::validator_for(&schema).expect("schema compiles")
}

pub fn schema_errors(report: &serde_json::Value) -> Vec<String> {
    schema_validator().iter_errors(report).map(|e| format!("{} at {}", e, e.instance_path)).collect()
}
