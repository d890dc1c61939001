#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

pub fn scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

pub fn shipped(name: &str) -> PathBuf {
    scenarios_dir().join(format!("{name}.json"))
}

pub fn shipped_value(name: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(shipped(name)).unwrap()).unwrap()
}

/// Example 1 with the published full-observer gains inlined.
pub fn example1_explicit() -> Value {
    let mut v = shipped_value("example1_alg1");
    v["gains"] = json!({
        "E": [[-0.1724, 3.7982], [3.7982, 3.0183]],
        "Pi": [[1.05, 0.0], [0.0, 1.05]],
        "K": [[-0.441, -0.441]],
        "search": {"initial_E": [[[17.1333, 21.8667], [12.3644, -3.5511]]]}
    });
    v
}

pub fn write(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(v).unwrap()).unwrap();
    path
}

pub fn pcons(args: &[&str], files: &[&Path]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pcons"))
        .args(args)
        .args(files)
        .output()
        .expect("pcons runs")
}
