#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ivmatch_core::seed::replicate_rng;
use rand::Rng;

#[derive(Debug, Clone, Copy)]
pub enum Doses {
    /// `U[5, 50]`, independent of everything else.
    Randomized,
    /// Increasing in `x1`, so `x1` orders the doses within every pair.
    Confounded,
    /// Every unit gets the same dose.
    Constant,
}

/// Treatment threshold on the dose: units above it always take treatment.
pub const DOSE_THRESHOLD: f64 = 27.5;

/// Writes `n` synthetic units with columns
/// `id,x1,x2,x3,risk,dose,treated,y,y2`. Treatment is a deterministic
/// function of the dose, and `y` has a constant effect `lambda`.
pub fn write_cohort(path: &Path, n: usize, seed: u64, doses: Doses, lambda: f64) {
    let mut rng = replicate_rng(seed, 7);
    let mut s = String::from("id,x1,x2,x3,risk,dose,treated,y,y2\n");
    for i in 0..n {
        let x: [f64; 3] = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let risk = if rng.random::<f64>() < 0.4 { "A" } else { "B" };
        let dose = match doses {
            Doses::Randomized => rng.random_range(5.0..50.0),
            Doses::Confounded => 27.5 + 20.0 * x[0] + rng.random_range(0.0..0.01),
            Doses::Constant => 20.0,
        };
        let treated = dose > DOSE_THRESHOLD;
        let y = x[0] + x[1] + lambda * f64::from(u8::from(treated)) + rng.random_range(-0.5..0.5);
        let y2 = x[2] + rng.random_range(-1.0..1.0);
        writeln!(
            s,
            "u{i:04},{},{},{},{risk},{dose},{},{y},{y2}",
            x[0],
            x[1],
            x[2],
            u8::from(treated)
        )
        .unwrap();
    }
    std::fs::write(path, s).unwrap();
}

/// Base config for the synthetic cohort; `extra` is appended verbatim.
pub fn write_config(dir: &Path, input: &str, extra: &str) -> PathBuf {
    let text = format!(
        r#"seed = 11
input = "{input}"
output = "out"

[schema]
id = "id"
dose = "dose"
treatment = "treated"
outcomes = ["y"]
covariates = ["x1", "x2", "x3"]
categorical = ["risk"]

{extra}
"#
    );
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    path
}

pub fn ivmatch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ivmatch"))
        .args(args)
        .env_remove("IVMATCH_SEED")
        .output()
        .expect("binary runs")
}

pub fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// The structured error printed on the last stderr line.
pub fn error_json(out: &Output) -> serde_json::Value {
    let err = String::from_utf8_lossy(&out.stderr);
    let line = err.lines().last().expect("stderr line");
    serde_json::from_str(line).expect("error JSON")
}

pub fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

pub fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(|r| r.unwrap()).collect()
}
