use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const HEAT: &str = r#"
seed = 4

[[experiment]]
name = "heat"
kind = "flow"
grid = { n = 64 }
initial = { shape = "cosine", amplitude = 0.5 }
t_end = 0.02
record_every = 0.002
objective = { tau = 1.0, components = [] }

[[experiment]]
name = "heat-2"
kind = "flow"
grid = { n = 32 }
initial = { shape = "cosine", amplitude = 0.3 }
t_end = 0.01
record_every = 0.002
objective = { tau = 0.5, components = [] }
"#;

const TIGHT_GAP: &str = r#"
[[experiment]]
name = "short"
kind = "flow"
grid = { n = 32 }
initial = { shape = "cosine", amplitude = 0.9 }
t_end = 0.01
record_every = 0.001
reference = true
max_final_gap = 1e-30

[experiment.objective]
tau = 1.0

[[experiment.objective.components]]
kind = "interaction"
kernel = { shape = "neg-cos", kappa = 0.2 }
"#;

const SPECTRUM: &str = r#"
[[experiment]]
name = "neg-cos"
kind = "spectrum"
grid = { n = 32 }
kernel = { shape = "neg-cos", kappa = 0.5 }
"#;

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path
}

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mfl-lab")).args(args).output().unwrap()
}

fn run(command: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![command, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    lab(&args)
}

fn f_column(trace: &str) -> Vec<f64> {
    let mut lines = trace.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "F").unwrap();
    lines.map(|l| l.split(',').nth(col).unwrap().parse().unwrap()).collect()
}

#[test]
fn heat_flow_writes_a_decreasing_trace() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), HEAT);
    let out = dir.path().join("results");
    let o = run("flow", &cfg, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.lines().any(|l| l.starts_with("flow heat PASS")), "{stdout}");
    let f = f_column(&fs::read_to_string(out.join("heat/trace.csv")).unwrap());
    assert_eq!(f.len(), 11);
    for w in f.windows(2) {
        assert!(w[1] <= w[0]);
    }
}

#[test]
fn runs_are_reproducible_across_job_counts() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), HEAT);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(run("flow", &cfg, &a, &[]).status.code(), Some(0));
    let parallel = run("flow", &cfg, &b, &["--jobs", "2"]);
    assert_eq!(parallel.status.code(), Some(0));
    for name in ["heat", "heat-2"] {
        let x = fs::read(a.join(name).join("trace.csv")).unwrap();
        let y = fs::read(b.join(name).join("trace.csv")).unwrap();
        assert_eq!(x, y, "{name}");
    }
    let lines: Vec<String> = String::from_utf8(parallel.stdout).unwrap().lines().map(|l| l.split(' ').take(3).collect::<Vec<_>>().join(" ")).collect();
    assert_eq!(lines, ["flow heat PASS", "flow heat-2 PASS"]);
}

#[test]
fn spectrum_is_printed() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), SPECTRUM);
    let o = run("spectrum", &cfg, &dir.path().join("r"), &[]);
    assert_eq!(o.status.code(), Some(0));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.lines().count() >= 2, "{stdout}");
    assert!(dir.path().join("r/neg-cos/spectrum.csv").exists());
}

#[test]
fn failed_assertion_exits_with_two() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), TIGHT_GAP);
    let o = run("flow", &cfg, &dir.path().join("r"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8(o.stdout).unwrap().contains("flow short FAIL"));
}

#[test]
fn config_errors_exit_with_three() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), SPECTRUM);
    let out = dir.path().join("r");
    assert_eq!(run("flow", &cfg, &out, &[]).status.code(), Some(3));
    assert_eq!(run("flow", &dir.path().join("missing.toml"), &out, &[]).status.code(), Some(3));
    assert_eq!(run("spectrum", &cfg, &out, &["--jobs", "0"]).status.code(), Some(3));
    assert_eq!(lab(&["warp", "--config", "x.toml"]).status.code(), Some(3));
    let bad = write_config(dir.path(), "[[experiment]]\nname = \"x\"\nkind = \"flow\"\nwidth = 3\n");
    assert_eq!(run("flow", &bad, &out, &[]).status.code(), Some(3));
}
