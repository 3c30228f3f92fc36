use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cogmac_cli::error::{CliError, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NON_CONVERGENCE};
use cogmac_cli::ExperimentConfig;

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn bundled() -> Vec<PathBuf> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(configs_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    paths.sort();
    paths
}

fn cogmac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cogmac")).args(args).output().unwrap()
}

fn config(name: &str) -> String {
    configs_dir().join(name).to_str().unwrap().to_string()
}

/// Column `name` of the row whose `method` is `method`.
fn cell(csv: &str, method: &str, name: &str) -> f64 {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| h.starts_with(name)).unwrap();
    let m = header.iter().position(|h| *h == "method").unwrap();
    let row: Vec<&str> = lines
        .map(|l| l.split(',').collect::<Vec<_>>())
        .find(|r| r[m] == method)
        .unwrap();
    row[col].parse().unwrap()
}

fn run_into(cfg: &str, dir: &Path, runs: &str) -> String {
    let out = cogmac(&["run", cfg, "--runs", runs, "--out-dir", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    std::fs::read_to_string(dir.join("summary.csv")).unwrap()
}

#[test]
fn bundled_configs_validate_and_round_trip() {
    let paths = bundled();
    assert!(paths.len() >= 6);
    for path in paths {
        let cfg = ExperimentConfig::load(&path).unwrap();
        let again = ExperimentConfig::parse(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(cfg, again, "{}", path.display());
        let out = cogmac(&["validate", path.to_str().unwrap(), "--canonical"]);
        assert!(out.status.success());
        let printed = ExperimentConfig::parse(&String::from_utf8(out.stdout).unwrap()).unwrap();
        assert_eq!(printed, cfg);
    }
}

#[test]
fn strict_unslotted_summary_reports_reference_rate() {
    let dir = tempfile::tempdir().unwrap();
    let summary = run_into(&config("unslotted-strict.toml"), dir.path(), "2");
    let r = cell(&summary, "two_periods", "analytic_throughput");
    assert!((r - 3.8068).abs() <= 0.02 * 3.8068, "{r}");
    assert!(r >= cell(&summary, "single_period", "analytic_throughput"));
    assert!(cell(&summary, "two_periods", "constraint_slack") >= -1e-6);
    for file in ["summary.csv", "trace.csv", "channels.csv"] {
        assert!(dir.path().join(file).exists());
    }
}

#[test]
fn informed_throughput_stays_under_genie_bound() {
    let dir = tempfile::tempdir().unwrap();
    let summary = run_into(&config("slotted-informed-vs-bound.toml"), dir.path(), "40");
    let informed = cell(&summary, "full_sensing_informed", "mean_throughput");
    let se = cell(&summary, "full_sensing_informed", "std_error");
    let bound = cell(&summary, "full_sensing_informed", "genie_bound");
    assert!(informed <= bound + 3.0 * se, "{informed} > {bound}");
}

#[test]
fn reruns_are_byte_identical() {
    for (name, runs) in [
        ("slotted-memoryless.toml", "8"),
        ("unslotted-hopping.toml", "3"),
        ("unslotted-relaxed.toml", "2"),
    ] {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        run_into(&config(name), a.path(), runs);
        run_into(&config(name), b.path(), runs);
        for file in ["summary.csv", "trace.csv", "channels.csv"] {
            let (pa, pb) = (a.path().join(file), b.path().join(file));
            if pa.exists() || pb.exists() {
                assert_eq!(std::fs::read(pa).unwrap(), std::fs::read(pb).unwrap(), "{name} {file}");
            }
        }
    }
}

#[test]
fn seed_override_changes_results() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = config("slotted-memoryless.toml");
    let first = run_into(&cfg, a.path(), "4");
    let out = cogmac(&["run", &cfg, "--runs", "4", "--seed", "99", "--out-dir", b.path().to_str().unwrap()]);
    assert!(out.status.success());
    assert_ne!(first, std::fs::read_to_string(b.path().join("summary.csv")).unwrap());
}

#[test]
fn numeric_headers_carry_units() {
    let dir = tempfile::tempdir().unwrap();
    run_into(&config("unslotted-hopping.toml"), dir.path(), "1");
    for file in ["summary.csv", "trace.csv", "channels.csv"] {
        let text = std::fs::read_to_string(dir.path().join(file)).unwrap();
        let header = text.lines().next().unwrap();
        for column in header.split(',').filter(|c| !matches!(*c, "scenario" | "method")) {
            assert!(column.contains('[') && column.ends_with(']'), "{file}: {column}");
        }
    }
}

#[test]
fn malformed_config_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "scenario = \"slotted_full\"\nseed = 1\nruns = \"many\"\n").unwrap();
    let out = cogmac(&["validate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(EXIT_CONFIG as i32));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("line 3") && err.contains("runs"), "{err}");

    let out = cogmac(&["run", dir.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(EXIT_CONFIG as i32));

    let out = cogmac(&["optimize", &config("slotted-memoryless.toml")]);
    assert_eq!(out.status.code(), Some(EXIT_CONFIG as i32));
}

#[test]
fn unreachable_interference_limit_exits_as_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("loose.toml");
    let text = std::fs::read_to_string(configs_dir().join("unslotted-hopping.toml"))
        .unwrap()
        .replace("interference_fraction = 0.5", "interference_fraction = 1.5");
    std::fs::write(&path, text).unwrap();
    let out = cogmac(&["optimize", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(EXIT_INFEASIBLE as i32));
}

#[test]
fn exit_codes_follow_error_class() {
    let codes = [
        (CliError::Config("x".into()), EXIT_CONFIG),
        (cogmac::Error::Infeasible("x".into()).into(), EXIT_INFEASIBLE),
        (cogmac::Error::NonConvergence("x".into()).into(), EXIT_NON_CONVERGENCE),
        (cogmac::Error::DegenerateChain.into(), EXIT_CONFIG),
    ];
    for (err, code) in codes {
        assert_eq!(err.exit_code(), code, "{err}");
    }
}
