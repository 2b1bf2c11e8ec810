use std::fs;
use std::path::{Path, PathBuf};

use chlab::characteristics::{characteristic_from_csv, flow_map_from_csv};
use chlab::cli::{self, KernelCheck, MeasureFile, OracleFile};
use chlab::measures::ledger_from_csv;
use chlab::solver::read_trajectory;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn run(config: Option<&Path>, out: &Path, command: &str, extra: &[&str]) -> i32 {
    let mut args = vec!["chlab".to_string()];
    if let Some(c) = config {
        args.extend(["--config".into(), c.display().to_string()]);
    }
    args.extend(["--out".into(), out.display().to_string(), "--seed".into(), "7".into()]);
    args.push(command.into());
    args.extend(extra.iter().map(|s| s.to_string()));
    cli::run(args)
}

fn run_all(config: &Path, out: &Path) {
    for command in ["simulate", "energy-report", "characteristics", "kernel-check"] {
        assert_eq!(
            run(Some(config), out, command, &[]),
            0,
            "{command} on {}",
            config.display()
        );
    }
}

fn listing(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn identical_runs_write_identical_bytes() {
    for name in ["peakon_antipeakon.toml", "overtaking.toml"] {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        run_all(&scenario(name), a.path());
        run_all(&scenario(name), b.path());
        let (la, lb) = (listing(a.path()), listing(b.path()));
        assert!(!la.is_empty());
        assert_eq!(la.len(), lb.len());
        for ((na, ba), (nb, bb)) in la.iter().zip(&lb) {
            assert_eq!(na, nb);
            assert!(ba == bb, "{name}: {na} differs between runs");
        }
    }
}

#[test]
fn every_emitted_file_reads_back() {
    for name in [
        "peakon_antipeakon.toml",
        "single_peakon.toml",
        "overtaking.toml",
        "reversed_pair.toml",
        "hunter_saxton_zero.toml",
    ] {
        let dir = tempfile::tempdir().unwrap();
        run_all(&scenario(name), dir.path());
        if name == "peakon_antipeakon.toml" {
            assert_eq!(run(Some(&scenario(name)), dir.path(), "oracle-compare", &[]), 0);
        }
        for (file, bytes) in listing(dir.path()) {
            let text = String::from_utf8(bytes).unwrap();
            let path = dir.path().join(&file);
            if file == "trajectory.csv" {
                let (_, _, profiles) = read_trajectory(&path).unwrap();
                assert!(!profiles.is_empty(), "{name}: empty trajectory");
            } else if file.starts_with("ledger_") {
                let (t, plus, minus) = ledger_from_csv(&text).unwrap();
                assert!(!t.is_empty() && t.len() == plus.len() && t.len() == minus.len());
            } else if file.starts_with("measures_") {
                let m = MeasureFile::from_json(&text).unwrap();
                assert_eq!(MeasureFile::from_json(&m.to_json()).unwrap(), m);
            } else if file.starts_with("characteristic_") {
                assert!(!characteristic_from_csv(&text).unwrap().is_empty());
            } else if file == "flow_map.csv" {
                let (starts, ends) = flow_map_from_csv(&text).unwrap();
                assert_eq!(starts.len(), ends.len());
            } else if file == "kernel_check.json" {
                let checks: Vec<KernelCheck> = serde_json::from_str(&text).unwrap();
                assert!(checks.iter().all(KernelCheck::pass));
            } else if file == "oracle_compare.json" {
                let o: OracleFile = serde_json::from_str(&text).unwrap();
                assert!(o.pass);
            } else {
                panic!("{name}: unexpected output {file}");
            }
        }
    }
}

#[test]
fn energy_report_reuses_a_written_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let config = scenario("overtaking.toml");
    assert_eq!(run(Some(&config), dir.path(), "simulate", &[]), 0);
    let traj = dir.path().join("trajectory.csv");
    let other = tempfile::tempdir().unwrap();
    let code = run(
        Some(&config),
        other.path(),
        "energy-report",
        &["--trajectory", traj.to_str().unwrap()],
    );
    assert_eq!(code, 0);
    assert!(other.path().join("ledger_0.csv").exists());
}

#[test]
fn refine_below_one_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = scenario("single_peakon.toml");
    let args = [
        "chlab",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--refine",
        "0.5",
        "simulate",
    ];
    assert_eq!(cli::run(args), 2);
}

#[test]
fn oracle_compare_rejects_other_sources() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        run(Some(&scenario("single_peakon.toml")), dir.path(), "oracle-compare", &[]),
        2
    );
}
