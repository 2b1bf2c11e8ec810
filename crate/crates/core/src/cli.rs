//! The `chlab` command line: every command reads a scenario file and writes
//! data files into the output directory.
//!
//! Exit codes: `0` success, `2` invalid configuration or arguments, `3`
//! numerical failure, `4` unreadable trajectory.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::characteristics;
use crate::config::{ScenarioConfig, SourceConfig};
use crate::error::Error;
use crate::kernel::{self, DecompositionReport, KernelSpec, LipschitzReport};
use crate::measures::{self, MeasureReport, Sign, TestFunction};
use crate::output::write_atomic;
use crate::solver::{self, OracleReport, SolutionHandle, SourceKind};
use crate::WaveProfile;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_TRAJECTORY: i32 = 4;

/// Fraction of the collision time covered by `oracle-compare`.
pub const ORACLE_FRACTION: f64 = 0.9;

#[derive(Debug, Parser)]
#[command(
    name = "chlab",
    version,
    about = "Characteristics and slope-energy measures for CH/HS weak solutions"
)]
pub struct Cli {
    /// Scenario file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Seed for random probes.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Mesh and time-grid refinement factor.
    #[arg(long, global = true, default_value_t = 1.0)]
    pub refine: f64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Sample the scenario and write `trajectory.csv`.
    Simulate,
    /// Energy ledgers per window and measure reports per test function.
    EnergyReport {
        /// Trajectory to analyse; defaults to `<out>/trajectory.csv`.
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Characteristic curves per start point and an optional flow map.
    Characteristics {
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
    /// Random checks of the kernel decomposition and Lipschitz bound.
    KernelCheck,
    /// Integrated peakon-antipeakon pair against the closed form.
    OracleCompare,
}

/// Why a command stopped.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Failure {
    #[error("config: {0}")]
    Config(String),
    #[error("{op}: {err}")]
    Numerical { op: &'static str, err: Error },
    #[error("{op}: {reason}")]
    Check { op: &'static str, reason: String },
    #[error("trajectory {path}: {reason}")]
    Trajectory { path: String, reason: String },
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Numerical { .. } | Failure::Check { .. } => EXIT_NUMERICAL,
            Failure::Trajectory { .. } => EXIT_TRAJECTORY,
        }
    }
}

fn numerical(op: &'static str) -> impl Fn(Error) -> Failure {
    move |err| Failure::Numerical { op, err }
}

/// What a successful command produced.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub written: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

impl Outcome {
    fn write(&mut self, path: PathBuf, text: &str) -> Result<(), Failure> {
        write_atomic(&path, text.as_bytes()).map_err(numerical("write"))?;
        self.written.push(path);
        Ok(())
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code; diagnostics go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(out) => {
            for w in &out.warnings {
                eprintln!("warning: {w}");
            }
            for p in &out.written {
                println!("{}", p.display());
            }
            0
        }
        Err(f) => {
            eprintln!("error: {f}");
            f.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<Outcome, Failure> {
    if !(cli.refine >= 1.0) || !cli.refine.is_finite() {
        return Err(Failure::Config(format!(
            "--refine must be a finite factor >= 1, got {}",
            cli.refine
        )));
    }
    let config = cli
        .config
        .as_deref()
        .map(ScenarioConfig::load)
        .transpose()
        .map_err(|e| Failure::Config(e.0))?;
    std::fs::create_dir_all(&cli.out).map_err(|e| Failure::Numerical {
        op: "create output directory",
        err: e.into(),
    })?;
    let need = || {
        config
            .as_ref()
            .ok_or_else(|| Failure::Config("this command needs --config".into()))
    };
    match &cli.command {
        Command::Simulate => simulate(need()?, &cli.out, cli.refine),
        Command::EnergyReport { trajectory } => {
            let cfg = need()?;
            let handle = load_trajectory(cfg, &trajectory_path(&cli.out, trajectory), cli.refine)?;
            energy_report(cfg, &handle, &cli.out)
        }
        Command::Characteristics { trajectory } => {
            let cfg = need()?;
            let handle = load_trajectory(cfg, &trajectory_path(&cli.out, trajectory), cli.refine)?;
            characteristics_cmd(cfg, &handle, &cli.out)
        }
        Command::KernelCheck => kernel_check(config.as_ref(), &cli.out, cli.seed),
        Command::OracleCompare => oracle_cmd(need()?, &cli.out, cli.refine),
    }
}

fn trajectory_path(out: &Path, given: &Option<PathBuf>) -> PathBuf {
    given.clone().unwrap_or_else(|| out.join("trajectory.csv"))
}

pub fn simulate(cfg: &ScenarioConfig, out: &Path, refine: f64) -> Result<Outcome, Failure> {
    let handle = cfg.build_handle(refine).map_err(numerical("simulate"))?;
    let times = cfg.sample_times(refine);
    let profiles = handle.sample(&times).map_err(numerical("simulate"))?;
    let mut o = Outcome::default();
    o.write(
        out.join("trajectory.csv"),
        &solver::trajectory_to_string(handle.kind(), cfg.t_end(), &profiles),
    )?;
    Ok(o)
}

/// Largest nodal deviation of the sampled profiles from `handle`.
fn deviation(handle: &SolutionHandle, profiles: &[WaveProfile]) -> Option<f64> {
    let mut worst: f64 = 0.0;
    for p in profiles {
        let snap = handle.snapshot(p.time_stamp()).ok()?;
        for (x, v) in p.nodes().iter().zip(p.values()) {
            worst = worst.max((snap.u(*x) - v).abs());
        }
    }
    Some(worst)
}

/// Reads a trajectory. When the file is the sampling of the configured
/// scenario, the analytic handle is returned so that limits near collisions
/// are resolved exactly; otherwise the file is interpolated linearly in time.
pub fn load_trajectory(cfg: &ScenarioConfig, path: &Path, refine: f64) -> Result<SolutionHandle, Failure> {
    let unreadable = |reason: String| Failure::Trajectory {
        path: path.display().to_string(),
        reason,
    };
    let text = std::fs::read_to_string(path).map_err(|e| unreadable(e.to_string()))?;
    let (kind, t_end, profiles) = solver::trajectory_from_str(&text).map_err(|e| unreadable(e.to_string()))?;
    if kind != SourceKind::FromFile && (t_end - cfg.t_end()).abs() <= 1e-12 * t_end.abs().max(1.0) {
        if let Ok(h) = cfg.build_handle(refine) {
            let scale = h.energy_sup().sqrt().max(1.0);
            if h.kind() == kind && deviation(&h, &profiles).is_some_and(|d| d <= 1e-9 * scale) {
                return Ok(h);
            }
        }
    }
    SolutionHandle::from_profiles(profiles, cfg.kernel())
        .map(|h| h.with_mesh(cfg.mesh.refined(refine)))
        .map_err(|e| unreadable(e.to_string()))
}

/// Contents of `measures_<j>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureFile {
    pub test_function: TestFunction,
    pub mu_plus: MeasureReport,
    pub mu_minus: MeasureReport,
    pub nu_plus: MeasureReport,
    pub nu_minus: MeasureReport,
}

impl MeasureFile {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("measure file serializes")
    }

    pub fn from_json(text: &str) -> crate::Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}

fn sample_grid(handle: &SolutionHandle, cfg: &ScenarioConfig) -> Vec<f64> {
    let (a, b) = handle.span();
    let n = cfg.sample_times(1.0).len();
    characteristics::uniform_times(a, b, n)
}

/// Atom candidates: configured times, else the handle's events, kept
/// strictly inside the span.
fn atom_candidates(cfg: &ScenarioConfig, handle: &SolutionHandle) -> Vec<f64> {
    let (a, b) = handle.span();
    let ts = cfg.time.atom_candidates.clone().unwrap_or_else(|| handle.event_times());
    ts.into_iter().filter(|&t| t > a && t < b).collect()
}

pub fn energy_report(cfg: &ScenarioConfig, handle: &SolutionHandle, out: &Path) -> Result<Outcome, Failure> {
    let times = sample_grid(handle, cfg);
    let trace = cfg.tolerances.trace(cfg.characteristics.samples);
    let ledgers: Vec<String> = cfg
        .windows
        .par_iter()
        .map(|w| {
            measures::window_ledger_with(handle, w.alpha, w.beta, &times, &trace)
                .map(|l| measures::ledger_to_csv(&l))
                .map_err(numerical("window_ledger"))
        })
        .collect::<Result<_, _>>()?;
    let phis = cfg.test_functions().map_err(|e| Failure::Config(e.to_string()))?;
    let candidates = atom_candidates(cfg, handle);
    let limits = cfg.tolerances.limits();
    let files: Vec<MeasureFile> = phis
        .into_par_iter()
        .map(|phi| {
            let (mu_plus, mu_minus) =
                measures::mu_atoms(handle, &phi, &candidates, &limits).map_err(numerical("mu_atoms"))?;
            let nu_plus = measures::nu_measure(handle, &phi, Sign::Plus, &times).map_err(numerical("nu_measure"))?;
            let nu_minus = measures::nu_measure(handle, &phi, Sign::Minus, &times).map_err(numerical("nu_measure"))?;
            Ok(MeasureFile {
                test_function: phi,
                mu_plus,
                mu_minus,
                nu_plus,
                nu_minus,
            })
        })
        .collect::<Result<_, Failure>>()?;
    let mut o = Outcome::default();
    for (i, text) in ledgers.iter().enumerate() {
        o.write(out.join(format!("ledger_{i}.csv")), text)?;
    }
    for (j, f) in files.iter().enumerate() {
        o.write(out.join(format!("measures_{j}.json")), &f.to_json())?;
    }
    Ok(o)
}

pub fn characteristics_cmd(cfg: &ScenarioConfig, handle: &SolutionHandle, out: &Path) -> Result<Outcome, Failure> {
    let cc = &cfg.characteristics;
    let opts = cfg.tolerances.trace(cc.samples);
    let (t0, t1) = handle.span();
    let traced: Vec<(String, Option<String>)> = cc
        .starts
        .par_iter()
        .map(|&x| {
            let ch = characteristics::trace_with(handle, x, t0, t1, cc.side, &opts).map_err(numerical("trace"))?;
            if !cc.v_along {
                return Ok((characteristics::characteristic_to_csv(&ch), None));
            }
            match characteristics::v_along_with(handle, &ch, &opts) {
                Ok(with_v) => Ok((characteristics::characteristic_to_csv(&with_v), None)),
                Err(e @ Error::SlopeMismatch { .. }) => Ok((
                    characteristics::characteristic_to_csv(&ch),
                    Some(format!("start {x}: {e}; v column omitted")),
                )),
                Err(e) => Err(Failure::Numerical { op: "v_along", err: e }),
            }
        })
        .collect::<Result<_, Failure>>()?;
    let mut o = Outcome::default();
    for (i, (text, warning)) in traced.into_iter().enumerate() {
        o.write(out.join(format!("characteristic_{i}.csv")), &text)?;
        o.warnings.extend(warning);
    }
    if let Some(g) = cc.flow_grid {
        let starts = characteristics::uniform_times(g.lo, g.hi, g.n);
        let map = characteristics::flow_map_with(handle, &starts, t1, &opts).map_err(numerical("flow_map"))?;
        if !map.monotone {
            o.warnings.push("flow map is not monotone".into());
        }
        o.write(out.join("flow_map.csv"), &characteristics::flow_map_to_csv(&map))?;
    }
    Ok(o)
}

/// One entry of `kernel_check.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelCheck {
    pub kernel: KernelSpec,
    pub seed: u64,
    pub lipschitz: LipschitzReport,
    pub decomposition: DecompositionReport,
}

impl KernelCheck {
    pub fn pass(&self) -> bool {
        self.lipschitz.pass && self.decomposition.pass
    }
}

pub fn run_kernel_check(spec: &KernelSpec, samples: usize, seed: u64) -> crate::Result<KernelCheck> {
    Ok(KernelCheck {
        kernel: *spec,
        seed,
        lipschitz: kernel::verify_one_sided_lipschitz(spec, samples, seed)?,
        decomposition: kernel::verify_decomposition(spec, samples, seed)?,
    })
}

/// Checks the configured kernel, or both kernels without a config.
pub fn kernel_check(cfg: Option<&ScenarioConfig>, out: &Path, seed: u64) -> Result<Outcome, Failure> {
    let (specs, samples) = match cfg {
        Some(c) => (vec![c.kernel()], c.tolerances.kernel_samples),
        None => (vec![KernelSpec::camassa_holm(), KernelSpec::hunter_saxton()], 10_000),
    };
    let checks: Vec<KernelCheck> = specs
        .iter()
        .map(|s| run_kernel_check(s, samples, seed).map_err(numerical("kernel-check")))
        .collect::<Result<_, _>>()?;
    let mut o = Outcome::default();
    o.write(
        out.join("kernel_check.json"),
        &serde_json::to_string_pretty(&checks).expect("serializes"),
    )?;
    if let Some(bad) = checks.iter().find(|c| !c.pass()) {
        return Err(Failure::Check {
            op: "kernel-check",
            reason: format!(
                "{:?}: min quotient {}, reconstruction error {:e}, {} bound violations",
                bad.kernel.kernel_id,
                bad.lipschitz.min_quotient,
                bad.decomposition.max_reconstruction_error,
                bad.decomposition.bound_violations
            ),
        });
    }
    Ok(o)
}

/// Contents of `oracle_compare.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleFile {
    pub t_collision: f64,
    pub tolerance: f64,
    pub report: OracleReport,
    pub pass: bool,
}

pub fn oracle_cmd(cfg: &ScenarioConfig, out: &Path, refine: f64) -> Result<Outcome, Failure> {
    if !matches!(cfg.source, SourceConfig::PeakonAntipeakon { .. }) {
        return Err(Failure::Config(
            "oracle-compare needs a peakon_antipeakon source".into(),
        ));
    }
    let params = cfg
        .pair_params()
        .map_err(|e| Failure::Config(e.0))?
        .expect("pair source");
    let samples = cfg.sample_times(refine).len();
    let report = solver::oracle_compare(
        &params,
        ORACLE_FRACTION * params.t_collision,
        samples,
        &cfg.tolerances.solver(),
    )
    .map_err(numerical("oracle_compare"))?;
    let tol = cfg.tolerances.oracle_tol;
    let file = OracleFile {
        t_collision: params.t_collision,
        tolerance: tol,
        report,
        pass: report.max_error <= tol,
    };
    let mut o = Outcome::default();
    o.write(
        out.join("oracle_compare.json"),
        &serde_json::to_string_pretty(&file).expect("serializes"),
    )?;
    if !file.pass {
        return Err(Failure::Check {
            op: "oracle-compare",
            reason: format!(
                "sup error {:e} at t = {} exceeds {tol:e}",
                report.max_error, report.worst_t
            ),
        });
    }
    Ok(o)
}
