//! Scenario files: a TOML description of the equation, the solution source,
//! the mesh, the time grid, energy windows, test functions and tolerances.
//!
//! ```toml
//! equation = "CH"
//!
//! [source]
//! kind = "peakon_antipeakon"
//! p0 = 2.0
//! q0 = -0.2876820724517809
//!
//! [[windows]]
//! alpha = -0.5
//! beta = 0.5
//!
//! [[test_functions]]
//! kind = "indicator"
//! a = -1.0
//! b = 1.0
//! ```

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::characteristics::{uniform_times, Side, TraceOptions};
use crate::exact::{derive_params, PeakonAntipeakonParams};
use crate::kernel::{KernelId, KernelSpec};
use crate::measures::{LimitOptions, StepFunction, TestFunction};
use crate::mesh::MeshSpec;
use crate::ode::OdeOptions;
use crate::solver::{MultipeakonState, SolutionHandle, SolverOptions};

/// Invalid or unreadable configuration.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Equation {
    #[serde(rename = "CH")]
    CamassaHolm,
    #[serde(rename = "HS")]
    HunterSaxton,
}

impl Equation {
    pub fn kernel(self) -> KernelSpec {
        match self {
            Equation::CamassaHolm => KernelSpec::for_id(KernelId::CamassaHolm),
            Equation::HunterSaxton => KernelSpec::for_id(KernelId::HunterSaxton),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceConfig {
    PeakonAntipeakon { p0: f64, q0: f64 },
    Multipeakon { positions: Vec<f64>, momenta: Vec<f64> },
    SinglePeakon { c: f64 },
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    /// End of the span; defaults to twice the collision time for the
    /// peakon-antipeakon source and to `1` otherwise.
    pub t_end: Option<f64>,
    /// Uniform samples written to the trajectory and used for `ν`.
    pub samples: usize,
    /// Replace `u` by `-u(t_rev - t)` on `[0, t_rev]`.
    pub reverse_at: Option<f64>,
    /// Candidate atom times; defaults to the solver's collision times.
    pub atom_candidates: Option<Vec<f64>>,
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self {
            t_end: None,
            samples: 101,
            reverse_at: None,
            atom_candidates: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TestFunctionConfig {
    Indicator {
        a: f64,
        b: f64,
    },
    Hat {
        center: f64,
        half_width: f64,
    },
    Step {
        breakpoints: Vec<f64>,
        coefficients: Vec<f64>,
    },
    PiecewiseLinear {
        knots: Vec<f64>,
        values: Vec<f64>,
    },
}

impl TestFunctionConfig {
    pub fn build(&self) -> crate::Result<TestFunction> {
        match self {
            TestFunctionConfig::Indicator { a, b } => TestFunction::indicator(*a, *b),
            TestFunctionConfig::Hat { center, half_width } => TestFunction::hat(*center, *half_width),
            TestFunctionConfig::Step {
                breakpoints,
                coefficients,
            } => Ok(TestFunction::Step(StepFunction::new(
                breakpoints.clone(),
                coefficients.clone(),
            )?)),
            TestFunctionConfig::PiecewiseLinear { knots, values } => {
                TestFunction::piecewise_linear(knots.clone(), values.clone())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowGrid {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CharacteristicsConfig {
    pub starts: Vec<f64>,
    /// Selection used for the per-start curves; the flow map always uses
    /// leftmost characteristics.
    pub side: Side,
    pub v_along: bool,
    pub samples: usize,
    pub flow_grid: Option<FlowGrid>,
}

impl Default for CharacteristicsConfig {
    fn default() -> Self {
        Self {
            starts: Vec::new(),
            side: Side::Plain,
            v_along: true,
            samples: 201,
            flow_grid: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub ode_rtol: f64,
    pub ode_atol: f64,
    pub gap_floor: f64,
    pub trace_rtol: f64,
    pub trace_atol: f64,
    pub kink_tol: f64,
    pub limit_delta: f64,
    pub limit_levels: usize,
    pub noise_factor: f64,
    pub atom_floor: f64,
    pub kernel_samples: usize,
    pub oracle_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        let ode = OdeOptions::default();
        let tr = TraceOptions::default();
        let lim = LimitOptions::default();
        Self {
            ode_rtol: ode.rtol,
            ode_atol: ode.atol,
            gap_floor: SolverOptions::default().gap_floor,
            trace_rtol: tr.ode.rtol,
            trace_atol: tr.ode.atol,
            kink_tol: tr.kink_tol,
            limit_delta: lim.delta,
            limit_levels: lim.k_max,
            noise_factor: lim.noise_factor,
            atom_floor: lim.atom_floor,
            kernel_samples: 10_000,
            oracle_tol: 1e-5,
        }
    }
}

impl Tolerances {
    pub fn solver(&self) -> SolverOptions {
        SolverOptions {
            ode: OdeOptions {
                rtol: self.ode_rtol,
                atol: self.ode_atol,
                ..OdeOptions::default()
            },
            gap_floor: self.gap_floor,
        }
    }

    pub fn trace(&self, samples: usize) -> TraceOptions {
        TraceOptions {
            ode: OdeOptions {
                rtol: self.trace_rtol,
                atol: self.trace_atol,
                ..OdeOptions::default()
            },
            samples,
            kink_tol: self.kink_tol,
            ..TraceOptions::default()
        }
    }

    pub fn limits(&self) -> LimitOptions {
        LimitOptions {
            delta: self.limit_delta,
            k_max: self.limit_levels,
            noise_factor: self.noise_factor,
            atom_floor: self.atom_floor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub equation: Equation,
    pub source: SourceConfig,
    #[serde(default)]
    pub mesh: MeshSpec,
    #[serde(default)]
    pub time: TimeConfig,
    #[serde(default)]
    pub windows: Vec<WindowConfig>,
    #[serde(default)]
    pub test_functions: Vec<TestFunctionConfig>,
    #[serde(default)]
    pub characteristics: CharacteristicsConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| bad(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn kernel(&self) -> KernelSpec {
        self.equation.kernel()
    }

    /// Collision parameters of the peakon-antipeakon source.
    pub fn pair_params(&self) -> Result<Option<PeakonAntipeakonParams>, ConfigError> {
        match self.source {
            SourceConfig::PeakonAntipeakon { p0, q0 } => {
                derive_params(p0, q0).map(Some).map_err(|e| bad(format!("source: {e}")))
            }
            _ => Ok(None),
        }
    }

    pub fn t_end(&self) -> f64 {
        let natural = match self.pair_params() {
            Ok(Some(p)) => 2.0 * p.t_collision,
            _ => 1.0,
        };
        self.time.reverse_at.unwrap_or(self.time.t_end.unwrap_or(natural))
    }

    /// Checks every precondition that does not need numerical work.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let peakon_source = !matches!(self.source, SourceConfig::Zero);
        if self.equation == Equation::HunterSaxton && peakon_source {
            return Err(bad(
                "source: peakon sources solve the CH equation only; use kind = \"zero\" for HS",
            ));
        }
        match &self.source {
            SourceConfig::PeakonAntipeakon { .. } => {
                self.pair_params()?;
            }
            SourceConfig::Multipeakon { positions, momenta } => {
                MultipeakonState::new(positions.clone(), momenta.clone(), 0.0)
                    .map_err(|e| bad(format!("source: {e}")))?;
            }
            SourceConfig::SinglePeakon { c } if !c.is_finite() => return Err(bad("source: c must be finite")),
            _ => {}
        }
        self.mesh.validate().map_err(|e| bad(format!("mesh: {e}")))?;
        if let Some(t) = self.time.t_end {
            if !(t > 0.0) || !t.is_finite() {
                return Err(bad(format!("time.t_end must be positive, got {t}")));
            }
        }
        if let Some(tr) = self.time.reverse_at {
            let full = self.time.t_end.unwrap_or(tr);
            if !(tr > 0.0) || tr > full {
                return Err(bad(format!("time.reverse_at must lie in (0, t_end], got {tr}")));
            }
        }
        if self.time.samples < 2 {
            return Err(bad("time.samples must be at least 2"));
        }
        for (i, w) in self.windows.iter().enumerate() {
            if !(w.alpha < w.beta) {
                return Err(bad(format!("windows[{i}]: need alpha < beta")));
            }
        }
        for (i, f) in self.test_functions.iter().enumerate() {
            f.build().map_err(|e| bad(format!("test_functions[{i}]: {e}")))?;
        }
        if let Some(g) = self.characteristics.flow_grid {
            if !(g.lo < g.hi) || g.n < 2 {
                return Err(bad("characteristics.flow_grid: need lo < hi and n >= 2"));
            }
        }
        if self.characteristics.samples < 2 {
            return Err(bad("characteristics.samples must be at least 2"));
        }
        let t = &self.tolerances;
        let positive = [
            t.ode_rtol,
            t.ode_atol,
            t.gap_floor,
            t.trace_rtol,
            t.trace_atol,
            t.kink_tol,
            t.limit_delta,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) || !(t.oracle_tol > 0.0) {
            return Err(bad("tolerances must be positive"));
        }
        if t.limit_levels < crate::measures::MIN_LEVELS {
            return Err(bad(format!(
                "tolerances.limit_levels must be at least {}",
                crate::measures::MIN_LEVELS
            )));
        }
        if t.kernel_samples == 0 {
            return Err(bad("tolerances.kernel_samples must be positive"));
        }
        Ok(())
    }

    /// The solution on `[0, t_end]` with the mesh refined by `refine`.
    pub fn build_handle(&self, refine: f64) -> crate::Result<SolutionHandle> {
        let span_end = self.time.t_end.unwrap_or_else(|| self.t_end());
        let handle = match &self.source {
            SourceConfig::PeakonAntipeakon { p0, q0 } => {
                SolutionHandle::exact_peakon_antipeakon(derive_params(*p0, *q0)?, span_end)?
            }
            SourceConfig::Multipeakon { positions, momenta } => {
                let s = MultipeakonState::new(positions.clone(), momenta.clone(), 0.0)?;
                SolutionHandle::multipeakon(&s, span_end, &self.tolerances.solver())?
            }
            SourceConfig::SinglePeakon { c } => SolutionHandle::single_peakon(*c, span_end)?,
            SourceConfig::Zero => SolutionHandle::zero(span_end)?.with_kernel(self.kernel()),
        };
        let mesh = self.mesh.refined(refine);
        let handle = handle.with_mesh(mesh);
        match self.time.reverse_at {
            Some(tr) => Ok(SolutionHandle::reversed(Arc::new(handle), tr)?.with_mesh(mesh)),
            None => Ok(handle),
        }
    }

    /// Uniform sample times, `time.samples · refine` of them.
    pub fn sample_times(&self, refine: f64) -> Vec<f64> {
        let n = ((self.time.samples - 1) as f64 * refine).round().max(1.0) as usize + 1;
        uniform_times(0.0, self.t_end(), n)
    }

    pub fn test_functions(&self) -> crate::Result<Vec<TestFunction>> {
        self.test_functions.iter().map(|f| f.build()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PAIR: &str = r#"
equation = "CH"
[source]
kind = "peakon_antipeakon"
p0 = 2.0
q0 = -0.2876820724517809
[[windows]]
alpha = -0.5
beta = 0.5
[[test_functions]]
kind = "indicator"
a = -1.0
b = 1.0
"#;

    #[test]
    fn parses_and_defaults() {
        let c = ScenarioConfig::from_toml(PAIR).unwrap();
        assert!((c.t_end() - 2.0 * 3f64.ln()).abs() < 1e-12);
        assert_eq!(c.mesh, MeshSpec::default());
        assert_eq!(c.tolerances, Tolerances::default());
        assert_eq!(ScenarioConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn rejects_unknown_keys() {
        let text = PAIR.replace("p0 = 2.0", "p0 = 2.0\nspeed = 1.0");
        assert!(ScenarioConfig::from_toml(&text).is_err());
        let text = format!("{PAIR}\n[tolerances]\nfoo = 1.0\n");
        assert!(ScenarioConfig::from_toml(&text).is_err());
    }

    #[test]
    fn invalid_q0_names_derive_params() {
        let text = PAIR.replace("q0 = -0.2876820724517809", "q0 = 1.0");
        let e = ScenarioConfig::from_toml(&text).unwrap_err();
        assert!(e.0.contains("derive_params"), "{e}");
    }

    #[test]
    fn hs_needs_zero_source() {
        let text = PAIR.replace("\"CH\"", "\"HS\"");
        assert!(ScenarioConfig::from_toml(&text).is_err());
    }

    #[test]
    fn refinement_doubles_samples() {
        let c = ScenarioConfig::from_toml(PAIR).unwrap();
        assert_eq!(c.sample_times(1.0).len(), 101);
        assert_eq!(c.sample_times(2.0).len(), 201);
    }
}
