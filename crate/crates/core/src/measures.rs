//! Slope-energy ledgers between characteristics, one-sided limits by
//! geometric extrapolation, the atoms of `μ±` and the binned measures `ν±_φ`.
//!
//! `μ⁺` at `t` has mass `lim_{s→t⁺} ∫φ(u_x⁺)²(s) - ∫φ(u_x⁺)²(t)` and `μ⁻` has
//! mass `∫φ(u_x⁻)²(t) - lim_{s→t⁻} ∫φ(u_x⁻)²(s)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::characteristics::{self, Characteristic, Side, TraceOptions};
use crate::error::{invalid, Error, Result};
use crate::profile::EnergySplit;
use crate::solver::{Snapshot, SolutionHandle};

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyLedger {
    pub times: Vec<f64>,
    pub e_plus: Vec<f64>,
    pub e_minus: Vec<f64>,
    /// `∫u²` over the window.
    pub e_u: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl EnergyLedger {
    fn from_rows(times: Vec<f64>, rows: Vec<(f64, f64, EnergySplit)>) -> Self {
        let mut l = EnergyLedger {
            times,
            e_plus: Vec::with_capacity(rows.len()),
            e_minus: Vec::with_capacity(rows.len()),
            e_u: Vec::with_capacity(rows.len()),
            alpha: Vec::with_capacity(rows.len()),
            beta: Vec::with_capacity(rows.len()),
        };
        for (a, b, e) in rows {
            l.alpha.push(a);
            l.beta.push(b);
            l.e_plus.push(e.e_plus);
            l.e_minus.push(e.e_minus);
            l.e_u.push(e.e_u);
        }
        l
    }
}

fn window_rows(handle: &SolutionHandle, windows: &[(f64, f64, f64)]) -> Result<Vec<(f64, f64, EnergySplit)>> {
    windows
        .par_iter()
        .map(|&(t, a, b)| {
            if a > b {
                return Err(Error::WindowInverted { t, alpha: a, beta: b });
            }
            Ok((a, b, handle.snapshot(t)?.energy_split(a, b)?))
        })
        .collect()
}

/// `∫(u_x^±)²` over `[α(t), β(t)]` with the window read from traced
/// characteristics.
pub fn ledger(
    handle: &SolutionHandle,
    alpha: &Characteristic,
    beta: &Characteristic,
    times: &[f64],
) -> Result<EnergyLedger> {
    let windows = times
        .iter()
        .map(|&t| Ok((t, alpha.position_at(t)?, beta.position_at(t)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(EnergyLedger::from_rows(times.to_vec(), window_rows(handle, &windows)?))
}

/// Traces leftmost characteristics from `alpha_start`, `beta_start` at the
/// start of the span and evaluates the ledger exactly at `times`.
pub fn window_ledger(
    handle: &SolutionHandle,
    alpha_start: f64,
    beta_start: f64,
    times: &[f64],
) -> Result<EnergyLedger> {
    window_ledger_with(handle, alpha_start, beta_start, times, &TraceOptions::default())
}

pub fn window_ledger_with(
    handle: &SolutionHandle,
    alpha_start: f64,
    beta_start: f64,
    times: &[f64],
    opts: &TraceOptions,
) -> Result<EnergyLedger> {
    let t0 = handle.span().0;
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&i, &j| times[i].total_cmp(&times[j]));
    let sorted: Vec<f64> = order.iter().map(|&i| times[i]).collect();
    let a = characteristics::trace_at(handle, alpha_start, t0, &sorted, Side::Leftmost, opts)?;
    let b = characteristics::trace_at(handle, beta_start, t0, &sorted, Side::Leftmost, opts)?;
    let mut windows = vec![(0.0, 0.0, 0.0); times.len()];
    for (k, &i) in order.iter().enumerate() {
        windows[i] = (times[i], a.samples[k].x, b.samples[k].x);
    }
    Ok(EnergyLedger::from_rows(times.to_vec(), window_rows(handle, &windows)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LimitSide {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OneSidedLimit {
    pub at: f64,
    pub side: LimitSide,
    pub value: f64,
    /// `p` in `|A_k - A_{k+1}| ~ 2^{-pk}`; infinite for a constant series.
    pub convergence_order_estimate: f64,
    pub uncertainty: f64,
}

/// Smallest `K` accepted by [`one_sided_limit`].
pub const MIN_LEVELS: usize = 6;

/// `at ∓ 2^{-k} δ` for `k = 0..=k_max`.
pub fn approach_times(at: f64, side: LimitSide, delta: f64, k_max: usize) -> Vec<f64> {
    let s = if side == LimitSide::Right { 1.0 } else { -1.0 };
    (0..=k_max).map(|k| at + s * delta * 0.5f64.powi(k as i32)).collect()
}

/// Aitken-extrapolated limit of `values[k]` sampled at [`approach_times`].
pub fn one_sided_limit(values: &[f64], at: f64, side: LimitSide) -> Result<OneSidedLimit> {
    one_sided_limit_scaled(values, at, side, 0.0)
}

/// As [`one_sided_limit`], for values computed from terms of size up to
/// `noise_scale`; the rounding part of the uncertainty is taken relative to
/// the larger of that and the values themselves.
pub fn one_sided_limit_scaled(values: &[f64], at: f64, side: LimitSide, noise_scale: f64) -> Result<OneSidedLimit> {
    if values.len() < MIN_LEVELS + 1 {
        return Err(Error::InsufficientSamples {
            needed: MIN_LEVELS + 1,
            got: values.len(),
        });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(invalid("one_sided_limit", "non-finite sample"));
    }
    let n = values.len();
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if values.iter().all(|&v| v == values[0]) {
        return Ok(OneSidedLimit {
            at,
            side,
            value: values[0],
            convergence_order_estimate: f64::INFINITY,
            uncertainty: 0.0,
        });
    }
    let d: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    let tiny = 1e-12 * scale.max(f64::MIN_POSITIVE);
    let ratios: Vec<f64> = d.windows(2).map(|w| (w[1] / w[0]).abs()).collect();
    let tail = &ratios[ratios.len() - 3..];
    if tail.iter().all(|&r| r > 0.9) && d[n - 2].abs() > tiny {
        return Err(Error::NonCauchy {
            ratio: tail[tail.len() - 1],
        });
    }
    let aitken: Vec<f64> = (0..n - 2)
        .map(|k| {
            let (d1, d2) = (d[k], d[k + 1]);
            let den = d2 - d1;
            if den.abs() <= 4.0 * f64::EPSILON * scale || d2 == 0.0 {
                values[k + 2]
            } else {
                values[k + 2] - d2 * d2 / den
            }
        })
        .collect();
    let m = aitken.len();
    let mut value = aitken[m - 1];
    if values.iter().all(|&v| v >= 0.0) {
        value = value.max(0.0);
    }
    let (a, b) = (d[n - 3].abs(), d[n - 2].abs());
    let order = if b == 0.0 { f64::INFINITY } else { (a / b).log2() };
    let uncertainty = (aitken[m - 1] - aitken[m - 2]).abs() + 16.0 * f64::EPSILON * scale.max(noise_scale.abs());
    Ok(OneSidedLimit {
        at,
        side,
        value,
        convergence_order_estimate: order,
        uncertainty,
    })
}

/// Step function `Σ c_i 1_[a_i, a_{i+1})`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StepFunction {
    pub breakpoints: Vec<f64>,
    pub coefficients: Vec<f64>,
}

impl StepFunction {
    pub fn new(breakpoints: Vec<f64>, coefficients: Vec<f64>) -> Result<Self> {
        let ok_len = breakpoints.is_empty() && coefficients.is_empty() || breakpoints.len() == coefficients.len() + 1;
        if !ok_len {
            return Err(invalid("StepFunction", "need one more breakpoint than coefficients"));
        }
        if breakpoints.windows(2).any(|w| !(w[1] > w[0])) || breakpoints.iter().any(|b| !b.is_finite()) {
            return Err(invalid("StepFunction", "breakpoints must be finite and increasing"));
        }
        if coefficients.iter().any(|c| !(*c >= 0.0) || !c.is_finite()) {
            return Err(invalid("StepFunction", "coefficients must be finite and nonnegative"));
        }
        Ok(Self {
            breakpoints,
            coefficients,
        })
    }

    pub fn indicator(a: f64, b: f64) -> Result<Self> {
        Self::new(vec![a, b], vec![1.0])
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn eval(&self, x: f64) -> f64 {
        let k = self.breakpoints.partition_point(|&a| a <= x);
        if k == 0 || k == self.breakpoints.len() {
            0.0
        } else {
            self.coefficients[k - 1]
        }
    }
}

/// Spatial test function `φ ≥ 0` with compact support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestFunction {
    Step(StepFunction),
    /// Linear between `knots`, zero outside `[knots[0], knots[n-1]]`.
    PiecewiseLinear {
        knots: Vec<f64>,
        values: Vec<f64>,
    },
}

impl TestFunction {
    pub fn indicator(a: f64, b: f64) -> Result<Self> {
        Ok(TestFunction::Step(StepFunction::indicator(a, b)?))
    }

    pub fn hat(center: f64, half_width: f64) -> Result<Self> {
        Self::piecewise_linear(
            vec![center - half_width, center, center + half_width],
            vec![0.0, 1.0, 0.0],
        )
    }

    pub fn piecewise_linear(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.len() != values.len() || knots.len() < 2 {
            return Err(invalid("TestFunction", "need at least two knots with one value each"));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) || knots.iter().any(|k| !k.is_finite()) {
            return Err(invalid("TestFunction", "knots must be finite and increasing"));
        }
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(invalid("TestFunction", "values must be finite and nonnegative"));
        }
        Ok(TestFunction::PiecewiseLinear { knots, values })
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            TestFunction::Step(s) => s.eval(x),
            TestFunction::PiecewiseLinear { knots, values } => {
                let n = knots.len();
                if x < knots[0] || x > knots[n - 1] {
                    return 0.0;
                }
                let k = knots.partition_point(|&a| a <= x).clamp(1, n - 1);
                let w = (x - knots[k - 1]) / (knots[k] - knots[k - 1]);
                values[k - 1] + w * (values[k] - values[k - 1])
            }
        }
    }

    /// `∫_a^b φ`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        let (pts, vals): (&[f64], Vec<f64>) = match self {
            TestFunction::Step(s) => {
                let mut acc = 0.0;
                for (w, &c) in s.breakpoints.windows(2).zip(&s.coefficients) {
                    let (lo, hi) = (w[0].max(a), w[1].min(b));
                    if hi > lo {
                        acc += c * (hi - lo);
                    }
                }
                return acc;
            }
            TestFunction::PiecewiseLinear { knots, values } => (knots, values.clone()),
        };
        let mut acc = 0.0;
        for (w, v) in pts.windows(2).zip(vals.windows(2)) {
            let (lo, hi) = (w[0].max(a), w[1].min(b));
            if hi > lo {
                let f = |x: f64| v[0] + (x - w[0]) / (w[1] - w[0]) * (v[1] - v[0]);
                acc += 0.5 * (f(lo) + f(hi)) * (hi - lo);
            }
        }
        acc
    }

    /// Points where `φ` is not smooth, in increasing order.
    pub fn breakpoints(&self) -> &[f64] {
        match self {
            TestFunction::Step(s) => &s.breakpoints,
            TestFunction::PiecewiseLinear { knots, .. } => knots,
        }
    }

    pub fn sup(&self) -> f64 {
        match self {
            TestFunction::Step(s) => s.coefficients.iter().fold(0.0, |m: f64, c| m.max(*c)),
            TestFunction::PiecewiseLinear { values, .. } => values.iter().fold(0.0, |m: f64, c| m.max(*c)),
        }
    }
}

#[allow(clippy::excessive_precision)]
const GAUSS8: [(f64, f64); 4] = [
    (0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_5),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_3),
];

/// `∫_a^b f` by 8-point Gauss-Legendre on panels of width at most `0.25`.
fn gauss(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let panels = ((b - a) / 0.25).ceil().max(1.0) as usize;
    let w = (b - a) / panels as f64;
    let mut acc = 0.0;
    for k in 0..panels {
        let c = a + w * (k as f64 + 0.5);
        for &(x, wt) in &GAUSS8 {
            acc += wt * (f(c - 0.5 * w * x) + f(c + 0.5 * w * x));
        }
    }
    0.5 * w * acc
}

/// `(∫φ(u_x⁺)², ∫φ(u_x⁻)²)` at one instant.
pub fn weighted_slope_energies(snap: &Snapshot, phi: &TestFunction) -> Result<(f64, f64)> {
    if let TestFunction::Step(s) = phi {
        let mut out = (0.0, 0.0);
        for (w, &c) in s.breakpoints.windows(2).zip(&s.coefficients) {
            if c != 0.0 {
                let e = snap.energy_split(w[0], w[1])?;
                out.0 += c * e.e_plus;
                out.1 += c * e.e_minus;
            }
        }
        return Ok(out);
    }
    match snap {
        Snapshot::Profile(p) => Ok(p.weighted_slope_energy(|a, b| phi.integral(a, b))),
        Snapshot::Peakons(ps) => {
            let knots = phi.breakpoints();
            let (lo, hi) = (knots[0], knots[knots.len() - 1]);
            let mut cuts: Vec<f64> = knots.to_vec();
            cuts.extend(ps.positions().iter().copied().filter(|&q| q > lo && q < hi));
            cuts.sort_by(f64::total_cmp);
            cuts.dedup();
            let slope = |x: f64| {
                let (l, r) = ps.slopes(x);
                0.5 * (l + r)
            };
            let mut out = (0.0, 0.0);
            for w in cuts.windows(2) {
                let (a, b) = (w[0], w[1]);
                // u_x = A e^x - B e^{-x} changes sign at most once per piece
                let (sa, sb) = (ps.slopes(a).1, ps.slopes(b).0);
                let mut pieces = vec![(a, b, 0.5 * (sa + sb))];
                if sa * sb < 0.0 {
                    let (mut l, mut r) = (a, b);
                    for _ in 0..200 {
                        let m = 0.5 * (l + r);
                        if m <= l || m >= r {
                            break;
                        }
                        if slope(m) * sa > 0.0 {
                            l = m;
                        } else {
                            r = m;
                        }
                    }
                    pieces = vec![(a, l, sa), (l, b, sb)];
                }
                for (c, d, sign) in pieces {
                    if d > c {
                        let e = gauss(c, d, |x| phi.eval(x) * slope(x).powi(2));
                        if sign >= 0.0 {
                            out.0 += e;
                        } else {
                            out.1 += e;
                        }
                    }
                }
            }
            Ok(out)
        }
    }
}

/// `t ↦ (∫φ(u_x⁺)², ∫φ(u_x⁻)²)` at every time.
pub fn phi_series(handle: &SolutionHandle, phi: &TestFunction, times: &[f64]) -> Result<Vec<(f64, f64)>> {
    times
        .par_iter()
        .map(|&t| weighted_slope_energies(&handle.snapshot(t)?, phi))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Plus,
    Minus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub t: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub t0: f64,
    pub t1: f64,
    pub increment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sign: Option<Sign>,
    pub atoms: Vec<Atom>,
    pub bins: Vec<Bin>,
    pub total_variation: f64,
}

impl MeasureReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("measure report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitOptions {
    /// Largest approach distance.
    pub delta: f64,
    /// Approach levels `k = 0..=k_max`.
    pub k_max: usize,
    /// Masses at most this many uncertainties are reported as zero.
    pub noise_factor: f64,
    /// Masses below `atom_floor · max(1, C)` are reported as zero.
    pub atom_floor: f64,
}

impl Default for LimitOptions {
    fn default() -> Self {
        Self {
            delta: 1e-2,
            k_max: 8,
            noise_factor: 10.0,
            atom_floor: 1e-9,
        }
    }
}

/// Candidate-level estimate behind [`mu_atoms`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomEstimate {
    pub t: f64,
    pub plus: f64,
    pub plus_uncertainty: f64,
    pub minus: f64,
    pub minus_uncertainty: f64,
}

/// Approach distance that stays inside the span and clear of other events.
fn approach_delta(handle: &SolutionHandle, t: f64, delta: f64) -> Result<f64> {
    let (a, b) = handle.span();
    if !(t > a && t < b) {
        return Err(Error::OutOfSpan { t, start: a, end: b });
    }
    let mut d = delta.min(0.5 * (t - a)).min(0.5 * (b - t));
    for e in handle.event_times() {
        if e != t {
            d = d.min(0.5 * (e - t).abs());
        }
    }
    Ok(d)
}

pub fn atom_estimates(
    handle: &SolutionHandle,
    phi: &TestFunction,
    candidates: &[f64],
    opts: &LimitOptions,
) -> Result<Vec<AtomEstimate>> {
    candidates
        .iter()
        .map(|&t| {
            let d = approach_delta(handle, t, opts.delta)?;
            let right = approach_times(t, LimitSide::Right, d, opts.k_max);
            let left = approach_times(t, LimitSide::Left, d, opts.k_max);
            let (vp, vm) = weighted_slope_energies(&handle.snapshot(t)?, phi)?;
            let rs: Vec<f64> = phi_series(handle, phi, &right)?.into_iter().map(|e| e.0).collect();
            let ls: Vec<f64> = phi_series(handle, phi, &left)?.into_iter().map(|e| e.1).collect();
            let r = one_sided_limit(&rs, t, LimitSide::Right)?;
            let l = one_sided_limit(&ls, t, LimitSide::Left)?;
            Ok(AtomEstimate {
                t,
                plus: r.value - vp,
                plus_uncertainty: r.uncertainty,
                minus: vm - l.value,
                minus_uncertainty: l.uncertainty,
            })
        })
        .collect()
}

/// `(μ⁺, μ⁻)` atoms at the candidate times; masses within the noise
/// threshold are dropped.
pub fn mu_atoms(
    handle: &SolutionHandle,
    phi: &TestFunction,
    candidates: &[f64],
    opts: &LimitOptions,
) -> Result<(MeasureReport, MeasureReport)> {
    let est = atom_estimates(handle, phi, candidates, opts)?;
    let floor = opts.atom_floor * handle.energy_sup().max(1.0);
    let keep = |m: f64, u: f64| m.abs() > opts.noise_factor * u && m.abs() > floor;
    let mut plus = MeasureReport {
        sign: Some(Sign::Plus),
        atoms: Vec::new(),
        bins: Vec::new(),
        total_variation: 0.0,
    };
    let mut minus = MeasureReport {
        sign: Some(Sign::Minus),
        ..plus.clone()
    };
    for e in est {
        if keep(e.plus, e.plus_uncertainty) {
            plus.atoms.push(Atom { t: e.t, mass: e.plus });
            plus.total_variation += e.plus.abs();
        }
        if keep(e.minus, e.minus_uncertainty) {
            minus.atoms.push(Atom { t: e.t, mass: e.minus });
            minus.total_variation += e.minus.abs();
        }
    }
    Ok((plus, minus))
}

/// Signed increments of `t ↦ ∫φ(u_x^±)²` over the cells of `time_grid`.
pub fn nu_measure(handle: &SolutionHandle, phi: &TestFunction, sign: Sign, time_grid: &[f64]) -> Result<MeasureReport> {
    if time_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("nu_measure", "time grid must increase"));
    }
    let series = phi_series(handle, phi, time_grid)?;
    let f: Vec<f64> = series
        .iter()
        .map(|e| if sign == Sign::Plus { e.0 } else { e.1 })
        .collect();
    let bins: Vec<Bin> = time_grid
        .windows(2)
        .zip(f.windows(2))
        .map(|(t, v)| Bin {
            t0: t[0],
            t1: t[1],
            increment: v[1] - v[0],
        })
        .collect();
    let total_variation = bins.iter().map(|b| b.increment.abs()).sum();
    Ok(MeasureReport {
        sign: Some(sign),
        atoms: Vec::new(),
        bins,
        total_variation,
    })
}

/// Greedy step approximation of the piecewise-linear `φ` through
/// `(xs, ys)`: each interval has oscillation at most `ε` and carries the
/// midrange value.
pub fn step_approximate(xs: &[f64], ys: &[f64], eps: f64) -> Result<StepFunction> {
    if !(eps > 0.0) {
        return Err(invalid("step_approximate", format!("need eps > 0, got {eps}")));
    }
    if xs.len() != ys.len() || xs.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid(
            "step_approximate",
            "samples must be paired with increasing abscissae",
        ));
    }
    if ys.iter().any(|y| !(*y >= 0.0) || !y.is_finite()) {
        return Err(invalid("step_approximate", "samples must be finite and nonnegative"));
    }
    if ys.iter().all(|&y| y == 0.0) || xs.len() < 2 {
        return Ok(StepFunction::default());
    }
    let mut bps = vec![xs[0]];
    let mut coefs = Vec::new();
    let (mut lo, mut hi) = (ys[0], ys[0]);
    let mut k = 1;
    let mut x_cur = xs[0];
    let mut y_cur = ys[0];
    while k < xs.len() {
        let (x1, y1) = (xs[k], ys[k]);
        let (nlo, nhi) = (lo.min(y1), hi.max(y1));
        if nhi - nlo <= eps {
            lo = nlo;
            hi = nhi;
            x_cur = x1;
            y_cur = y1;
            k += 1;
            continue;
        }
        // close the interval where the segment leaves the band [hi - eps, lo + eps]
        let target = if y1 > hi { lo + eps } else { hi - eps };
        let x_cut = x_cur + (target - y_cur) / (y1 - y_cur) * (x1 - x_cur);
        let x_cut = x_cut.clamp(x_cur, x1);
        if x_cut > *bps.last().expect("nonempty") {
            bps.push(x_cut);
            coefs.push(0.5 * (lo.min(target) + hi.max(target)));
        }
        x_cur = x_cut;
        y_cur = target;
        lo = target;
        hi = target;
    }
    let last = *xs.last().expect("nonempty");
    let span = last - xs[0];
    if last - bps[bps.len() - 1] <= 1e-12 * span && !coefs.is_empty() {
        // absorb a rounding-sized remainder into the previous interval
        let c = coefs.pop().expect("nonempty");
        bps.pop();
        bps.push(last);
        coefs.push(c);
    } else {
        bps.push(last);
        coefs.push(0.5 * (lo + hi));
    }
    while coefs.last() == Some(&0.0) {
        coefs.pop();
        bps.pop();
    }
    while coefs.first() == Some(&0.0) {
        coefs.remove(0);
        bps.remove(0);
    }
    if coefs.is_empty() {
        return Ok(StepFunction::default());
    }
    StepFunction::new(bps, coefs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BvReport {
    pub t1: f64,
    pub t2: f64,
    pub e_plus_t1: f64,
    pub e_plus_t2: f64,
    /// Right side of the inequality.
    pub lower_bound: f64,
    pub dt_eps: f64,
    pub k_slack: f64,
    pub holds: bool,
}

/// Largest `Δt ≤ 1` keeping `ω ≥ V₄/2` under the tangent bound from `V₄`.
pub fn dt_eps(v4: f64, lc: f64) -> f64 {
    if v4 <= 0.0 {
        return 1.0;
    }
    let limit = if lc > 0.0 {
        let s = lc.sqrt();
        ((v4 / s).atan() - (0.5 * v4 / s).atan()) / s
    } else {
        1.0 / v4
    };
    limit.min(1.0)
}

/// `E⁺(t₂) ≥ E⁺(t₁) - (t₂-t₁)[K(β(t₁) - α(t₁)) + ∫_{[α,β]} u_x²(t₁)]`.
pub fn bv_lower_bound_check(
    handle: &SolutionHandle,
    alpha: &Characteristic,
    beta: &Characteristic,
    t1: f64,
    t2: f64,
) -> Result<BvReport> {
    if !(t2 > t1) {
        return Err(invalid(
            "bv_lower_bound_check",
            format!("need t1 < t2, got {t1} and {t2}"),
        ));
    }
    let grid = characteristics::uniform_times(t1, t2, 33);
    let (su, sp) = handle.sup_u_and_p(&grid)?;
    let kernel = handle.kernel();
    let lc = kernel.lipschitz * handle.energy_sup();
    let v4 = 4.0 * (su * su + sp);
    let de = dt_eps(v4, lc);
    let dt = t2 - t1;
    if dt > de {
        return Err(Error::RegimeViolated { dt, limit: de });
    }
    let v_tilde = lc.sqrt().max(v4 + su * su);
    let k_slack = 2.0 * v_tilde * (su * su + sp) * (de * v_tilde).exp();
    let l = ledger(handle, alpha, beta, &[t1, t2])?;
    let width = l.beta[0] - l.alpha[0];
    let lower_bound = l.e_plus[0] - dt * (k_slack * width + l.e_plus[0] + l.e_minus[0]);
    let tol = 1e-12 * (1.0 + l.e_plus[0]);
    Ok(BvReport {
        t1,
        t2,
        e_plus_t1: l.e_plus[0],
        e_plus_t2: l.e_plus[1],
        lower_bound,
        dt_eps: de,
        k_slack,
        holds: l.e_plus[1] >= lower_bound - tol,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct LedgerRow {
    t: f64,
    e_plus: f64,
    e_minus: f64,
}

/// `t,e_plus,e_minus` table.
pub fn ledger_to_csv(l: &EnergyLedger) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for ((&t, &e_plus), &e_minus) in l.times.iter().zip(&l.e_plus).zip(&l.e_minus) {
        w.serialize(LedgerRow { t, e_plus, e_minus })
            .expect("in-memory csv writer");
    }
    if l.times.is_empty() {
        w.write_record(["t", "e_plus", "e_minus"])
            .expect("in-memory csv writer");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv writer")).expect("csv output is utf-8")
}

/// Reads `(times, e_plus, e_minus)` from a ledger table.
pub fn ledger_from_csv(text: &str) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let headers = r.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["t", "e_plus", "e_minus"] {
        return Err(Error::Parse(format!(
            "expected header t,e_plus,e_minus, got {headers:?}"
        )));
    }
    let mut out = (Vec::new(), Vec::new(), Vec::new());
    for row in r.deserialize::<LedgerRow>() {
        let row = row.map_err(|e| Error::Parse(e.to_string()))?;
        out.0.push(row.t);
        out.1.push(row.e_plus);
        out.2.push(row.e_minus);
    }
    Ok(out)
}
