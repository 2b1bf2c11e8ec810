//! Characteristics `ζ̇ = u(t, ζ)` of a weak solution, the slope `v = u_x`
//! carried along them, pair quantities `h = η - ζ`, `p = u(η) - u(ζ)`,
//! `ω = p/h` together with their a priori bounds, and the flow map
//! `M_t(ζ) = ζˡ(t)`.
//!
//! Along a characteristic `u̇ = ∫A(ζ, y)[a u² + b u_x²] dy`, which is `-P_x`
//! for Camassa-Holm. Leftmost and rightmost characteristics are realised as
//! limits of plain traces started at `ζ ∓ ε`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernel::KernelSpec;
use crate::ode::{self, Control, DenseStep, OdeOptions};
use crate::solver::{Snapshot, SolutionHandle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Leftmost,
    Rightmost,
    Plain,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharSample {
    pub t: f64,
    pub x: f64,
    pub u: f64,
    pub v: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Characteristic {
    pub start: f64,
    pub t0: f64,
    pub side: Side,
    pub samples: Vec<CharSample>,
    /// `u̇` at every sample.
    pub accel: Vec<f64>,
    /// Largest gap between the two finest offset traces (zero for `Plain`).
    pub spread: f64,
    /// Largest `|U - u(t, x)|` between the transported and the sampled `u`.
    pub transport_residual: f64,
    /// Time at which `|v|` exceeded the blow-up threshold.
    pub blow_up: Option<f64>,
}

impl Characteristic {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn positions(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.x).collect()
    }

    pub fn end(&self) -> &CharSample {
        self.samples.last().expect("characteristic without samples")
    }

    /// Position at `t` by cubic Hermite interpolation with `ẋ = u`.
    pub fn position_at(&self, t: f64) -> Result<f64> {
        let s = &self.samples;
        let (lo, hi) = (s[0].t.min(s[s.len() - 1].t), s[0].t.max(s[s.len() - 1].t));
        if !(t >= lo && t <= hi) {
            return Err(Error::OutOfSpan { t, start: lo, end: hi });
        }
        let forward = s[s.len() - 1].t >= s[0].t;
        let k = if forward {
            s.partition_point(|a| a.t < t)
        } else {
            s.partition_point(|a| a.t > t)
        };
        if k < s.len() && s[k].t == t {
            return Ok(s[k].x);
        }
        let (a, b) = (&s[k - 1], &s[k]);
        let h = b.t - a.t;
        let th = (t - a.t) / h;
        let h00 = (1.0 + 2.0 * th) * (1.0 - th).powi(2);
        let h10 = th * (1.0 - th).powi(2);
        let h01 = th * th * (3.0 - 2.0 * th);
        let h11 = th * th * (th - 1.0);
        Ok(h00 * a.x + h10 * h * a.u + h01 * b.x + h11 * h * b.u)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceOptions {
    pub ode: OdeOptions,
    /// Number of uniformly spaced samples written by [`trace`].
    pub samples: usize,
    /// Offsets used to realise leftmost/rightmost characteristics.
    pub offsets: [f64; 3],
    /// Relative tolerance for equal one-sided slopes at a start point.
    pub kink_tol: f64,
    /// `|v|` above which the slope is considered to have blown up.
    pub blow_up: f64,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self {
            ode: OdeOptions {
                rtol: 1e-10,
                atol: 1e-12,
                ..OdeOptions::default()
            },
            samples: 201,
            offsets: [1e-4, 1e-5, 1e-6],
            kink_tol: 1e-6,
            blow_up: 1e8,
        }
    }
}

/// Evaluates `f(t, snapshot)` and keeps the first error.
struct Field<'a> {
    handle: &'a SolutionHandle,
    failure: Option<Error>,
}

impl<'a> Field<'a> {
    fn new(handle: &'a SolutionHandle) -> Self {
        Self { handle, failure: None }
    }

    fn at(&mut self, t: f64) -> Option<Snapshot> {
        match self.handle.snapshot(t) {
            Ok(s) => Some(s),
            Err(e) => {
                self.failure.get_or_insert(e);
                None
            }
        }
    }

    fn finish<T>(self, value: T) -> Result<T> {
        match self.failure {
            Some(e) => Err(e),
            None => Ok(value),
        }
    }
}

fn check_times(handle: &SolutionHandle, t0: f64, times: &[f64]) -> Result<()> {
    let (a, b) = handle.span();
    for &t in std::iter::once(&t0).chain(times) {
        if !(t >= a && t <= b) {
            return Err(Error::OutOfSpan { t, start: a, end: b });
        }
    }
    let monotone = times.windows(2).all(|w| w[1] >= w[0]) && times.iter().all(|&t| t >= t0)
        || times.windows(2).all(|w| w[1] <= w[0]) && times.iter().all(|&t| t <= t0);
    if !monotone {
        return Err(invalid("trace", "sample times must be monotone and on one side of t0"));
    }
    Ok(())
}

/// Evaluates a dense trajectory at monotone `times` in integration order.
fn sample_dense(steps: &[DenseStep], t0: f64, y0: &[f64], times: &[f64]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(times.len());
    let mut k = 0;
    for &t in times {
        if t == t0 || steps.is_empty() {
            out.push(y0.to_vec());
            continue;
        }
        while k + 1 < steps.len() {
            let s = &steps[k];
            let (lo, hi) = (s.t.min(s.t_end()), s.t.max(s.t_end()));
            if t >= lo && t <= hi {
                break;
            }
            k += 1;
        }
        out.push(steps[k].eval(t));
    }
    out
}

/// Integrates `rhs(snapshot, y, dy)` from `t0` to `t1` in pieces split at
/// the handle's events. Inside a piece the field is evaluated strictly
/// between its ends, so values held exactly at an event (`u ≡ 0` at a
/// collision) never enter the right-hand side.
fn integrate_pieces<R, O>(
    handle: &SolutionHandle,
    t0: f64,
    y0: &[f64],
    t1: f64,
    opts: &OdeOptions,
    mut rhs: R,
    mut observe: O,
) -> Result<ode::Outcome>
where
    R: FnMut(&Snapshot, &[f64], &mut [f64]),
    O: FnMut(&DenseStep) -> Control,
{
    let (lo, hi) = (t0.min(t1), t0.max(t1));
    let mut cuts: Vec<f64> = handle.event_times().into_iter().filter(|&e| e > lo && e < hi).collect();
    if t1 < t0 {
        cuts.reverse();
    }
    cuts.push(t1);
    let events = handle.event_times();
    let nudge = |e: f64| {
        if events.contains(&e) {
            64.0 * f64::EPSILON * e.abs().max(1.0)
        } else {
            0.0
        }
    };
    let mut field = Field::new(handle);
    let mut out = ode::Outcome {
        t: t0,
        y: y0.to_vec(),
        steps: 0,
        rejected: 0,
        stopped: false,
    };
    let mut a = t0;
    for b in cuts {
        let (pl, ph) = (a.min(b), a.max(b));
        let (pl, ph) = (pl + nudge(pl), ph - nudge(ph));
        let piece = ode::integrate(
            |t, y, dy| match field.at(t.clamp(pl.min(ph), ph.max(pl))) {
                Some(s) => rhs(&s, y, dy),
                None => dy.fill(0.0),
            },
            a,
            &out.y,
            b,
            opts,
            &mut observe,
        )?;
        out = ode::Outcome {
            steps: out.steps + piece.steps,
            rejected: out.rejected + piece.rejected,
            ..piece
        };
        if out.stopped || field.failure.is_some() {
            break;
        }
        a = b;
    }
    field.finish(out)
}

/// Plain trace of `[x, U]` with `ẋ = u(t, x)`, `U̇ = force`; returns the
/// positions at `times` and the transport residual.
fn trace_plain(handle: &SolutionHandle, x0: f64, t0: f64, times: &[f64], opts: &OdeOptions) -> Result<(Vec<f64>, f64)> {
    let kernel = *handle.kernel();
    let t_end = times.last().copied().unwrap_or(t0);
    let u0 = handle.snapshot(t0)?.u(x0);
    let mut steps = Vec::new();
    integrate_pieces(
        handle,
        t0,
        &[x0, u0],
        t_end,
        opts,
        |s, y, dy| {
            dy[0] = s.u(y[0]);
            dy[1] = s.force(&kernel, y[0]);
        },
        |step| {
            steps.push(step.clone());
            Control::Continue
        },
    )?;
    let ys = sample_dense(&steps, t0, &[x0, u0], times);
    let mut residual: f64 = 0.0;
    for (y, &t) in ys.iter().zip(times) {
        residual = residual.max((y[1] - handle.snapshot(t)?.u(y[0])).abs());
    }
    Ok((ys.into_iter().map(|y| y[0]).collect(), residual))
}

/// `n` uniformly spaced times from `t0` to `t1` inclusive.
pub fn uniform_times(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n)
        .map(|k| {
            if k + 1 == n {
                t1
            } else {
                t0 + (t1 - t0) * k as f64 / (n - 1) as f64
            }
        })
        .collect()
}

/// Traces the characteristic from `start` at `t0` to `t1`, sampled uniformly.
pub fn trace(handle: &SolutionHandle, start: f64, t0: f64, t1: f64, side: Side) -> Result<Characteristic> {
    trace_with(handle, start, t0, t1, side, &TraceOptions::default())
}

pub fn trace_with(
    handle: &SolutionHandle,
    start: f64,
    t0: f64,
    t1: f64,
    side: Side,
    opts: &TraceOptions,
) -> Result<Characteristic> {
    trace_at(handle, start, t0, &uniform_times(t0, t1, opts.samples), side, opts)
}

/// Extrapolates the traces from `start + sign·ε` to `ε → 0`; returns the
/// positions, the spread between the two finest traces and the residual.
fn extrapolated(
    handle: &SolutionHandle,
    start: f64,
    t0: f64,
    times: &[f64],
    sign: f64,
    opts: &TraceOptions,
) -> Result<(Vec<f64>, f64, f64)> {
    let [_, e2, e3] = opts.offsets;
    let mut traces = Vec::with_capacity(3);
    let mut residual: f64 = 0.0;
    for &e in &opts.offsets {
        let (xs, r) = trace_plain(handle, start + sign * e, t0, times, &opts.ode)?;
        residual = residual.max(r);
        traces.push(xs);
    }
    let w = e3 / (e2 - e3);
    let mut spread: f64 = 0.0;
    let xs = traces[2]
        .iter()
        .zip(&traces[1])
        .map(|(&x3, &x2)| {
            spread = spread.max((x3 - x2).abs());
            x3 + (x3 - x2) * w
        })
        .collect();
    Ok((xs, spread, residual))
}

/// Traces the characteristic from `start` at `t0`, sampled at `times`
/// (monotone, all on one side of `t0`).
pub fn trace_at(
    handle: &SolutionHandle,
    start: f64,
    t0: f64,
    times: &[f64],
    side: Side,
    opts: &TraceOptions,
) -> Result<Characteristic> {
    check_times(handle, t0, times)?;
    if !start.is_finite() {
        return Err(invalid("trace", "start must be finite"));
    }
    let (xs, spread, residual) = match side {
        Side::Plain => {
            let (xs, r) = trace_plain(handle, start, t0, times, &opts.ode)?;
            (xs, 0.0, r)
        }
        Side::Leftmost | Side::Rightmost => {
            let sign = if side == Side::Leftmost { -1.0 } else { 1.0 };
            let dir = match times.last() {
                Some(&t) if t < t0 => -1.0,
                _ => 1.0,
            };
            let t_last = times.last().copied().unwrap_or(t0);
            // characteristics may branch where solutions collide, so the
            // selection restarts from every event crossed
            let mut cuts: Vec<f64> = handle
                .event_times()
                .into_iter()
                .filter(|&e| (e - t0) * dir > 0.0 && (t_last - e) * dir > 0.0)
                .collect();
            if dir < 0.0 {
                cuts.reverse();
            }
            cuts.push(t_last);
            let (mut xa, mut ta, mut idx) = (start, t0, 0);
            let (mut xs, mut spread, mut residual) = (Vec::with_capacity(times.len()), 0.0f64, 0.0f64);
            for cut in cuts {
                let taken = times[idx..].iter().take_while(|&&t| (cut - t) * dir >= 0.0).count();
                let mut seg: Vec<f64> = times[idx..idx + taken].to_vec();
                if seg.last() != Some(&cut) {
                    seg.push(cut);
                }
                let (seg_xs, sp, r) = extrapolated(handle, xa, ta, &seg, sign, opts)?;
                xs.extend_from_slice(&seg_xs[..taken]);
                spread = spread.max(sp);
                residual = residual.max(r);
                xa = *seg_xs.last().expect("segment has its end");
                ta = cut;
                idx += taken;
            }
            (xs, spread, residual)
        }
    };
    let kernel = *handle.kernel();
    let mut samples = Vec::with_capacity(times.len());
    let mut accel = Vec::with_capacity(times.len());
    for (&t, &x) in times.iter().zip(&xs) {
        let s = handle.snapshot(t)?;
        samples.push(CharSample {
            t,
            x,
            u: s.u(x),
            v: None,
        });
        accel.push(s.force(&kernel, x));
    }
    Ok(Characteristic {
        start,
        t0,
        side,
        samples,
        accel,
        spread,
        transport_residual: residual,
        blow_up: None,
    })
}

/// Right side of the slope equation `v̇ = (b-1)v² + a(u² - P)`.
fn slope_rhs(kernel: &KernelSpec, s: &Snapshot, x: f64, v: f64) -> (f64, f64) {
    let u = s.u(x);
    let src = if kernel.a != 0.0 {
        kernel.a * (u * u - s.pressure(x).p)
    } else {
        0.0
    };
    (u, (kernel.b - 1.0) * v * v + src)
}

/// One-sided slopes at `x`, rejected when they differ beyond tolerance.
pub fn initial_slope(handle: &SolutionHandle, x: f64, t: f64, kink_tol: f64) -> Result<f64> {
    let s = handle.snapshot(t)?;
    let (left, right) = s.slopes(x);
    let scale = 1.0 + left.abs() + right.abs();
    // piecewise-linear profiles jump at every node by O(h u_xx)
    let tol = match s {
        Snapshot::Peakons(_) => kink_tol * scale,
        Snapshot::Profile(_) => (kink_tol + 0.05) * scale,
    };
    if (left - right).abs() > tol {
        return Err(Error::SlopeMismatch { x, left, right });
    }
    Ok(0.5 * (left + right))
}

/// Dense solution of `[x, v]` along a characteristic, extended by
/// `∫2a(u²-P)/v` when `with_integral` is set.
struct SlopePath {
    t0: f64,
    y0: Vec<f64>,
    steps: Vec<DenseStep>,
    blow_up: Option<f64>,
    v_floor_hit: Option<(f64, f64)>,
}

#[allow(clippy::too_many_arguments)]
fn slope_path(
    handle: &SolutionHandle,
    x0: f64,
    t0: f64,
    t1: f64,
    v0: f64,
    v_floor: f64,
    with_integral: bool,
    opts: &TraceOptions,
) -> Result<SlopePath> {
    let kernel = *handle.kernel();
    let y0 = if with_integral { vec![x0, v0, 0.0] } else { vec![x0, v0] };
    let mut steps = Vec::new();
    let mut blow_up = None;
    let mut v_floor_hit = None;
    if v0.abs() < v_floor {
        v_floor_hit = Some((t0, v0));
    }
    integrate_pieces(
        handle,
        t0,
        &y0,
        t1,
        &opts.ode,
        |s, y, dy| {
            let (u, vdot) = slope_rhs(&kernel, s, y[0], y[1]);
            dy[0] = u;
            dy[1] = vdot;
            if with_integral {
                dy[2] = if kernel.a != 0.0 && y[1] != 0.0 {
                    2.0 * (vdot - (kernel.b - 1.0) * y[1] * y[1]) / y[1]
                } else {
                    0.0
                };
            }
        },
        |step| {
            steps.push(step.clone());
            let v = step.y_end()[1];
            if v_floor_hit.is_none() && v.abs() < v_floor {
                v_floor_hit = Some((step.t_end(), v));
            }
            if v.abs() > opts.blow_up {
                blow_up = Some(step.t_end());
                return Control::Stop;
            }
            Control::Continue
        },
    )?;
    Ok(SlopePath {
        t0,
        y0,
        steps,
        blow_up,
        v_floor_hit,
    })
}

impl SlopePath {
    fn reached(&self) -> f64 {
        self.steps.last().map(|s| s.t_end()).unwrap_or(self.t0)
    }

    fn covers(&self, t: f64) -> bool {
        let r = self.reached();
        t >= self.t0.min(r) && t <= self.t0.max(r)
    }

    fn at(&self, t: f64) -> Vec<f64> {
        sample_dense(&self.steps, self.t0, &self.y0, &[t])
            .pop()
            .unwrap_or_default()
    }
}

/// Fills `v = u_x` along a traced characteristic with default options.
pub fn v_along(handle: &SolutionHandle, ch: &Characteristic) -> Result<Characteristic> {
    v_along_with(handle, ch, &TraceOptions::default())
}

/// Integrates the slope equation from the start of `ch`. After a blow-up the
/// remaining samples carry no `v` and [`Characteristic::blow_up`] is set.
pub fn v_along_with(handle: &SolutionHandle, ch: &Characteristic, opts: &TraceOptions) -> Result<Characteristic> {
    let v0 = initial_slope(handle, ch.start, ch.t0, opts.kink_tol)?;
    let t1 = ch.end().t;
    let path = slope_path(handle, ch.start, ch.t0, t1, v0, 0.0, false, opts)?;
    let mut out = ch.clone();
    out.blow_up = path.blow_up;
    for s in &mut out.samples {
        s.v = if path.blow_up.is_none() || path.covers(s.t) && s.t != path.reached() {
            Some(path.at(s.t)[1])
        } else {
            None
        };
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PairStatus {
    Complete,
    /// `h` dropped to the floor at this time; later samples are dropped.
    Met {
        t: f64,
    },
}

/// Pairs terminate once `h` drops to this value.
pub const H_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct CharacteristicPair {
    pub zeta: Characteristic,
    pub eta: Characteristic,
    pub times: Vec<f64>,
    pub h: Vec<f64>,
    pub p: Vec<f64>,
    pub omega: Vec<f64>,
    /// `∫ω` from the first sample.
    pub omega_integral: Vec<f64>,
    /// Largest `|ḣ - p|` with `ḣ` by centred differences.
    pub hdot_residual: f64,
    pub status: PairStatus,
}

impl CharacteristicPair {
    /// `ω̇ = ṗ/h - ω²` at sample `k`.
    fn omega_dot(&self, k: usize) -> f64 {
        (self.eta.accel[k] - self.zeta.accel[k]) / self.h[k] - self.omega[k] * self.omega[k]
    }
}

pub fn pair_series(handle: &SolutionHandle, zeta: f64, eta: f64, t0: f64, t1: f64) -> Result<CharacteristicPair> {
    pair_series_with(handle, zeta, eta, t0, t1, &TraceOptions::default())
}

/// Leftmost characteristics from `zeta < eta` and their `h`, `p`, `ω`.
pub fn pair_series_with(
    handle: &SolutionHandle,
    zeta: f64,
    eta: f64,
    t0: f64,
    t1: f64,
    opts: &TraceOptions,
) -> Result<CharacteristicPair> {
    if !(eta > zeta) {
        return Err(invalid("pair_series", format!("need eta > zeta, got {zeta} and {eta}")));
    }
    let z = trace_with(handle, zeta, t0, t1, Side::Leftmost, opts)?;
    let e = trace_with(handle, eta, t0, t1, Side::Leftmost, opts)?;
    let mut pair = CharacteristicPair {
        zeta: z,
        eta: e,
        times: Vec::new(),
        h: Vec::new(),
        p: Vec::new(),
        omega: Vec::new(),
        omega_integral: Vec::new(),
        hdot_residual: 0.0,
        status: PairStatus::Complete,
    };
    for (a, b) in pair.zeta.samples.iter().zip(&pair.eta.samples) {
        let h = b.x - a.x;
        if h <= H_FLOOR {
            pair.status = PairStatus::Met { t: a.t };
            break;
        }
        pair.times.push(a.t);
        pair.h.push(h);
        pair.p.push(b.u - a.u);
        pair.omega.push((b.u - a.u) / h);
    }
    let n = pair.times.len();
    pair.zeta.samples.truncate(n);
    pair.eta.samples.truncate(n);
    pair.zeta.accel.truncate(n);
    pair.eta.accel.truncate(n);
    let mut acc = 0.0;
    pair.omega_integral.push(0.0);
    for k in 1..n {
        let dt = pair.times[k] - pair.times[k - 1];
        let (f0, f1) = (pair.omega[k - 1], pair.omega[k]);
        let (d0, d1) = (pair.omega_dot(k - 1), pair.omega_dot(k));
        acc += 0.5 * dt * (f0 + f1) + dt * dt / 12.0 * (d0 - d1);
        pair.omega_integral.push(acc);
    }
    for k in 1..n.saturating_sub(1) {
        let hdot = (pair.h[k + 1] - pair.h[k - 1]) / (pair.times[k + 1] - pair.times[k - 1]);
        pair.hdot_residual = pair.hdot_residual.max((hdot - pair.p[k]).abs());
    }
    if n == 0 {
        pair.omega_integral.clear();
    }
    Ok(pair)
}

/// Lower bound on `ω(t₀ + Δt)` from `ω̇ ≥ -ω² - LC`.
pub fn omega_lower_bound(omega0: f64, dt: f64, l: f64, c: f64) -> Result<f64> {
    let lc = l * c;
    if !(lc >= 0.0) || !(dt >= 0.0) || !omega0.is_finite() {
        return Err(invalid(
            "omega_lower_bound",
            format!("need L·C >= 0 and dt >= 0, got {lc} and {dt}"),
        ));
    }
    if dt == 0.0 {
        return Ok(omega0);
    }
    if lc == 0.0 {
        let d = 1.0 + omega0 * dt;
        if d <= 0.0 {
            return Err(Error::ArgumentOutOfRange { arg: d });
        }
        return Ok(omega0 / d);
    }
    let s = lc.sqrt();
    let arg = -s * dt + (omega0 / s).atan();
    if arg <= -std::f64::consts::FRAC_PI_2 || arg >= std::f64::consts::FRAC_PI_2 {
        return Err(Error::ArgumentOutOfRange { arg });
    }
    Ok(s * arg.tan())
}

/// `Ω(t) = √LC tan(√LC t - π/2)` for any `t`.
pub fn omega_curve(l: f64, c: f64, t: f64) -> f64 {
    let s = (l * c).sqrt();
    s * (s * t - std::f64::consts::FRAC_PI_2).tan()
}

/// `T_max = π/(8√LC)` and `Ω(t)` for `0 ≤ t < T_max`.
pub fn t_max_and_omega(l: f64, c: f64, t: f64) -> Result<(f64, f64)> {
    let lc = l * c;
    if !(lc > 0.0) || !lc.is_finite() {
        return Err(invalid("t_max_and_omega", format!("need L·C > 0, got {lc}")));
    }
    let t_max = std::f64::consts::PI / (8.0 * lc.sqrt());
    if !(t >= 0.0 && t < t_max) {
        return Err(invalid(
            "t_max_and_omega",
            format!("need 0 <= t < T_max = {t_max}, got {t}"),
        ));
    }
    Ok((t_max, omega_curve(l, c, t)))
}

/// Outcome of checking an inequality at many samples.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BoundCheck {
    pub checked: usize,
    pub skipped: usize,
    pub violations: usize,
    /// Smallest `rhs - lhs` margin seen (negative for a violation).
    pub worst_margin: f64,
}

impl BoundCheck {
    fn record(&mut self, margin: f64, slack: f64) {
        if self.checked == 0 || margin < self.worst_margin {
            self.worst_margin = margin;
        }
        self.checked += 1;
        if margin < -slack {
            self.violations += 1;
        }
    }

    pub fn holds(&self) -> bool {
        self.violations == 0
    }

    pub fn merge(mut self, other: BoundCheck) -> Self {
        if other.checked > 0 && (self.checked == 0 || other.worst_margin < self.worst_margin) {
            self.worst_margin = other.worst_margin;
        }
        self.checked += other.checked;
        self.skipped += other.skipped;
        self.violations += other.violations;
        self
    }
}

/// Largest `ω²` of the quadratic through three samples on their interval.
fn stencil_max_sq(t: [f64; 3], w: [f64; 3]) -> f64 {
    let mut m = w.iter().fold(0.0f64, |m, v| m.max(v * v));
    let (h1, h2) = (t[1] - t[0], t[2] - t[1]);
    let d1 = (w[1] - w[0]) / h1;
    let d2 = (w[2] - w[1]) / h2;
    let a = (d2 - d1) / (h1 + h2);
    if a != 0.0 {
        let b = d1 - a * (t[0] + t[1]);
        let tv = -b / (2.0 * a);
        if tv > t[0] && tv < t[2] {
            let v = w[0] + (tv - t[0]) * (d1 + a * (tv - t[1]));
            m = m.max(v * v);
        }
    }
    m
}

/// Centred-difference form of `ω̇ ≥ -ω² - LC` at every interior sample.
pub fn check_differential_inequality(pair: &CharacteristicPair, l: f64, c: f64, slack: f64) -> BoundCheck {
    let mut out = BoundCheck::default();
    let (t, w) = (&pair.times, &pair.omega);
    for k in 1..t.len().saturating_sub(1) {
        let fd = (w[k + 1] - w[k - 1]) / (t[k + 1] - t[k - 1]);
        let floor = -stencil_max_sq([t[k - 1], t[k], t[k + 1]], [w[k - 1], w[k], w[k + 1]]) - l * c;
        out.record(fd - floor, slack);
    }
    out
}

/// `ω(t_k) ≥` [`omega_lower_bound`] from the first sample, wherever the
/// tangent argument stays in branch.
pub fn check_tangent_bound(pair: &CharacteristicPair, l: f64, c: f64, slack: f64) -> BoundCheck {
    let mut out = BoundCheck::default();
    let Some(&t0) = pair.times.first() else { return out };
    let w0 = pair.omega[0];
    for (&t, &w) in pair.times.iter().zip(&pair.omega).skip(1) {
        match omega_lower_bound(w0, (t - t0).abs(), l, c) {
            Ok(b) => out.record(w - b, slack),
            Err(_) => out.skipped += 1,
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowMap {
    pub t: f64,
    pub starts: Vec<f64>,
    pub ends: Vec<f64>,
    pub monotone: bool,
}

impl FlowMap {
    /// `ε e^{-tN} ≤ M_t(ζ+ε) - M_t(ζ) ≤ ε e^{tN}` for consecutive starts,
    /// with `t` measured from the start of the trace.
    pub fn increment_bounds(&self, elapsed: f64, n: f64, rel_slack: f64) -> BoundCheck {
        let mut out = BoundCheck::default();
        for (s, e) in self.starts.windows(2).zip(self.ends.windows(2)) {
            let eps = s[1] - s[0];
            let dm = e[1] - e[0];
            let lo = eps * (-elapsed * n).exp();
            let hi = eps * (elapsed * n).exp();
            out.record(((dm - lo) / lo).min((hi - dm) / hi), rel_slack);
        }
        out
    }
}

/// Decreases below this relative size are trace noise on a plateau of the map.
pub const MONOTONE_TOL: f64 = 1e-9;

/// Leftmost characteristics from every start, traced from the beginning of
/// the span to `t`.
pub fn flow_map(handle: &SolutionHandle, starts: &[f64], t: f64) -> Result<FlowMap> {
    flow_map_with(handle, starts, t, &TraceOptions::default())
}

pub fn flow_map_with(handle: &SolutionHandle, starts: &[f64], t: f64, opts: &TraceOptions) -> Result<FlowMap> {
    let t0 = handle.span().0;
    let ends = starts
        .par_iter()
        .map(|&z| trace_at(handle, z, t0, &[t], Side::Leftmost, opts).map(|c| c.end().x))
        .collect::<Result<Vec<f64>>>()?;
    let monotone = starts
        .windows(2)
        .zip(ends.windows(2))
        .all(|(s, e)| s[1] < s[0] || e[1] >= e[0] - MONOTONE_TOL * (1.0 + e[0].abs()));
    Ok(FlowMap {
        t,
        starts: starts.to_vec(),
        ends,
        monotone,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct V2MOptions {
    pub trace: TraceOptions,
    /// Smallest admissible `|v|` along the characteristic.
    pub v_floor: f64,
    /// Bound `N` on `|ω|` near the start; `None` uses `sup |v|` along the path.
    pub n_bound: Option<f64>,
}

impl Default for V2MOptions {
    fn default() -> Self {
        Self {
            trace: TraceOptions {
                ode: OdeOptions {
                    rtol: 1e-12,
                    atol: 1e-14,
                    ..OdeOptions::default()
                },
                ..TraceOptions::default()
            },
            v_floor: 0.1,
            n_bound: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct V2MReport {
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub rel_err: f64,
    pub m_prime: f64,
    pub fd_step: f64,
    /// Two-sided bound `v(0)² e^{∓2t(sup u² + sup P)/V₁}`.
    pub bound_lo: f64,
    pub bound_hi: f64,
    pub bound_ok: bool,
}

pub fn v2mprime_check(handle: &SolutionHandle, ch: &Characteristic, t: f64) -> Result<V2MReport> {
    v2mprime_check_with(handle, ch, t, &V2MOptions::default())
}

/// Compares `v²(t) M'_t(ζ)` with `v²(t₀) exp(∫2a(u²-P)/v)`.
pub fn v2mprime_check_with(
    handle: &SolutionHandle,
    ch: &Characteristic,
    t: f64,
    opts: &V2MOptions,
) -> Result<V2MReport> {
    let t0 = ch.t0;
    check_times(handle, t0, &[t])?;
    let v0 = initial_slope(handle, ch.start, t0, opts.trace.kink_tol)?;
    let path = slope_path(handle, ch.start, t0, t, v0, opts.v_floor, true, &opts.trace)?;
    if let Some((tv, v)) = path.v_floor_hit {
        return Err(Error::VFloorViolated {
            t: tv,
            v,
            floor: opts.v_floor,
        });
    }
    if let Some(tb) = path.blow_up {
        return Err(Error::Integrator {
            t: tb,
            reason: "slope blew up".into(),
        });
    }
    let y = path.at(t);
    let (vt, integral) = (y[1], y[2]);
    let elapsed = (t - t0).abs();
    let n = opts.n_bound.unwrap_or_else(|| {
        path.steps
            .iter()
            .map(|s| s.y_start()[1].abs())
            .fold(v0.abs().max(vt.abs()), f64::max)
    });
    let eps = 1e-5f64.min((-elapsed * n).exp() / 10.0);
    let (xp, _) = trace_plain(handle, ch.start + eps, t0, &[t], &opts.trace.ode)?;
    let (xm, _) = trace_plain(handle, ch.start - eps, t0, &[t], &opts.trace.ode)?;
    let m_prime = (xp[0] - xm[0]) / (2.0 * eps);
    let lhs = vt * vt * m_prime;
    let rhs = v0 * v0 * integral.exp();
    let grid = uniform_times(t0, t, 33);
    let (su, sp) = handle.sup_u_and_p(&grid)?;
    let rate = 2.0 * elapsed * (su * su + sp) / opts.v_floor;
    let bound_lo = v0 * v0 * (-rate).exp();
    let bound_hi = v0 * v0 * rate.exp();
    Ok(V2MReport {
        t,
        lhs,
        rhs,
        rel_err: (lhs - rhs).abs() / rhs.abs(),
        m_prime,
        fd_step: eps,
        bound_lo,
        bound_hi,
        bound_ok: lhs >= bound_lo * (1.0 - 1e-9) && lhs <= bound_hi * (1.0 + 1e-9),
    })
}

/// Number of probes on each side of `ζ`.
pub const UNIQUENESS_PROBES: usize = 4;

/// True when every probe pair `(ζ, ζ ± 1/(kN))`, `k = 1..4`, keeps
/// `ω ∈ [-N, N]` on `[t_start, t]`. For `N = 0` the probes sit at `ζ ± 1/k`.
pub fn uniqueness_diagnostic(handle: &SolutionHandle, zeta: f64, n: f64, t: f64) -> Result<bool> {
    if !(n >= 0.0) {
        return Err(invalid("uniqueness_diagnostic", format!("need N >= 0, got {n}")));
    }
    let t0 = handle.span().0;
    let radius = if n > 0.0 { 1.0 / n } else { 1.0 };
    let probes: Vec<f64> = (1..=UNIQUENESS_PROBES)
        .flat_map(|k| [-1.0, 1.0].map(|s| s * radius / k as f64))
        .collect();
    let tol = 1e-9 * n.max(1.0);
    let opts = TraceOptions {
        samples: 101,
        ..TraceOptions::default()
    };
    let ok = probes
        .par_iter()
        .map(|&d| {
            let (a, b) = if d > 0.0 { (zeta, zeta + d) } else { (zeta + d, zeta) };
            let pair = pair_series_with(handle, a, b, t0, t, &opts)?;
            Ok(pair.status == PairStatus::Complete && pair.omega.iter().all(|w| w.abs() <= n + tol))
        })
        .collect::<Result<Vec<bool>>>()?;
    Ok(ok.into_iter().all(|b| b))
}

#[derive(Debug, Serialize, Deserialize)]
struct FlowRow {
    zeta: f64,
    #[serde(rename = "M_t")]
    m_t: f64,
}

fn csv_error(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory csv writer")).expect("csv output is utf-8")
}

/// `t,x,u,v` table; `v` is empty where absent.
pub fn characteristic_to_csv(ch: &Characteristic) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for s in &ch.samples {
        w.serialize(s).expect("in-memory csv writer");
    }
    if ch.samples.is_empty() {
        w.write_record(["t", "x", "u", "v"]).expect("in-memory csv writer");
    }
    finish_csv(w)
}

pub fn characteristic_from_csv(text: &str) -> Result<Vec<CharSample>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let headers = r.headers().map_err(csv_error)?.clone();
    if headers.iter().collect::<Vec<_>>() != ["t", "x", "u", "v"] {
        return Err(Error::Parse(format!("expected header t,x,u,v, got {headers:?}")));
    }
    r.deserialize().map(|row| row.map_err(csv_error)).collect()
}

/// `zeta,M_t` table.
pub fn flow_map_to_csv(map: &FlowMap) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for (&zeta, &m_t) in map.starts.iter().zip(&map.ends) {
        w.serialize(FlowRow { zeta, m_t }).expect("in-memory csv writer");
    }
    if map.starts.is_empty() {
        w.write_record(["zeta", "M_t"]).expect("in-memory csv writer");
    }
    finish_csv(w)
}

/// Reads `(starts, ends)` from a `zeta,M_t` table.
pub fn flow_map_from_csv(text: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let headers = r.headers().map_err(csv_error)?.clone();
    if headers.iter().collect::<Vec<_>>() != ["zeta", "M_t"] {
        return Err(Error::Parse(format!("expected header zeta,M_t, got {headers:?}")));
    }
    let rows: Vec<FlowRow> = r
        .deserialize()
        .map(|row| row.map_err(csv_error))
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().map(|r| (r.zeta, r.m_t)).unzip())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::derive_params;
    use crate::solver::{MultipeakonState, SolverOptions};
    use std::sync::Arc;

    fn pair_handle(t_end: f64) -> SolutionHandle {
        let par = derive_params(2.0, 0.75f64.ln()).unwrap();
        SolutionHandle::exact_peakon_antipeakon(par, t_end).unwrap()
    }

    #[test]
    fn crest_rides_single_peakon() {
        let h = SolutionHandle::single_peakon(1.0, 2.0).unwrap();
        let c = trace(&h, 0.0, 0.0, 2.0, Side::Plain).unwrap();
        for s in &c.samples {
            assert!((s.x - s.t).abs() < 1e-9, "t={} x={}", s.t, s.x);
            assert!((s.u - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_field_keeps_start() {
        let h = SolutionHandle::zero(1.0).unwrap();
        let c = trace(&h, 0.3, 0.0, 1.0, Side::Leftmost).unwrap();
        assert!(c.samples.iter().all(|s| (s.x - 0.3).abs() < 1e-15 && s.u == 0.0));
        let c = v_along(&h, &c).unwrap();
        assert!(c.samples.iter().all(|s| s.v == Some(0.0)));
    }

    #[test]
    fn antisymmetric_midpoint_is_fixed() {
        let h = pair_handle(2.0);
        let c = trace(&h, 0.0, 0.0, 1.0, Side::Plain).unwrap();
        assert!(c.samples.iter().all(|s| s.x == 0.0));
    }

    #[test]
    fn position_interpolation_is_accurate() {
        let h = SolutionHandle::single_peakon(1.0, 2.0).unwrap();
        let c = trace(&h, -1.0, 0.0, 2.0, Side::Plain).unwrap();
        let d = trace_at(&h, -1.0, 0.0, &[0.0, 0.733], Side::Plain, &TraceOptions::default()).unwrap();
        assert!((c.position_at(0.733).unwrap() - d.end().x).abs() < 1e-9);
    }

    #[test]
    fn transported_u_matches_field() {
        let s = MultipeakonState::new(vec![-2.0, 0.0, 1.5], vec![2.0, 1.0, -0.5], 0.0).unwrap();
        let h = SolutionHandle::multipeakon(&s, 1.0, &SolverOptions::default()).unwrap();
        let c = trace(&h, -0.7, 0.0, 1.0, Side::Plain).unwrap();
        assert!(c.transport_residual < 1e-7, "{}", c.transport_residual);
    }

    #[test]
    fn slope_blows_up_at_collision_midpoint() {
        let h = pair_handle(3f64.ln());
        let c = trace(&h, 0.0, 0.0, 3f64.ln(), Side::Plain).unwrap();
        let c = v_along(&h, &c).unwrap();
        let tb = c.blow_up.expect("blow-up flag");
        assert!(tb < 3f64.ln() && tb > 3f64.ln() - 1e-6);
        // v(t) = u_x(t, 0) = -p e^{q/2}
        let par = derive_params(2.0, 0.75f64.ln()).unwrap();
        for s in c.samples.iter().filter(|s| s.t < 1.0) {
            let (p, q) = par.state_at(s.t);
            let exact = -p * (0.5 * q).exp();
            assert!((s.v.unwrap() - exact).abs() < 1e-7 * exact.abs(), "t={}", s.t);
        }
        assert!(c.samples.last().unwrap().v.is_none());
    }

    #[test]
    fn kink_start_is_rejected() {
        let h = SolutionHandle::single_peakon(1.0, 1.0).unwrap();
        let c = trace(&h, 0.0, 0.0, 1.0, Side::Plain).unwrap();
        assert!(matches!(v_along(&h, &c), Err(Error::SlopeMismatch { .. })));
    }

    #[test]
    fn tangent_bound_examples() {
        assert_eq!(omega_lower_bound(0.37, 0.0, 1.0, 1.0).unwrap(), 0.37);
        let b = omega_lower_bound(0.0, std::f64::consts::FRAC_PI_8, 1.0, 1.0).unwrap();
        assert!((b + 0.41421356237309503).abs() < 1e-14);
        assert!(matches!(
            omega_lower_bound(-10.0, 1.0, 1.0, 1.0),
            Err(Error::ArgumentOutOfRange { .. })
        ));
        assert!((omega_lower_bound(2.0, 0.5, 0.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn t_max_examples() {
        let (tm, om) = t_max_and_omega(1.0, 1.0, 0.1).unwrap();
        assert!((tm - std::f64::consts::FRAC_PI_8).abs() < 1e-15);
        assert!((om - (0.1 - std::f64::consts::FRAC_PI_2).tan()).abs() < 1e-12);
        assert!(t_max_and_omega(1.0, 1.0, tm).is_err());
        assert!(t_max_and_omega(0.0, 1.0, 0.0).is_err());
        assert!((omega_curve(1.0, 1.0, std::f64::consts::FRAC_PI_8) + 2.414213562373095).abs() < 1e-12);
        assert!(t_max_and_omega(1.0, 1.0, 1e-12).unwrap().1 < -1e11);
    }

    #[test]
    fn pair_identities_on_multipeakon() {
        let s = MultipeakonState::new(vec![-1.0, 1.0], vec![1.5, 0.5], 0.0).unwrap();
        let h = SolutionHandle::multipeakon(&s, 1.0, &SolverOptions::default()).unwrap();
        let pair = pair_series(&h, -0.4, 0.3, 0.0, 1.0).unwrap();
        assert_eq!(pair.status, PairStatus::Complete);
        for k in 0..pair.times.len() {
            let pred = pair.h[0] * pair.omega_integral[k].exp();
            assert!((pred - pair.h[k]).abs() < 1e-6 * pair.h[k], "k={k}");
        }
        assert!(pair.hdot_residual < 1e-4);
        let c = h.energy_sup();
        assert!(check_differential_inequality(&pair, 1.0, c, 1e-6).holds());
        assert!(check_tangent_bound(&pair, 1.0, c, 1e-6).holds());
    }

    #[test]
    fn pair_terminates_when_characteristics_meet() {
        let h = pair_handle(3f64.ln());
        let pair = pair_series(&h, -0.05, 0.05, 0.0, 3f64.ln()).unwrap();
        assert!(matches!(pair.status, PairStatus::Met { .. }));
        assert!(pair.h.iter().all(|&x| x > H_FLOOR));
    }

    #[test]
    fn flow_map_of_zero_is_identity() {
        let h = SolutionHandle::zero(1.0).unwrap();
        let starts: Vec<f64> = (0..11).map(|k| -1.0 + 0.2 * k as f64).collect();
        let m = flow_map(&h, &starts, 1.0).unwrap();
        assert!(m.monotone);
        for (a, b) in m.starts.iter().zip(&m.ends) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn single_peakon_flow_is_increasing_and_bounded() {
        let h = SolutionHandle::single_peakon(1.0, 1.0).unwrap();
        let starts: Vec<f64> = (0..21).map(|k| -3.0 + 0.1 * k as f64).collect();
        let m = flow_map(&h, &starts, 1.0).unwrap();
        assert!(m.monotone && m.ends.windows(2).all(|w| w[1] > w[0]));
        assert!(m.increment_bounds(1.0, 1.0, 1e-6).holds());
    }

    #[test]
    fn v2m_identity_before_collision() {
        let h = pair_handle(3f64.ln());
        let c = trace(&h, 0.02, 0.0, 0.8, Side::Plain).unwrap();
        let r = v2mprime_check(&h, &c, 0.8).unwrap();
        assert!(r.rel_err < 1e-3, "{r:?}");
        assert!(r.bound_ok, "{r:?}");
    }

    #[test]
    fn v2m_rejects_small_slopes() {
        let h = SolutionHandle::single_peakon(1.0, 1.0).unwrap();
        let c = trace(&h, -8.0, 0.0, 1.0, Side::Plain).unwrap();
        assert!(matches!(v2mprime_check(&h, &c, 1.0), Err(Error::VFloorViolated { .. })));
    }

    #[test]
    fn uniqueness_examples() {
        let z = SolutionHandle::zero(1.0).unwrap();
        assert!(uniqueness_diagnostic(&z, 0.0, 0.0, 1.0).unwrap());
        let sp = SolutionHandle::single_peakon(1.0, 0.5).unwrap();
        assert!(uniqueness_diagnostic(&sp, -3.0, 2.0, 0.5).unwrap());
        let pa = pair_handle(3f64.ln());
        assert!(!uniqueness_diagnostic(&pa, 0.0, 5.0, 3f64.ln() - 1e-3).unwrap());
    }

    #[test]
    fn reversal_retraces_characteristic() {
        let inner = Arc::new(SolutionHandle::single_peakon(1.0, 1.0).unwrap());
        let fwd = trace(&inner, -0.5, 0.0, 1.0, Side::Plain).unwrap();
        let rev = SolutionHandle::reversed(inner, 1.0).unwrap();
        let back = trace(&rev, fwd.end().x, 0.0, 1.0, Side::Plain).unwrap();
        assert!((back.end().x + 0.5).abs() < 1e-8, "{}", back.end().x);
    }

    #[test]
    fn csv_round_trips() {
        let h = SolutionHandle::single_peakon(1.0, 1.0).unwrap();
        let c = v_along(&h, &trace(&h, -1.0, 0.0, 1.0, Side::Plain).unwrap()).unwrap();
        let mut c2 = c.clone();
        c2.samples[3].v = None;
        for ch in [&c, &c2] {
            assert_eq!(characteristic_from_csv(&characteristic_to_csv(ch)).unwrap(), ch.samples);
        }
        let m = flow_map(&h, &[-1.0, 0.5], 1.0).unwrap();
        let (s, e) = flow_map_from_csv(&flow_map_to_csv(&m)).unwrap();
        assert_eq!((s, e), (m.starts, m.ends));
    }
}
