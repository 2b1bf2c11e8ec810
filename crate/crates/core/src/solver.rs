//! Multipeakon trajectories and the uniform [`SolutionHandle`] access layer.
//!
//! The peakon ODEs `q̇_i = Σ_j p_j e^{-|q_i-q_j|}`,
//! `ṗ_i = p_i Σ_j p_j sgn(q_i-q_j) e^{-|q_i-q_j|}` are integrated with a
//! dense-output Runge-Kutta pair. When an approaching pair comes closer
//! than `gap_floor`, the pair is handed to the closed-form peakon-antipeakon
//! law (centred on a merged peakon that keeps interacting with the others)
//! and continued conservatively through the collision.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exact::PeakonAntipeakonParams;
use crate::kernel::{sgn, KernelSpec};
use crate::mesh::MeshSpec;
use crate::ode::{self, Control, DenseStep, OdeOptions};
use crate::peakons::PeakonSum;
use crate::profile::{EnergySplit, Pressure, WaveProfile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultipeakonState {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub t: f64,
}

impl MultipeakonState {
    pub fn new(q: Vec<f64>, p: Vec<f64>, t: f64) -> Result<Self> {
        if q.is_empty() {
            return Err(invalid("MultipeakonState", "need at least one peakon"));
        }
        if q.len() != p.len() {
            return Err(invalid("MultipeakonState", "positions and momenta differ in length"));
        }
        if q.iter().chain(&p).any(|v| !v.is_finite()) || !t.is_finite() {
            return Err(invalid("MultipeakonState", "non-finite entry"));
        }
        let mut s = q.clone();
        s.sort_by(f64::total_cmp);
        if s.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("MultipeakonState", "coincident positions"));
        }
        Ok(Self { q, p, t })
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn peakons(&self) -> PeakonSum {
        PeakonSum::new(&self.q, &self.p)
    }

    pub fn total_momentum(&self) -> f64 {
        self.p.iter().sum()
    }

    pub fn hamiltonian(&self) -> f64 {
        self.peakons().hamiltonian()
    }

    fn packed(&self) -> Vec<f64> {
        let mut y = self.q.clone();
        y.extend_from_slice(&self.p);
        y
    }

    fn unpack(y: &[f64], t: f64) -> Self {
        let n = y.len() / 2;
        Self {
            q: y[..n].to_vec(),
            p: y[n..].to_vec(),
            t,
        }
    }
}

/// Right-hand side of the peakon ODEs on the packed state `[q.., p..]`.
pub fn peakon_rhs(y: &[f64], dy: &mut [f64]) {
    let n = y.len() / 2;
    let (q, p) = y.split_at(n);
    let (dq, dp) = dy.split_at_mut(n);
    for i in 0..n {
        let mut vq = 0.0;
        let mut vp = 0.0;
        for j in 0..n {
            let d = q[i] - q[j];
            let e = p[j] * (-d.abs()).exp();
            vq += e;
            vp += sgn(d) * e;
        }
        dq[i] = vq;
        dp[i] = p[i] * vp;
    }
}

/// Packed state with positions replaced by their mean and the gaps between
/// neighbours, so that the error control sees gaps relative to their own size
/// rather than to `|q|`. The mean keeps mirror-symmetric states exactly
/// symmetric.
#[derive(Debug, Clone, PartialEq)]
struct GapFrame {
    /// Peakon indices from left to right.
    order: Vec<usize>,
}

impl GapFrame {
    fn new(y: &[f64]) -> Self {
        let n = y.len() / 2;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| y[a].total_cmp(&y[b]));
        Self { order }
    }

    fn encode(&self, y: &[f64]) -> Vec<f64> {
        let n = y.len() / 2;
        let mut z = vec![0.0; 2 * n];
        z[0] = y[..n].iter().sum::<f64>() / n as f64;
        for (k, &o) in self.order.iter().enumerate() {
            if k > 0 {
                z[k] = y[o] - y[self.order[k - 1]];
            }
            z[n + k] = y[n + o];
        }
        z
    }

    fn decode(&self, z: &[f64]) -> Vec<f64> {
        let n = z.len() / 2;
        let mut offsets = vec![0.0; n];
        for k in 1..n {
            offsets[k] = offsets[k - 1] + z[k];
        }
        let mean = offsets.iter().sum::<f64>() / n as f64;
        let mut y = vec![0.0; 2 * n];
        for (k, &o) in self.order.iter().enumerate() {
            y[o] = z[0] + (offsets[k] - mean);
            y[n + o] = z[n + k];
        }
        y
    }

    /// Peakon ODEs in gap coordinates. With `L_k`, `R_k` the momenta of the
    /// crests left and right of `k` (inclusive) damped by their distance,
    /// `ġ_k = expm1(-g_k)(L_{k-1} - R_k)` has no cancellation as `g_k → 0`.
    fn rhs(z: &[f64], dz: &mut [f64]) {
        let n = z.len() / 2;
        let (g, p) = z.split_at(n);
        let mut left = vec![0.0; n];
        let mut right = vec![0.0; n];
        for k in 0..n {
            left[k] = p[k] + if k > 0 { (-g[k]).exp() * left[k - 1] } else { 0.0 };
        }
        for k in (0..n).rev() {
            right[k] = p[k]
                + if k + 1 < n {
                    (-g[k + 1]).exp() * right[k + 1]
                } else {
                    0.0
                };
        }
        let (dg, dp) = dz.split_at_mut(n);
        dg[0] = (0..n).map(|k| left[k] + right[k] - p[k]).sum::<f64>() / n as f64;
        for k in 1..n {
            dg[k] = (-g[k]).exp_m1() * (left[k - 1] - right[k]);
        }
        for k in 0..n {
            dp[k] = p[k] * (left[k] - right[k]);
        }
    }

    /// Closest approaching neighbours `(gap, i, j)` read off the gap coordinates.
    fn closest_approaching(&self, z: &[f64]) -> Option<(f64, usize, usize)> {
        let n = z.len() / 2;
        let mut dz = vec![0.0; z.len()];
        Self::rhs(z, &mut dz);
        (1..n)
            .filter(|&k| dz[k] < 0.0)
            .map(|k| (z[k], self.order[k - 1], self.order[k]))
            .min_by(|a, b| a.0.total_cmp(&b.0))
    }

    fn min_gap(&self, z: &[f64]) -> Option<(f64, usize, usize)> {
        let n = z.len() / 2;
        (1..n)
            .map(|k| (z[k], self.order[k - 1], self.order[k]))
            .min_by(|a, b| a.0.total_cmp(&b.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub ode: OdeOptions,
    pub gap_floor: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            ode: OdeOptions::default(),
            gap_floor: 1e-10,
        }
    }
}

/// Closest approaching adjacent pair `(gap, i, j)` with `q_i < q_j`.
fn closest_approaching(y: &[f64]) -> Option<(f64, usize, usize)> {
    let n = y.len() / 2;
    let mut dy = vec![0.0; y.len()];
    peakon_rhs(y, &mut dy);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| y[a].total_cmp(&y[b]));
    idx.windows(2)
        .filter(|w| dy[w[1]] - dy[w[0]] < 0.0)
        .map(|w| (y[w[1]] - y[w[0]], w[0], w[1]))
        .min_by(|a, b| a.0.total_cmp(&b.0))
}

fn min_gap(y: &[f64]) -> Option<(f64, usize, usize)> {
    let n = y.len() / 2;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| y[a].total_cmp(&y[b]));
    idx.windows(2)
        .map(|w| (y[w[1]] - y[w[0]], w[0], w[1]))
        .min_by(|a, b| a.0.total_cmp(&b.0))
}

/// Advances `state` by `dt` with adaptive steps.
pub fn multipeakon_step(state: &MultipeakonState, dt: f64, opts: &SolverOptions) -> Result<MultipeakonState> {
    if !(dt > 0.0) {
        return Err(invalid("multipeakon_step", format!("need dt > 0, got {dt}")));
    }
    let y0 = state.packed();
    if let Some((gap, i, j)) = min_gap(&y0) {
        if gap < opts.gap_floor {
            return Err(Error::CollisionImminent { i, j, gap, t: state.t });
        }
    }
    let mut hit = None;
    let frame = GapFrame::new(&y0);
    let out = ode::integrate(
        |_, z, dz| GapFrame::rhs(z, dz),
        state.t,
        &frame.encode(&y0),
        state.t + dt,
        &opts.ode,
        |step| match frame.min_gap(&step.y_end()) {
            Some((gap, i, j)) if gap < opts.gap_floor => {
                hit = Some(Error::CollisionImminent {
                    i,
                    j,
                    gap,
                    t: step.t_end(),
                });
                Control::Stop
            }
            _ => Control::Continue,
        },
    )?;
    if let Some(e) = hit {
        return Err(e);
    }
    Ok(MultipeakonState::unpack(&frame.decode(&out.y), out.t))
}

/// Conservative passage of one pair through a collision.
#[derive(Debug, Clone, PartialEq)]
pub struct CollisionWindow {
    /// Entry time, collision time and exit time.
    pub t_a: f64,
    pub t_c: f64,
    pub t_b: f64,
    /// Left and right member of the pair at entry.
    pub i: usize,
    pub j: usize,
    /// Pair invariant `H` of the relative motion.
    pub h: f64,
    others: Vec<usize>,
    merged: Vec<DenseStep>,
}

impl CollisionWindow {
    /// `(gap, relative momentum p_i - p_j)` at time `t`.
    fn relative(&self, t: f64) -> (f64, f64) {
        let z = 0.5 * self.h * (self.t_c - t);
        let gap = z.sinh().powi(2).ln_1p();
        (gap, self.h / z.tanh())
    }

    fn merged_at(&self, t: f64) -> Vec<f64> {
        let t = t.clamp(self.t_a, self.t_b);
        match ode::locate(&self.merged, t) {
            Some(s) => s.eval(t),
            None => self.merged.last().map(|s| s.y_end()).unwrap_or_default(),
        }
    }

    fn state_at(&self, t: f64, n: usize) -> (Vec<f64>, Vec<f64>, bool) {
        let y = self.merged_at(t);
        let m = self.others.len() + 1;
        let mut q = vec![0.0; n];
        let mut p = vec![0.0; n];
        for (k, &o) in self.others.iter().enumerate() {
            q[o] = y[k];
            p[o] = y[m + k];
        }
        let centre = y[m - 1];
        let total = y[2 * m - 1];
        if t == self.t_c {
            q[self.i] = centre;
            q[self.j] = centre;
            p[self.i] = 0.5 * total;
            p[self.j] = 0.5 * total;
            return (q, p, true);
        }
        let (gap, d) = self.relative(t);
        q[self.i] = centre - 0.5 * gap;
        q[self.j] = centre + 0.5 * gap;
        p[self.i] = 0.5 * (total + d);
        p[self.j] = 0.5 * (total - d);
        (q, p, false)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Segment {
    Smooth {
        t0: f64,
        t1: f64,
        frame: GapFrame,
        steps: Vec<DenseStep>,
    },
    Collision(CollisionWindow),
}

impl Segment {
    fn span(&self) -> (f64, f64) {
        match self {
            Segment::Smooth { t0, t1, .. } => (*t0, *t1),
            Segment::Collision(w) => (w.t_a, w.t_b),
        }
    }
}

/// A multipeakon solution on `[t_start, t_end]` with conservative collisions.
#[derive(Debug, Clone, PartialEq)]
pub struct MultipeakonTrajectory {
    n: usize,
    t_start: f64,
    t_end: f64,
    initial: MultipeakonState,
    segments: Vec<Segment>,
}

impl MultipeakonTrajectory {
    pub fn integrate(initial: &MultipeakonState, t_end: f64, opts: &SolverOptions) -> Result<Self> {
        if !(t_end >= initial.t) {
            return Err(invalid("MultipeakonTrajectory", "t_end precedes the initial time"));
        }
        let n = initial.len();
        let mut segments = Vec::new();
        let mut t = initial.t;
        let mut y = initial.packed();
        let mut exit_gap: Option<(usize, usize, f64)> = None;
        while t < t_end {
            if let Some((gap, i, j)) = closest_approaching(&y) {
                if gap <= opts.gap_floor {
                    let w = collision_window(&y, t, i, j, gap, opts)?;
                    let (q, p, _) = w.state_at(w.t_b, n);
                    t = w.t_b;
                    y = q;
                    y.extend(p);
                    exit_gap = Some((w.i, w.j, w.relative(w.t_b).0));
                    segments.push(Segment::Collision(w));
                    continue;
                }
            }
            let mut steps: Vec<DenseStep> = Vec::new();
            let mut entry: Option<f64> = None;
            let frame = GapFrame::new(&y);
            let mut z0 = frame.encode(&y);
            // the window knows the separating gap better than the rounded positions do
            if let Some((i, j, g)) = exit_gap.take() {
                if let Some(k) = (1..n).find(|&k| frame.order[k - 1] == i && frame.order[k] == j) {
                    z0[k] = g;
                }
            }
            let out = ode::integrate(
                |_, z, dz| GapFrame::rhs(z, dz),
                t,
                &z0,
                t_end,
                &opts.ode,
                |step| {
                    let ze = step.y_end();
                    let order_flipped = frame.min_gap(&ze).is_some_and(|(g, _, _)| g <= 0.0);
                    let close = frame
                        .closest_approaching(&ze)
                        .is_some_and(|(g, _, _)| g <= opts.gap_floor);
                    if close || order_flipped {
                        let ta = entry_time(step, &frame, opts.gap_floor);
                        entry = Some(ta);
                        steps.push(step.clone());
                        Control::Stop
                    } else {
                        steps.push(step.clone());
                        Control::Continue
                    }
                },
            )?;
            match entry {
                Some(ta) => {
                    let s = ode::locate(&steps, ta).unwrap_or_else(|| steps.last().unwrap());
                    let za = s.eval(ta);
                    y = frame.decode(&za);
                    let Some((gap, i, j)) = frame.closest_approaching(&za) else {
                        return Err(Error::Integrator {
                            t: ta,
                            reason: "lost the colliding pair".into(),
                        });
                    };
                    if gap > opts.gap_floor * (1.0 + 1e-6) {
                        return Err(Error::Integrator {
                            t: ta,
                            reason: "failed to locate collision entry".into(),
                        });
                    }
                    segments.push(Segment::Smooth {
                        t0: t,
                        t1: ta,
                        frame,
                        steps,
                    });
                    let w = collision_window(&y, ta, i, j, gap.max(0.0), opts)?;
                    let (q, p, _) = w.state_at(w.t_b, n);
                    t = w.t_b;
                    y = q;
                    y.extend(p);
                    exit_gap = Some((w.i, w.j, w.relative(w.t_b).0));
                    segments.push(Segment::Collision(w));
                }
                None => {
                    y = frame.decode(&out.y);
                    segments.push(Segment::Smooth {
                        t0: t,
                        t1: out.t,
                        frame,
                        steps,
                    });
                    t = out.t;
                }
            }
        }
        Ok(Self {
            n,
            t_start: initial.t,
            t_end: t.max(t_end),
            initial: initial.clone(),
            segments,
        })
    }

    pub fn span(&self) -> (f64, f64) {
        (self.t_start, self.t_end)
    }

    pub fn initial(&self) -> &MultipeakonState {
        &self.initial
    }

    pub fn collisions(&self) -> Vec<&CollisionWindow> {
        self.segments
            .iter()
            .filter_map(|s| match s {
                Segment::Collision(w) => Some(w),
                _ => None,
            })
            .collect()
    }

    pub fn state_at(&self, t: f64) -> Result<MultipeakonState> {
        if !(t >= self.t_start && t <= self.t_end) {
            return Err(Error::OutOfSpan {
                t,
                start: self.t_start,
                end: self.t_end,
            });
        }
        if t == self.t_start {
            return Ok(self.initial.clone());
        }
        let k = self
            .segments
            .partition_point(|s| s.span().1 < t)
            .min(self.segments.len() - 1);
        match &self.segments[k] {
            Segment::Smooth { steps, frame, .. } => {
                let s = ode::locate(steps, t).or(steps.last()).ok_or(Error::OutOfSpan {
                    t,
                    start: self.t_start,
                    end: self.t_end,
                })?;
                Ok(MultipeakonState::unpack(&frame.decode(&s.eval(t)), t))
            }
            Segment::Collision(w) => {
                let (q, p, _) = w.state_at(t, self.n);
                Ok(MultipeakonState { q, p, t })
            }
        }
    }

    pub fn peakon_sum_at(&self, t: f64) -> Result<PeakonSum> {
        let s = self.state_at(t)?;
        Ok(PeakonSum::new(&s.q, &s.p))
    }
}

/// First time inside `step` where an approaching pair reaches `floor`.
fn entry_time(step: &DenseStep, frame: &GapFrame, floor: f64) -> f64 {
    let g = |t: f64| -> f64 {
        let z = step.eval(t);
        match (frame.closest_approaching(&z), frame.min_gap(&z)) {
            (_, Some((g, _, _))) if g <= 0.0 => g - floor,
            (Some((g, _, _)), _) => g - floor,
            _ => 1.0,
        }
    };
    let mut lo = step.t;
    let mut hi = step.t_end();
    if g(lo) <= 0.0 {
        return lo;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

fn collision_window(
    y: &[f64],
    t_a: f64,
    i: usize,
    j: usize,
    gap: f64,
    opts: &SolverOptions,
) -> Result<CollisionWindow> {
    let n = y.len() / 2;
    let (qi, qj) = (y[i], y[j]);
    let (pi, pj) = (y[n + i], y[n + j]);
    let d = pi - pj;
    if !(d > 0.0) {
        return Err(Error::Integrator {
            t: t_a,
            reason: "collision window entered by a separating pair".into(),
        });
    }
    // H² = d²(1 - e^{-gap}); time to collision 2 atanh(H/d)/H
    let r = (-(-gap).exp_m1()).sqrt();
    let h = d * r;
    let tau = if r > 0.0 { 2.0 * r.atanh() / h } else { 0.0 };
    let t_c = t_a + tau;
    let t_b = t_c + tau;

    let others: Vec<usize> = (0..n).filter(|&k| k != i && k != j).collect();
    let m = others.len() + 1;
    let mut z = Vec::with_capacity(2 * m);
    z.extend(others.iter().map(|&k| y[k]));
    z.push(0.5 * (qi + qj));
    z.extend(others.iter().map(|&k| y[n + k]));
    z.push(pi + pj);
    let (_, merged) = ode::integrate_dense(|_, y, dy| peakon_rhs(y, dy), t_a, &z, t_b, &opts.ode)?;
    Ok(CollisionWindow {
        t_a,
        t_c,
        t_b,
        i,
        j,
        h,
        others,
        merged,
    })
}

/// Where a handle's data comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SourceKind {
    ExactPeakonAntipeakon,
    Multipeakon,
    Reversed,
    FromFile,
}

impl fmt::Display for SourceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SourceKind::ExactPeakonAntipeakon => "ExactPeakonAntipeakon",
            SourceKind::Multipeakon => "Multipeakon",
            SourceKind::Reversed => "Reversed",
            SourceKind::FromFile => "FromFile",
        };
        f.write_str(s)
    }
}

impl FromStr for SourceKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ExactPeakonAntipeakon" => Ok(SourceKind::ExactPeakonAntipeakon),
            "Multipeakon" => Ok(SourceKind::Multipeakon),
            "Reversed" => Ok(SourceKind::Reversed),
            "FromFile" => Ok(SourceKind::FromFile),
            other => Err(Error::Parse(format!("unknown source kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
enum Source {
    Exact(PeakonAntipeakonParams),
    Multipeakon(Arc<MultipeakonTrajectory>),
    Reversed { inner: Arc<SolutionHandle>, t_rev: f64 },
    FromFile(Arc<Vec<WaveProfile>>),
}

/// The solution at one instant, either as an exact peakon sum or as a
/// sampled profile.
#[derive(Debug, Clone, PartialEq)]
pub enum Snapshot {
    Peakons(PeakonSum),
    Profile(WaveProfile),
}

impl Snapshot {
    pub fn u(&self, x: f64) -> f64 {
        match self {
            Snapshot::Peakons(p) => p.u(x),
            Snapshot::Profile(p) => p.eval(x),
        }
    }

    pub fn slopes(&self, x: f64) -> (f64, f64) {
        match self {
            Snapshot::Peakons(p) => p.slopes(x),
            Snapshot::Profile(p) => p.slopes_at(x),
        }
    }

    pub fn pressure(&self, x: f64) -> Pressure {
        match self {
            Snapshot::Peakons(p) => p.pressure(x),
            Snapshot::Profile(p) => p.convolve_p(&[x])[0],
        }
    }

    /// `∫A(x,y)[a u² + b u_x²] dy`.
    pub fn force(&self, kernel: &KernelSpec, x: f64) -> f64 {
        match (self, kernel.kernel_id) {
            (Snapshot::Peakons(p), crate::kernel::KernelId::CamassaHolm) => -p.pressure(x).p_x,
            (Snapshot::Peakons(p), crate::kernel::KernelId::HunterSaxton) => {
                let e = p.energy_split(f64::NEG_INFINITY, x).unwrap_or_default();
                kernel.a * e.e_u + kernel.b * (e.e_plus + e.e_minus)
            }
            (Snapshot::Profile(p), _) => p.force(kernel, x),
        }
    }

    pub fn energy_split(&self, alpha: f64, beta: f64) -> Result<EnergySplit> {
        match self {
            Snapshot::Peakons(p) => p.energy_split(alpha, beta),
            Snapshot::Profile(p) => p.energy_split(alpha, beta),
        }
    }

    pub fn total_energy(&self) -> EnergySplit {
        self.energy_split(f64::NEG_INFINITY, f64::INFINITY).unwrap_or_default()
    }

    pub fn sup_abs(&self) -> f64 {
        match self {
            Snapshot::Peakons(p) => p.sup_abs(),
            Snapshot::Profile(p) => p.sup_abs(),
        }
    }

    /// Largest value of `P` over the support.
    pub fn sup_pressure(&self) -> f64 {
        match self {
            Snapshot::Peakons(p) => {
                // P attains its maximum where P_x changes sign; crests bracket it
                let mut best: f64 = 0.0;
                for &q in p.positions() {
                    best = best.max(p.pressure(q).p);
                }
                let pos = p.positions();
                for w in pos.windows(2) {
                    for k in 1..16 {
                        let x = w[0] + (w[1] - w[0]) * k as f64 / 16.0;
                        best = best.max(p.pressure(x).p);
                    }
                }
                best
            }
            Snapshot::Profile(p) => p.convolve_p(p.nodes()).iter().map(|r| r.p).fold(0.0, f64::max),
        }
    }

    pub fn negated(&self) -> Self {
        match self {
            Snapshot::Peakons(p) => Snapshot::Peakons(p.negated()),
            Snapshot::Profile(p) => Snapshot::Profile(p.negated()),
        }
    }

    pub fn to_profile(&self, mesh: &MeshSpec, t: f64) -> Result<WaveProfile> {
        match self {
            Snapshot::Peakons(p) => p.to_profile(mesh, t),
            Snapshot::Profile(p) => Ok(p.clone().with_time(t)),
        }
    }
}

/// Uniform time-indexed access to a weak solution.
#[derive(Debug, Clone)]
pub struct SolutionHandle {
    source: Source,
    kernel: KernelSpec,
    t_start: f64,
    t_end: f64,
    energy_sup: f64,
    mesh: MeshSpec,
}

/// Number of uniformly spaced times used to estimate `C` at construction.
const ENERGY_SAMPLES: usize = 64;

impl SolutionHandle {
    fn build(source: Source, kernel: KernelSpec, t_start: f64, t_end: f64) -> Result<Self> {
        let mut h = Self {
            source,
            kernel,
            t_start,
            t_end,
            energy_sup: 0.0,
            mesh: MeshSpec::default(),
        };
        let mut times: Vec<f64> = (0..=ENERGY_SAMPLES)
            .map(|k| t_start + (t_end - t_start) * k as f64 / ENERGY_SAMPLES as f64)
            .collect();
        times.extend(h.event_times().into_iter().map(|t| t + 1e-9).filter(|&t| t <= t_end));
        h.energy_sup = energy_sup(&h, &times)?;
        Ok(h)
    }

    /// Peakon-antipeakon pair on `[0, t_end]`.
    pub fn exact_peakon_antipeakon(params: PeakonAntipeakonParams, t_end: f64) -> Result<Self> {
        check_span(0.0, t_end)?;
        Self::build(Source::Exact(params), KernelSpec::camassa_holm(), 0.0, t_end)
    }

    pub fn multipeakon(initial: &MultipeakonState, t_end: f64, opts: &SolverOptions) -> Result<Self> {
        check_span(initial.t, t_end)?;
        let traj = MultipeakonTrajectory::integrate(initial, t_end, opts)?;
        Self::from_trajectory(Arc::new(traj))
    }

    pub fn from_trajectory(traj: Arc<MultipeakonTrajectory>) -> Result<Self> {
        let (a, b) = traj.span();
        Self::build(Source::Multipeakon(traj), KernelSpec::camassa_holm(), a, b)
    }

    /// Travelling peakon `c e^{-|x - ct|}`.
    pub fn single_peakon(c: f64, t_end: f64) -> Result<Self> {
        Self::multipeakon(
            &MultipeakonState::new(vec![0.0], vec![c], 0.0)?,
            t_end,
            &SolverOptions::default(),
        )
    }

    /// `u ≡ 0`.
    pub fn zero(t_end: f64) -> Result<Self> {
        Self::single_peakon(0.0, t_end)
    }

    /// `-u(t_rev - t, ·)` on `[0, t_rev]`.
    pub fn reversed(inner: Arc<SolutionHandle>, t_rev: f64) -> Result<Self> {
        let (a, b) = inner.span();
        if !(t_rev >= a && t_rev <= b) || a > 0.0 {
            return Err(Error::OutOfSpan {
                t: t_rev,
                start: a,
                end: b,
            });
        }
        let kernel = inner.kernel;
        let mesh = inner.mesh;
        let mut h = Self::build(Source::Reversed { inner, t_rev }, kernel, 0.0, t_rev)?;
        h.mesh = mesh;
        Ok(h)
    }

    /// Profiles in increasing time order; linear in time between them.
    pub fn from_profiles(profiles: Vec<WaveProfile>, kernel: KernelSpec) -> Result<Self> {
        if profiles.is_empty() {
            return Err(invalid("SolutionHandle::from_profiles", "no profiles"));
        }
        if profiles.windows(2).any(|w| !(w[1].time_stamp() > w[0].time_stamp())) {
            return Err(invalid("SolutionHandle::from_profiles", "time stamps must increase"));
        }
        let a = profiles[0].time_stamp();
        let b = profiles[profiles.len() - 1].time_stamp();
        Self::build(Source::FromFile(Arc::new(profiles)), kernel, a, b)
    }

    /// Replaces the kernel; only meaningful when the data also solves the
    /// other equation, as `u ≡ 0` does.
    pub fn with_kernel(mut self, kernel: KernelSpec) -> Self {
        self.kernel = kernel;
        self
    }

    pub fn with_mesh(mut self, mesh: MeshSpec) -> Self {
        self.mesh = mesh;
        self
    }

    pub fn kind(&self) -> SourceKind {
        match self.source {
            Source::Exact(_) => SourceKind::ExactPeakonAntipeakon,
            Source::Multipeakon(_) => SourceKind::Multipeakon,
            Source::Reversed { .. } => SourceKind::Reversed,
            Source::FromFile(_) => SourceKind::FromFile,
        }
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn mesh(&self) -> &MeshSpec {
        &self.mesh
    }

    pub fn span(&self) -> (f64, f64) {
        (self.t_start, self.t_end)
    }

    /// `C = sup_t ∫(a u² + b u_x²)` over the construction samples.
    pub fn energy_sup(&self) -> f64 {
        self.energy_sup
    }

    /// Known singular times (collisions) inside the span.
    pub fn event_times(&self) -> Vec<f64> {
        let mut ev = match &self.source {
            Source::Exact(p) => vec![p.t_collision],
            Source::Multipeakon(tr) => tr.collisions().iter().map(|w| w.t_c).collect(),
            Source::Reversed { inner, t_rev } => inner.event_times().into_iter().map(|t| t_rev - t).collect(),
            Source::FromFile(_) => Vec::new(),
        };
        ev.retain(|&t| t >= self.t_start && t <= self.t_end);
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn snapshot(&self, t: f64) -> Result<Snapshot> {
        if !(t >= self.t_start && t <= self.t_end) {
            return Err(Error::OutOfSpan {
                t,
                start: self.t_start,
                end: self.t_end,
            });
        }
        match &self.source {
            Source::Exact(p) => Ok(Snapshot::Peakons(p.peakon_sum_at(t))),
            Source::Multipeakon(tr) => Ok(Snapshot::Peakons(tr.peakon_sum_at(t)?)),
            Source::Reversed { inner, t_rev } => {
                let s = inner.snapshot((t_rev - t).max(inner.t_start))?.negated();
                Ok(match s {
                    Snapshot::Profile(p) => Snapshot::Profile(p.with_time(t)),
                    other => other,
                })
            }
            Source::FromFile(profiles) => Ok(Snapshot::Profile(interpolate(profiles, t)?)),
        }
    }

    pub fn profile_at(&self, t: f64) -> Result<WaveProfile> {
        self.snapshot(t)?.to_profile(&self.mesh, t)
    }

    pub fn profile_at_with(&self, t: f64, mesh: &MeshSpec) -> Result<WaveProfile> {
        self.snapshot(t)?.to_profile(mesh, t)
    }

    /// `(a, b)`-weighted energy at time `t`.
    pub fn weighted_energy(&self, t: f64) -> Result<f64> {
        Ok(self.snapshot(t)?.total_energy().weighted(&self.kernel))
    }

    /// `(sup |u|, sup P)` over the given times.
    pub fn sup_u_and_p(&self, times: &[f64]) -> Result<(f64, f64)> {
        let mut su: f64 = 0.0;
        let mut sp: f64 = 0.0;
        for &t in times {
            let s = self.snapshot(t)?;
            su = su.max(s.sup_abs());
            sp = sp.max(s.sup_pressure());
        }
        Ok((su, sp))
    }

    /// Profiles at the given times, in a form [`write_trajectory`] accepts.
    pub fn sample(&self, times: &[f64]) -> Result<Vec<WaveProfile>> {
        times.iter().map(|&t| self.profile_at(t)).collect()
    }
}

fn check_span(a: f64, b: f64) -> Result<()> {
    if !(b >= a) || !b.is_finite() {
        return Err(invalid("SolutionHandle", format!("invalid span [{a}, {b}]")));
    }
    Ok(())
}

/// Maximum of the `(a, b)`-weighted energy over `sample_times`.
pub fn energy_sup(handle: &SolutionHandle, sample_times: &[f64]) -> Result<f64> {
    if sample_times.is_empty() {
        return Err(invalid("energy_sup", "no sample times"));
    }
    let mut c: f64 = 0.0;
    for &t in sample_times {
        c = c.max(handle.weighted_energy(t)?);
    }
    Ok(c)
}

fn interpolate(profiles: &[WaveProfile], t: f64) -> Result<WaveProfile> {
    let k = profiles.partition_point(|p| p.time_stamp() < t);
    if k < profiles.len() && profiles[k].time_stamp() == t {
        return Ok(profiles[k].clone());
    }
    if k == 0 || k == profiles.len() {
        let (a, b) = (profiles[0].time_stamp(), profiles[profiles.len() - 1].time_stamp());
        return Err(Error::OutOfSpan { t, start: a, end: b });
    }
    let (p0, p1) = (&profiles[k - 1], &profiles[k]);
    let w = (t - p0.time_stamp()) / (p1.time_stamp() - p0.time_stamp());
    let mut nodes: Vec<f64> = p0.nodes().iter().chain(p1.nodes()).copied().collect();
    nodes.sort_by(f64::total_cmp);
    nodes.dedup();
    WaveProfile::from_fn(nodes, t, |x| (1.0 - w) * p0.eval(x) + w * p1.eval(x))
}

/// Serializes profiles as blank-line separated CSV blocks under a
/// `# source=<kind> T_end=<t>` header.
pub fn trajectory_to_string(kind: SourceKind, t_end: f64, profiles: &[WaveProfile]) -> String {
    let mut s = format!("# source={kind} T_end={t_end:?}\n");
    for (k, p) in profiles.iter().enumerate() {
        if k > 0 {
            s.push('\n');
        }
        s.push_str(&p.to_csv());
    }
    s
}

pub fn trajectory_from_str(text: &str) -> Result<(SourceKind, f64, Vec<WaveProfile>)> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty trajectory".into()))?;
    let rest = header
        .strip_prefix("# ")
        .ok_or_else(|| Error::Parse(format!("bad trajectory header {header:?}")))?;
    let mut kind = None;
    let mut t_end = None;
    for field in rest.split_whitespace() {
        match field.split_once('=') {
            Some(("source", v)) => kind = Some(v.parse::<SourceKind>()?),
            Some(("T_end", v)) => t_end = Some(v.parse::<f64>().map_err(|e| Error::Parse(format!("T_end: {e}")))?),
            _ => return Err(Error::Parse(format!("unknown header field {field:?}"))),
        }
    }
    let kind = kind.ok_or_else(|| Error::Parse("header lacks source".into()))?;
    let t_end = t_end.ok_or_else(|| Error::Parse("header lacks T_end".into()))?;
    let body: Vec<&str> = lines.collect();
    let mut profiles = Vec::new();
    for block in body.split(|l| l.trim().is_empty()) {
        if block.is_empty() {
            continue;
        }
        profiles.push(WaveProfile::from_csv(&block.join("\n"))?);
    }
    if profiles.is_empty() {
        return Err(Error::Parse("trajectory has no profiles".into()));
    }
    Ok((kind, t_end, profiles))
}

/// Writes the trajectory file through a temporary file and a rename.
pub fn write_trajectory(path: &Path, kind: SourceKind, t_end: f64, profiles: &[WaveProfile]) -> Result<()> {
    crate::output::write_atomic(path, trajectory_to_string(kind, t_end, profiles).as_bytes())
}

pub fn read_trajectory(path: &Path) -> Result<(SourceKind, f64, Vec<WaveProfile>)> {
    trajectory_from_str(&std::fs::read_to_string(path)?)
}

/// Sup-norm distance between the integrated pair and the closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub t_max: f64,
    pub samples: usize,
    pub max_error: f64,
    pub worst_t: f64,
}

/// `sup_x |u_ode - u_exact|` is attained at a crest of either sum, since
/// between crests the difference is `A e^x + B e^{-x}`.
pub fn peakon_sup_distance(a: &PeakonSum, b: &PeakonSum) -> f64 {
    a.positions()
        .iter()
        .chain(b.positions())
        .map(|&x| (a.u(x) - b.u(x)).abs())
        .fold(0.0, f64::max)
}

/// Integrates the `N = 2` system from the pair's initial state and compares it
/// with the closed form at `samples` uniform times in `[0, t_max]`.
pub fn oracle_compare(
    params: &PeakonAntipeakonParams,
    t_max: f64,
    samples: usize,
    opts: &SolverOptions,
) -> Result<OracleReport> {
    if samples < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: samples,
        });
    }
    if !(t_max > 0.0) || t_max >= params.t_collision {
        return Err(invalid(
            "oracle_compare",
            format!("need 0 < t_max < T = {}", params.t_collision),
        ));
    }
    let init = params.peakon_sum_at(0.0);
    let state = MultipeakonState::new(init.positions().to_vec(), init.momenta().to_vec(), 0.0)?;
    let traj = MultipeakonTrajectory::integrate(&state, t_max, opts)?;
    let mut report = OracleReport {
        t_max,
        samples,
        max_error: 0.0,
        worst_t: 0.0,
    };
    for k in 0..samples {
        let t = (t_max * k as f64 / (samples - 1) as f64).min(t_max);
        let err = peakon_sup_distance(&traj.peakon_sum_at(t)?, &params.peakon_sum_at(t));
        if err > report.max_error {
            report.max_error = err;
            report.worst_t = t;
        }
    }
    Ok(report)
}
