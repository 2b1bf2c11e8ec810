//! Piecewise-linear spatial snapshots of `u` with exact cell-wise energy
//! integrals and an exact evaluation of the nonlocal pressure
//! `P = ½ e^{-|x|} * (u² + ½ u_x²)`.
//!
//! A profile is supported on `[x₀, x_n]`; outside it `u` is taken to be zero.
//! The slope `u_x` is a cell quantity and is never needed at nodes.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernel::{KernelId, KernelSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveProfile {
    nodes: Vec<f64>,
    values: Vec<f64>,
    time_stamp: f64,
}

/// Energies of the positive-slope, negative-slope and `u²` parts on a window.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergySplit {
    pub e_plus: f64,
    pub e_minus: f64,
    pub e_u: f64,
}

impl EnergySplit {
    /// `∫ u_x²` on the window.
    pub fn slope_energy(&self) -> f64 {
        self.e_plus + self.e_minus
    }

    /// `½ ∫ (u² + u_x²)` on the window.
    pub fn half_h1(&self) -> f64 {
        0.5 * (self.e_u + self.e_plus + self.e_minus)
    }

    /// `∫ (a u² + b u_x²)` on the window.
    pub fn weighted(&self, spec: &KernelSpec) -> f64 {
        spec.a * self.e_u + spec.b * (self.e_plus + self.e_minus)
    }
}

impl std::ops::Add for EnergySplit {
    type Output = EnergySplit;
    fn add(self, o: EnergySplit) -> EnergySplit {
        EnergySplit {
            e_plus: self.e_plus + o.e_plus,
            e_minus: self.e_minus + o.e_minus,
            e_u: self.e_u + o.e_u,
        }
    }
}

/// `P` and `P_x` at a point.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Pressure {
    pub p: f64,
    pub p_x: f64,
}

impl WaveProfile {
    pub fn new(nodes: Vec<f64>, values: Vec<f64>, time_stamp: f64) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(invalid("WaveProfile::new", "need at least two nodes"));
        }
        if nodes.len() != values.len() {
            return Err(invalid(
                "WaveProfile::new",
                format!("{} nodes but {} values", nodes.len(), values.len()),
            ));
        }
        if !(time_stamp >= 0.0) || !time_stamp.is_finite() {
            return Err(invalid("WaveProfile::new", format!("bad time stamp {time_stamp}")));
        }
        if nodes.iter().chain(values.iter()).any(|v| !v.is_finite()) {
            return Err(invalid("WaveProfile::new", "non-finite node or value"));
        }
        if let Some(w) = nodes.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(invalid(
                "WaveProfile::new",
                format!("nodes not strictly increasing at {} -> {}", w[0], w[1]),
            ));
        }
        Ok(Self {
            nodes,
            values,
            time_stamp,
        })
    }

    /// Samples `f` at the given nodes.
    pub fn from_fn(nodes: Vec<f64>, time_stamp: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = nodes.iter().map(|&x| f(x)).collect();
        Self::new(nodes, values, time_stamp)
    }

    /// The identically zero profile on `[lo, hi]`.
    pub fn zero(lo: f64, hi: f64, time_stamp: f64) -> Result<Self> {
        Self::new(vec![lo, hi], vec![0.0, 0.0], time_stamp)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn time_stamp(&self) -> f64 {
        self.time_stamp
    }

    pub fn with_time(mut self, t: f64) -> Self {
        self.time_stamp = t;
        self
    }

    pub fn n_cells(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn span(&self) -> (f64, f64) {
        (self.nodes[0], self.nodes[self.nodes.len() - 1])
    }

    /// `-u`, keeping nodes and time stamp.
    pub fn negated(&self) -> Self {
        Self {
            nodes: self.nodes.clone(),
            values: self.values.iter().map(|v| -v).collect(),
            time_stamp: self.time_stamp,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Slope on cell `cell`.
    pub fn slope(&self, cell: usize) -> Result<f64> {
        if cell >= self.n_cells() {
            return Err(Error::IndexOutOfRange {
                index: cell,
                len: self.n_cells(),
            });
        }
        Ok(self.slope_unchecked(cell))
    }

    #[inline]
    fn slope_unchecked(&self, i: usize) -> f64 {
        (self.values[i + 1] - self.values[i]) / (self.nodes[i + 1] - self.nodes[i])
    }

    /// Index of the cell containing `x` (the cell to the right at interior
    /// nodes), or `None` outside `[x₀, x_n)`.
    fn cell_of(&self, x: f64) -> Option<usize> {
        let (lo, hi) = self.span();
        if !(x >= lo) || x >= hi {
            return None;
        }
        let k = self.nodes.partition_point(|&n| n <= x);
        Some(k - 1)
    }

    /// Piecewise-linear interpolant, zero outside the support.
    pub fn eval(&self, x: f64) -> f64 {
        if x == self.span().1 {
            return self.values[self.values.len() - 1];
        }
        match self.cell_of(x) {
            None => 0.0,
            Some(i) => {
                let x0 = self.nodes[i];
                if x == x0 {
                    self.values[i]
                } else {
                    self.values[i] + self.slope_unchecked(i) * (x - x0)
                }
            }
        }
    }

    /// Left and right cell slopes at `x` (equal in the interior of a cell).
    pub fn slopes_at(&self, x: f64) -> (f64, f64) {
        let (lo, hi) = self.span();
        if x < lo || x > hi {
            return (0.0, 0.0);
        }
        let k = self.nodes.partition_point(|&n| n < x);
        if k < self.nodes.len() && self.nodes[k] == x {
            let left = if k == 0 { 0.0 } else { self.slope_unchecked(k - 1) };
            let right = if k + 1 >= self.nodes.len() {
                0.0
            } else {
                self.slope_unchecked(k)
            };
            (left, right)
        } else {
            let s = self.slope_unchecked(k - 1);
            (s, s)
        }
    }

    /// Exact cell-wise `∫(u_x⁺)²`, `∫(u_x⁻)²`, `∫u²` over `[α, β] ∩ [x₀, x_n]`.
    pub fn energy_split(&self, alpha: f64, beta: f64) -> Result<EnergySplit> {
        if !(alpha <= beta) {
            return Err(invalid("energy_split", format!("window [{alpha}, {beta}] is inverted")));
        }
        let (lo, hi) = self.span();
        let a = alpha.max(lo);
        let b = beta.min(hi);
        let mut out = EnergySplit::default();
        if !(a < b) {
            return Ok(out);
        }
        let first = self.nodes.partition_point(|&n| n <= a).saturating_sub(1);
        for i in first..self.n_cells() {
            let (xl, xr) = (self.nodes[i], self.nodes[i + 1]);
            if xl >= b {
                break;
            }
            let c = xl.max(a);
            let d = xr.min(b);
            if !(d > c) {
                continue;
            }
            let s = self.slope_unchecked(i);
            let len = d - c;
            let (uc, ud) = if c == xl && d == xr {
                (self.values[i], self.values[i + 1])
            } else {
                (self.values[i] + s * (c - xl), self.values[i] + s * (d - xl))
            };
            if s > 0.0 {
                out.e_plus += s * s * len;
            } else {
                out.e_minus += s * s * len;
            }
            out.e_u += len * (uc * uc + uc * ud + ud * ud) / 3.0;
        }
        Ok(out)
    }

    /// Energy split over the whole support.
    pub fn total_energy(&self) -> EnergySplit {
        let (lo, hi) = self.span();
        self.energy_split(lo, hi).expect("span is ordered")
    }

    /// `(∫ φ (u_x⁺)², ∫ φ (u_x⁻)²)` where `cell_weight(x_i, x_{i+1})` returns
    /// `∫ φ` over a cell.
    pub(crate) fn weighted_slope_energy(&self, cell_weight: impl Fn(f64, f64) -> f64) -> (f64, f64) {
        let mut plus = 0.0;
        let mut minus = 0.0;
        for i in 0..self.n_cells() {
            let s = self.slope_unchecked(i);
            if s == 0.0 {
                continue;
            }
            let w = cell_weight(self.nodes[i], self.nodes[i + 1]);
            if w == 0.0 {
                continue;
            }
            if s > 0.0 {
                plus += s * s * w;
            } else {
                minus += s * s * w;
            }
        }
        (plus, minus)
    }

    /// Exact `P` and `P_x` at the query points (any order).
    pub fn convolve_p(&self, queries: &[f64]) -> Vec<Pressure> {
        self.convolve_exp(&KernelSpec::camassa_holm(), queries)
            .into_iter()
            .map(|(l, r)| Pressure {
                p: 0.5 * (l + r),
                p_x: 0.5 * (r - l),
            })
            .collect()
    }

    /// One-sided exponential moments of the density `a u² + b u_x²`:
    /// `(∫_{y<x} e^{-(x-y)} f dy, ∫_{y>x} e^{-(y-x)} f dy)` for each query.
    ///
    /// Two linear sweeps over the cells; each cell segment is integrated in
    /// closed form, so the total cost is `O(n + m log m)`.
    pub fn convolve_exp(&self, spec: &KernelSpec, queries: &[f64]) -> Vec<(f64, f64)> {
        let m = queries.len();
        let mut out = vec![(0.0, 0.0); m];
        if m == 0 || self.is_zero() {
            return out;
        }
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&i, &j| queries[i].total_cmp(&queries[j]));
        let (lo, hi) = self.span();
        let (wa, wb) = (spec.a, spec.b);

        // left-to-right
        let mut pos = lo;
        let mut acc = 0.0;
        let mut cell = 0usize;
        for &qi in &order {
            let x = queries[qi];
            if x <= lo {
                out[qi].0 = 0.0;
                continue;
            }
            let target = x.min(hi);
            while pos < target {
                while self.nodes[cell + 1] <= pos {
                    cell += 1;
                }
                let end = self.nodes[cell + 1].min(target);
                let s = self.slope_unchecked(cell);
                let u_end = self.values[cell] + s * (end - self.nodes[cell]);
                let w = end - pos;
                let e = exp_moments(w);
                let c0 = wa * u_end * u_end + wb * s * s;
                let c1 = -2.0 * wa * u_end * s;
                let c2 = wa * s * s;
                acc = acc * (-w).exp() + c0 * e[0] + c1 * e[1] + c2 * e[2];
                pos = end;
            }
            out[qi].0 = if x > hi { acc * (-(x - hi)).exp() } else { acc };
        }

        // right-to-left
        let mut pos = hi;
        let mut acc = 0.0;
        let mut cell = self.n_cells() - 1;
        for &qi in order.iter().rev() {
            let x = queries[qi];
            if x >= hi {
                out[qi].1 = 0.0;
                continue;
            }
            let target = x.max(lo);
            while pos > target {
                while self.nodes[cell] >= pos {
                    cell -= 1;
                }
                let start = self.nodes[cell].max(target);
                let s = self.slope_unchecked(cell);
                let u_start = self.values[cell] + s * (start - self.nodes[cell]);
                let w = pos - start;
                let e = exp_moments(w);
                let c0 = wa * u_start * u_start + wb * s * s;
                let c1 = 2.0 * wa * u_start * s;
                let c2 = wa * s * s;
                acc = acc * (-w).exp() + c0 * e[0] + c1 * e[1] + c2 * e[2];
                pos = start;
            }
            out[qi].1 = if x < lo { acc * (-(lo - x)).exp() } else { acc };
        }
        out
    }

    /// Right-hand side `∫ A(x, y) [a u² + b u_x²] dy` of the characteristic system.
    pub fn force(&self, spec: &KernelSpec, x: f64) -> f64 {
        match spec.kernel_id {
            KernelId::CamassaHolm => {
                let (l, r) = self.convolve_exp(spec, &[x])[0];
                0.5 * (l - r)
            }
            KernelId::HunterSaxton => {
                let (lo, _) = self.span();
                if x <= lo {
                    0.0
                } else {
                    self.energy_split(lo, x).map(|e| e.weighted(spec)).unwrap_or(0.0)
                }
            }
        }
    }

    /// Largest cell slope divided by `1 + 1/t`.
    pub fn oleinik_ratio(&self) -> Result<f64> {
        let t = self.time_stamp;
        if !(t > 0.0) {
            return Err(invalid("oleinik_ratio", "time stamp must be positive"));
        }
        let max_slope = (0..self.n_cells())
            .map(|i| self.slope_unchecked(i))
            .fold(f64::NEG_INFINITY, f64::max);
        Ok(max_slope / (1.0 + 1.0 / t))
    }

    /// Returns a copy with an extra node at `x` (no-op if already a node or
    /// outside the support). The interpolant is unchanged.
    pub fn with_node(&self, x: f64) -> Self {
        let (lo, hi) = self.span();
        if !(x > lo && x < hi) {
            return self.clone();
        }
        let k = self.nodes.partition_point(|&n| n < x);
        if self.nodes[k] == x {
            return self.clone();
        }
        let u = self.eval(x);
        let mut nodes = self.nodes.clone();
        let mut values = self.values.clone();
        nodes.insert(k, x);
        values.insert(k, u);
        Self {
            nodes,
            values,
            time_stamp: self.time_stamp,
        }
    }

    /// Serializes as `# t=<value>` followed by an `x,u` CSV table.
    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(self.nodes.len() * 40);
        let _ = writeln!(s, "# t={}", self.time_stamp);
        s.push_str("x,u\n");
        for (x, u) in self.nodes.iter().zip(&self.values) {
            let _ = writeln!(s, "{x},{u}");
        }
        s
    }

    /// Parses the format written by [`WaveProfile::to_csv`]. Other `#`
    /// comment lines are ignored; a missing time stamp reads as `0`.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut t = None;
        let mut nodes = Vec::new();
        let mut values = Vec::new();
        let mut header = false;
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(c) = line.strip_prefix('#') {
                if let Some(v) = c.trim().strip_prefix("t=") {
                    t = Some(
                        v.trim()
                            .parse::<f64>()
                            .map_err(|e| Error::Parse(format!("line {}: {e}", ln + 1)))?,
                    );
                }
                continue;
            }
            if !header {
                if line.replace(' ', "") != "x,u" {
                    return Err(Error::Parse(format!("line {}: expected header `x,u`", ln + 1)));
                }
                header = true;
                continue;
            }
            let (xs, us) = line
                .split_once(',')
                .ok_or_else(|| Error::Parse(format!("line {}: expected two columns", ln + 1)))?;
            let x = xs
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", ln + 1)))?;
            let u = us
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", ln + 1)))?;
            nodes.push(x);
            values.push(u);
        }
        if !header {
            return Err(Error::Parse("missing `x,u` header".into()));
        }
        Self::new(nodes, values, t.unwrap_or(0.0))
    }
}

/// `[∫₀^w e^{-s} s^k ds]` for `k = 0, 1, 2`.
pub(crate) fn exp_moments(w: f64) -> [f64; 3] {
    if w.is_infinite() {
        return [1.0, 1.0, 2.0];
    }
    if w < 0.5 {
        // Σ (-1)^n w^{n+k+1} / (n! (n+k+1))
        let mut out = [0.0; 3];
        for (k, o) in out.iter_mut().enumerate() {
            let mut pw = w.powi(k as i32 + 1);
            let mut fact = 1.0;
            let mut sum = 0.0;
            for n in 0..30 {
                if n > 0 {
                    pw *= -w;
                    fact *= n as f64;
                }
                let term = pw / (fact * (n + k + 1) as f64);
                sum += term;
                if term.abs() <= 1e-18 * sum.abs() {
                    break;
                }
            }
            *o = sum;
        }
        out
    } else {
        let e = (-w).exp();
        [-(-w).exp_m1(), 1.0 - e * (1.0 + w), 2.0 - e * (2.0 + w * (2.0 + w))]
    }
}
