//! Graded spatial meshes for peaked profiles.
//!
//! Crests are always nodes. Away from each crest the spacing grows
//! geometrically from a floor proportional to the distance to the nearest
//! neighbouring anchor until it reaches `max_spacing`. Between two crests the
//! midpoint is a node as well.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeshSpec {
    /// Largest cell width.
    pub max_spacing: f64,
    /// Ratio between consecutive cell widths near a crest.
    pub grading: f64,
    /// First cell width next to a crest, relative to the crest's gap to its
    /// nearest neighbour.
    pub floor_rel: f64,
    /// Tails are cut where the wave amplitude bound drops below this.
    pub tail_tol: f64,
}

impl Default for MeshSpec {
    fn default() -> Self {
        Self {
            max_spacing: 1e-2,
            grading: 1.2,
            floor_rel: 1e-9,
            tail_tol: 1e-12,
        }
    }
}

impl MeshSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_spacing > 0.0) || !self.max_spacing.is_finite() {
            return Err(invalid("MeshSpec", "max_spacing must be positive"));
        }
        if !(self.grading > 1.0) {
            return Err(invalid("MeshSpec", "grading must exceed 1"));
        }
        if !(self.floor_rel > 0.0 && self.floor_rel < 1.0) {
            return Err(invalid("MeshSpec", "floor_rel must lie in (0, 1)"));
        }
        if !(self.tail_tol > 0.0) {
            return Err(invalid("MeshSpec", "tail_tol must be positive"));
        }
        Ok(())
    }

    /// Same mesh with cell widths divided by `factor`.
    pub fn refined(&self, factor: f64) -> Self {
        Self {
            max_spacing: self.max_spacing / factor,
            ..*self
        }
    }

    /// Half-width of the tail region beyond the outermost crest for a wave
    /// whose amplitude is bounded by `amplitude · e^{-dist}`.
    pub fn tail_length(&self, amplitude: f64) -> f64 {
        if amplitude > 0.0 {
            (amplitude / self.tail_tol).ln().max(1.0)
        } else {
            1.0
        }
    }

    /// Nodes for a wave with crests at `crests` (any order, duplicates
    /// allowed) whose amplitude is bounded by `amplitude · e^{-dist}` away
    /// from the crests.
    pub fn nodes(&self, crests: &[f64], amplitude: f64) -> Vec<f64> {
        let mut cs: Vec<f64> = crests.iter().copied().filter(|c| c.is_finite()).collect();
        cs.sort_by(f64::total_cmp);
        cs.dedup();
        if cs.is_empty() {
            cs.push(0.0);
        }
        let tail = self.tail_length(amplitude);
        let lo = cs[0] - tail;
        let hi = cs[cs.len() - 1] + tail;

        let mut out = Vec::with_capacity(((hi - lo) / self.max_spacing) as usize + 64 * cs.len());
        out.push(lo);
        // left tail: graded towards the first crest only
        self.fill(&mut out, lo, cs[0], false, true);
        for w in cs.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            self.fill(&mut out, w[0], mid, true, false);
            self.fill(&mut out, mid, w[1], false, true);
        }
        self.fill(&mut out, cs[cs.len() - 1], hi, true, false);
        out.dedup();
        // guard against rounding collapsing neighbouring nodes
        if !out.windows(2).all(|w| w[1] > w[0]) {
            out.sort_by(f64::total_cmp);
            out.dedup();
        }
        out
    }

    /// Appends nodes in `(a, b]`, graded near `a` and/or `b`.
    fn fill(&self, out: &mut Vec<f64>, a: f64, b: f64, graded_a: bool, graded_b: bool) {
        let len = b - a;
        if !(len > 0.0) {
            return;
        }
        let scale = a.abs().max(b.abs()).max(1.0);
        let min_cell = 8.0 * f64::EPSILON * scale;
        if len <= min_cell {
            out.push(b);
            return;
        }
        let h0 = (self.floor_rel * (2.0 * len).min(1.0))
            .max(min_cell)
            .min(self.max_spacing);
        let graded_offsets = |limit: f64| -> Vec<f64> {
            let mut v = Vec::new();
            let mut d = 0.0;
            let mut h = h0;
            while h < self.max_spacing {
                d += h;
                if d >= limit {
                    break;
                }
                v.push(d);
                h *= self.grading;
            }
            v
        };
        let half = 0.5 * len;
        let left: Vec<f64> = if graded_a {
            graded_offsets(if graded_b { half } else { len })
        } else {
            Vec::new()
        };
        let right: Vec<f64> = if graded_b {
            graded_offsets(if graded_a { half } else { len })
        } else {
            Vec::new()
        };
        let inner_lo = left.last().copied().unwrap_or(0.0);
        let inner_hi = len - right.last().copied().unwrap_or(0.0);

        for d in &left {
            out.push(a + d);
        }
        let span = inner_hi - inner_lo;
        if span > 0.0 {
            let n = (span / self.max_spacing).ceil().max(1.0) as usize;
            let base = a + inner_lo;
            for k in 1..n {
                out.push(base + span * (k as f64) / (n as f64));
            }
        }
        for d in right.iter().rev() {
            out.push(b - d);
        }
        out.push(b);
    }
}
