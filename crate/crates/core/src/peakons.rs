//! Multipeakon sums `u(x) = Σ p_j e^{-|x - q_j|}` with closed-form
//! evaluation of `u`, one-sided slopes, energies and the pressure `P`.
//!
//! Between consecutive crests `u = A e^{x} + B e^{-x}`, so
//! `u² + ½u_x² = 3/2 A² e^{2x} + 3/2 B² e^{-2x} + AB` and every piece of
//! `½ e^{-|x|} * (u² + ½u_x²)` integrates in closed form.

use serde::{Deserialize, Serialize};

use crate::error::invalid;
use crate::mesh::MeshSpec;
use crate::profile::{EnergySplit, Pressure, WaveProfile};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakonSum {
    positions: Vec<f64>,
    momenta: Vec<f64>,
}

impl PeakonSum {
    /// Builds the sum; entries are kept sorted by position.
    pub fn new(positions: &[f64], momenta: &[f64]) -> Self {
        assert_eq!(positions.len(), momenta.len(), "positions/momenta length mismatch");
        let mut idx: Vec<usize> = (0..positions.len()).collect();
        idx.sort_by(|&i, &j| positions[i].total_cmp(&positions[j]));
        Self {
            positions: idx.iter().map(|&i| positions[i]).collect(),
            momenta: idx.iter().map(|&i| momenta[i]).collect(),
        }
    }

    pub fn empty() -> Self {
        Self {
            positions: Vec::new(),
            momenta: Vec::new(),
        }
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn momenta(&self) -> &[f64] {
        &self.momenta
    }

    pub fn is_zero(&self) -> bool {
        self.momenta.iter().all(|&p| p == 0.0)
    }

    pub fn negated(&self) -> Self {
        Self {
            positions: self.positions.clone(),
            momenta: self.momenta.iter().map(|p| -p).collect(),
        }
    }

    pub fn u(&self, x: f64) -> f64 {
        self.positions
            .iter()
            .zip(&self.momenta)
            .map(|(q, p)| p * (-(x - q).abs()).exp())
            .sum()
    }

    /// `(u_x(x⁻), u_x(x⁺))`.
    pub fn slopes(&self, x: f64) -> (f64, f64) {
        let mut left = 0.0;
        let mut right = 0.0;
        for (q, p) in self.positions.iter().zip(&self.momenta) {
            let e = p * (-(x - q).abs()).exp();
            if x > *q {
                left -= e;
                right -= e;
            } else if x < *q {
                left += e;
                right += e;
            } else {
                left += e;
                right -= e;
            }
        }
        (left, right)
    }

    /// Upper bound on `|u|` used to size tails: `Σ |p_j|`.
    pub fn amplitude(&self) -> f64 {
        self.momenta.iter().map(|p| p.abs()).sum()
    }

    pub fn sup_abs(&self) -> f64 {
        // the sup of |u| is attained at a crest
        self.positions.iter().map(|&q| self.u(q).abs()).fold(0.0, f64::max)
    }

    /// `(∫u², ∫u_x²)` over ℝ.
    ///
    /// Integrated interval by interval; the double-sum form
    /// `Σ p_i p_j (1 ± |q_i - q_j|) e^{-|q_i - q_j|}` cancels badly for close
    /// peakon-antipeakon pairs.
    pub fn energies(&self) -> (f64, f64) {
        let e = self.energy_split(f64::NEG_INFINITY, f64::INFINITY).unwrap_or_default();
        (e.e_u, e.e_plus + e.e_minus)
    }

    /// The conserved Hamiltonian `½ Σ p_i p_j e^{-|q_i - q_j|}`.
    pub fn hamiltonian(&self) -> f64 {
        let mut h = 0.0;
        for (qi, pi) in self.positions.iter().zip(&self.momenta) {
            for (qj, pj) in self.positions.iter().zip(&self.momenta) {
                h += pi * pj * (-(qi - qj).abs()).exp();
            }
        }
        0.5 * h
    }

    /// `(A e^{x}, B e^{-x})` restricted to the crests right/left of interval `k`,
    /// evaluated at `x`.
    fn rising_falling(&self, k: usize, x: f64) -> (f64, f64) {
        let rising = self.positions[k..]
            .iter()
            .zip(&self.momenta[k..])
            .map(|(q, p)| p * (x - q).exp())
            .sum();
        let falling = self.positions[..k]
            .iter()
            .zip(&self.momenta[..k])
            .map(|(q, p)| p * (q - x).exp())
            .sum();
        (rising, falling)
    }

    /// `(∫_{y<x} e^{-(x-y)} f, ∫_{y>x} e^{-(y-x)} f)` with `f = u² + ½u_x²`.
    pub fn exp_moments(&self, x: f64) -> (f64, f64) {
        let n = self.positions.len();
        if n == 0 {
            return (0.0, 0.0);
        }
        let mut left = 0.0;
        let mut right = 0.0;
        // interval k spans (z_{k-1}, z_k) with z_{-1} = -inf, z_n = +inf
        for k in 0..=n {
            let c = if k == 0 {
                f64::NEG_INFINITY
            } else {
                self.positions[k - 1]
            };
            let d = if k == n { f64::INFINITY } else { self.positions[k] };
            if c < x {
                let dd = d.min(x);
                left += self.piece_left(k, c, dd, x);
            }
            if d > x {
                let cc = c.max(x);
                right += self.piece_right(k, cc, d, x);
            }
        }
        (left, right)
    }

    /// `∫_c^d e^{y-x} f(y) dy` on interval `k`, `d ≤ x`.
    fn piece_left(&self, k: usize, c: f64, d: f64, x: f64) -> f64 {
        if !(d > c) {
            return 0.0;
        }
        let w = d - c;
        let n = self.positions.len();
        let a_d = if k < n { self.rising_falling(k, d).0 } else { 0.0 };
        let b_c = if k > 0 { self.rising_falling(k, c).1 } else { 0.0 };
        let edx = (d - x).exp();
        let mut s = 0.0;
        if a_d != 0.0 {
            s += 0.5 * a_d * a_d * edx * -(-3.0 * w).exp_m1();
        }
        if b_c != 0.0 {
            s += 1.5 * b_c * b_c * (c - x).exp() * -(-w).exp_m1();
            if a_d != 0.0 {
                s += a_d * b_c * (-w).exp() * edx * -(-w).exp_m1();
            }
        }
        s
    }

    /// `∫_c^d e^{x-y} f(y) dy` on interval `k`, `c ≥ x`.
    fn piece_right(&self, k: usize, c: f64, d: f64, x: f64) -> f64 {
        if !(d > c) {
            return 0.0;
        }
        let w = d - c;
        let n = self.positions.len();
        let a_d = if k < n { self.rising_falling(k, d).0 } else { 0.0 };
        let b_c = if k > 0 { self.rising_falling(k, c).1 } else { 0.0 };
        let exc = (x - c).exp();
        let mut s = 0.0;
        if b_c != 0.0 {
            s += 0.5 * b_c * b_c * exc * -(-3.0 * w).exp_m1();
        }
        if a_d != 0.0 {
            s += 1.5 * a_d * a_d * (x - d).exp() * -(-w).exp_m1();
            if b_c != 0.0 {
                s += a_d * b_c * (-w).exp() * exc * -(-w).exp_m1();
            }
        }
        s
    }

    /// Exact `∫(u_x^±)²` and `∫u²` over `[alpha, beta]` (infinite ends allowed).
    ///
    /// On each interval between crests `u_x = a - b` with `a` rising and `b`
    /// falling, so `u_x` changes sign at most once there and every piece
    /// integrates in closed form.
    pub fn energy_split(&self, alpha: f64, beta: f64) -> Result<EnergySplit> {
        if !(alpha <= beta) {
            return Err(invalid("energy_split", format!("window [{alpha}, {beta}] is inverted")));
        }
        let mut out = EnergySplit::default();
        let n = self.positions.len();
        if n == 0 || alpha == beta {
            return Ok(out);
        }
        for k in 0..=n {
            let lo = if k == 0 {
                f64::NEG_INFINITY
            } else {
                self.positions[k - 1]
            };
            let hi = if k == n { f64::INFINITY } else { self.positions[k] };
            let c = lo.max(alpha);
            let d = hi.min(beta);
            if !(d > c) {
                continue;
            }
            // u_x = a - b vanishes where a(x) = b(x)
            let mut cuts = vec![c, d];
            if c.is_finite() && d.is_finite() {
                let (a_d, b_d) = self.rising_falling(k, d);
                let ratio = b_d / a_d;
                if ratio > 0.0 && ratio.is_finite() {
                    let root = d + 0.5 * ratio.ln();
                    if root > c && root < d {
                        cuts.insert(1, root);
                    }
                }
            }
            for w in cuts.windows(2) {
                let (eu, ex, sign) = self.piece_energy(k, w[0], w[1]);
                out.e_u += eu;
                if sign >= 0.0 {
                    out.e_plus += ex;
                } else {
                    out.e_minus += ex;
                }
            }
        }
        Ok(out)
    }

    /// `(∫u², ∫u_x², sign of u_x)` on `[c, d]` inside interval `k`.
    fn piece_energy(&self, k: usize, c: f64, d: f64) -> (f64, f64, f64) {
        let n = self.positions.len();
        let w = d - c;
        let a_d = if k < n { self.rising_falling(k, d).0 } else { 0.0 };
        let b_c = if k > 0 { self.rising_falling(k, c).1 } else { 0.0 };
        let g = -(-2.0 * w).exp_m1() * 0.5;
        let aa = a_d * a_d * g;
        let bb = b_c * b_c * g;
        let ab = if a_d != 0.0 && b_c != 0.0 {
            a_d * b_c * (-w).exp() * w
        } else {
            0.0
        };
        let eu = (aa + bb + 2.0 * ab).max(0.0);
        let ex = (aa + bb - 2.0 * ab).max(0.0);
        let mid = if c.is_finite() && d.is_finite() {
            0.5 * (c + d)
        } else if c.is_finite() {
            c + 1.0
        } else if d.is_finite() {
            d - 1.0
        } else {
            0.0
        };
        let (l, r) = self.slopes(mid);
        (eu, ex, 0.5 * (l + r))
    }

    pub fn pressure(&self, x: f64) -> Pressure {
        let (l, r) = self.exp_moments(x);
        Pressure {
            p: 0.5 * (l + r),
            p_x: 0.5 * (r - l),
        }
    }

    /// Samples the sum on a graded mesh with every crest as a node.
    pub fn to_profile(&self, mesh: &MeshSpec, t: f64) -> Result<WaveProfile> {
        let nodes = mesh.nodes(&self.positions, self.amplitude());
        WaveProfile::from_fn(nodes, t, |x| self.u(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad_pressure(ps: &PeakonSum, x: f64) -> f64 {
        // composite Simpson on [-40, 40] split at crests and x
        let mut cuts: Vec<f64> = ps.positions().to_vec();
        cuts.push(x);
        cuts.push(-40.0);
        cuts.push(40.0);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let f = |y: f64| {
            let u = ps.u(y);
            let (l, r) = ps.slopes(y);
            let ux = 0.5 * (l + r);
            0.5 * (-(x - y).abs()).exp() * (u * u + 0.5 * ux * ux)
        };
        let mut total = 0.0;
        for w in cuts.windows(2) {
            let n = 4000;
            let h = (w[1] - w[0]) / n as f64;
            let mut s = f(w[0] + 1e-15) + f(w[1] - 1e-15);
            for i in 1..n {
                let y = w[0] + i as f64 * h;
                s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(y);
            }
            total += s * h / 3.0;
        }
        total
    }

    #[test]
    fn single_peakon_pressure() {
        let ps = PeakonSum::new(&[0.0], &[1.3]);
        assert!((ps.pressure(0.0).p - 1.3 * 1.3 / 2.0).abs() < 1e-14);
        assert!(ps.pressure(0.0).p_x.abs() < 1e-15);
    }

    #[test]
    fn pressure_matches_quadrature() {
        let ps = PeakonSum::new(&[-1.0, 0.2, 0.7], &[1.0, -0.6, 0.4]);
        for &x in &[-3.0, -1.0, -0.3, 0.2, 0.5, 2.5] {
            let exact = ps.pressure(x).p;
            let quad = quad_pressure(&ps, x);
            assert!(
                (exact - quad).abs() < 1e-9 * (1.0 + exact.abs()),
                "x={x}: {exact} vs {quad}"
            );
        }
    }

    #[test]
    fn pressure_derivative_matches_difference() {
        let ps = PeakonSum::new(&[-0.4, 0.9], &[0.8, -1.1]);
        for &x in &[-2.0, 0.1, 1.7] {
            let h = 1e-5;
            let fd = (ps.pressure(x + h).p - ps.pressure(x - h).p) / (2.0 * h);
            assert!((fd - ps.pressure(x).p_x).abs() < 1e-8);
        }
    }

    #[test]
    fn energies_match_h1_identity() {
        let ps = PeakonSum::new(&[-0.4, 0.9], &[0.8, -1.1]);
        let (eu, ex) = ps.energies();
        assert!((eu + ex - 4.0 * ps.hamiltonian()).abs() < 1e-14);
        // double-sum oracle
        let (mut su, mut sx) = (0.0, 0.0);
        for (qi, pi) in ps.positions().iter().zip(ps.momenta()) {
            for (qj, pj) in ps.positions().iter().zip(ps.momenta()) {
                let d = (qi - qj).abs();
                su += pi * pj * (1.0 + d) * (-d).exp();
                sx += pi * pj * (1.0 - d) * (-d).exp();
            }
        }
        assert!((eu - su).abs() < 1e-14 && (ex - sx).abs() < 1e-14);
        // linear interpolation carries a relative energy error of about h²/6
        let prof = ps.to_profile(&MeshSpec::default().refined(4.0), 0.0).unwrap();
        let e = prof.total_energy();
        assert!((e.e_u - eu).abs() < 2e-6 * eu, "{} vs {eu}", e.e_u);
        assert!(
            (e.e_plus + e.e_minus - ex).abs() < 2e-6 * ex,
            "{} vs {ex}",
            e.e_plus + e.e_minus
        );
    }

    #[test]
    fn crest_slopes_jump_by_twice_momentum() {
        let ps = PeakonSum::new(&[0.0, 2.0], &[1.5, 0.5]);
        let (l, r) = ps.slopes(0.0);
        assert!((l - r - 3.0).abs() < 1e-15);
    }

    #[test]
    fn window_split_matches_totals_and_mesh() {
        let ps = PeakonSum::new(&[-0.4, 0.9, 1.3], &[0.8, -1.1, 0.5]);
        let all = ps.energy_split(f64::NEG_INFINITY, f64::INFINITY).unwrap();
        let (eu, ex) = ps.energies();
        assert!((all.e_u - eu).abs() < 1e-13);
        assert!((all.e_plus + all.e_minus - ex).abs() < 1e-13);
        let prof = ps.to_profile(&MeshSpec::default().refined(4.0), 0.0).unwrap();
        for &(a, b) in &[(-1.0, 0.5), (0.0, 1.1), (0.95, 3.0)] {
            let e = ps.energy_split(a, b).unwrap();
            let m = prof.energy_split(a, b).unwrap();
            assert!((e.e_plus - m.e_plus).abs() < 1e-5, "{a},{b}: {e:?} {m:?}");
            assert!((e.e_minus - m.e_minus).abs() < 1e-5, "{a},{b}: {e:?} {m:?}");
            assert!((e.e_u - m.e_u).abs() < 1e-5);
        }
        let left = ps.energy_split(-1.0, 0.2).unwrap();
        let right = ps.energy_split(0.2, 2.0).unwrap();
        let both = ps.energy_split(-1.0, 2.0).unwrap();
        assert!((left.e_minus + right.e_minus - both.e_minus).abs() < 1e-14);
        assert!(ps.energy_split(1.0, 0.0).is_err());
    }
}
