//! Closed-form solutions: the peakon-antipeakon pair with its conservative
//! prolongation through the collision, travelling single peakons, and time
//! reversal of sampled trajectories.
//!
//! The pair is `u = p₁ e^{-|x-q₁|} - p₁ e^{-|x+q₁|}` with `p₁ = p/2`,
//! `q₁ = q/2`. Writing `τ = T - t`, the momentum and separation are
//! `p = H₀ coth(H₀τ/2)` and `q = -2 ln cosh(H₀τ/2)`, which stay accurate
//! right up to the collision.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mesh::MeshSpec;
use crate::peakons::PeakonSum;
use crate::profile::WaveProfile;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakonAntipeakonParams {
    pub p0: f64,
    pub q0: f64,
    pub h0: f64,
    pub t_collision: f64,
}

/// Computes `H₀` and the collision time `T` from `p(0) > 0`, `q(0) < 0`.
pub fn derive_params(p0: f64, q0: f64) -> Result<PeakonAntipeakonParams> {
    if !(p0 > 0.0) || !p0.is_finite() {
        return Err(invalid("derive_params", format!("need p0 > 0, got {p0}")));
    }
    if !(q0 < 0.0) {
        return Err(invalid(
            "derive_params",
            format!("need q0 < 0 so that H0^2 > 0, got {q0}"),
        ));
    }
    // r = H₀/p₀ = sqrt(1 - e^{q₀}); log((p₀+H₀)/(p₀-H₀)) = 2 atanh(r)
    let r = (-q0.exp_m1()).sqrt();
    let h0 = p0 * r;
    let t_collision = 2.0 * r.atanh() / h0;
    Ok(PeakonAntipeakonParams {
        p0,
        q0,
        h0,
        t_collision,
    })
}

/// `ln cosh z` without overflow.
fn ln_cosh(z: f64) -> f64 {
    let a = z.abs();
    if a < 20.0 {
        0.5 * a.sinh().powi(2).ln_1p()
    } else {
        a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
    }
}

impl PeakonAntipeakonParams {
    /// `(p(t), q(t))` on the pre-collision branch; valid for every `t < T`.
    pub fn state_at(&self, t: f64) -> (f64, f64) {
        let z = 0.5 * self.h0 * (self.t_collision - t);
        (self.h0 / z.tanh(), -2.0 * ln_cosh(z))
    }

    /// The pair as a peakon sum at time `t`, including the prolongation
    /// `u(t) = -u(2T - t)` for `t > T`; empty at `t = T`.
    pub fn peakon_sum_at(&self, t: f64) -> PeakonSum {
        let tc = self.t_collision;
        if t == tc {
            return PeakonSum::empty();
        }
        let (s, sign) = if t < tc { (t, 1.0) } else { (2.0 * tc - t, -1.0) };
        let (p, q) = self.state_at(s);
        if q == 0.0 {
            return PeakonSum::empty();
        }
        PeakonSum::new(&[0.5 * q, -0.5 * q], &[sign * 0.5 * p, -sign * 0.5 * p])
    }

    /// `u(0, q(0)/2) = p₁(0)(1 - e^{q(0)})`.
    pub fn crest_value(&self) -> f64 {
        -0.5 * self.p0 * self.q0.exp_m1()
    }

    /// `½∫(u² + u_x²)`, conserved for all `t ≠ T`.
    pub fn half_h1_energy(&self) -> f64 {
        0.5 * self.h0 * self.h0
    }

    /// Limit of `∫(u_x^∓)²` as `t → T^∓`: all of `∫(u² + u_x²) = H₀²`.
    pub fn concentrated_slope_energy(&self) -> f64 {
        self.h0 * self.h0
    }
}

/// Samples the pair at time `t`; crests are mesh nodes and at `t = T` the
/// profile is identically zero.
pub fn profile_at(params: &PeakonAntipeakonParams, t: f64, mesh: &MeshSpec) -> Result<WaveProfile> {
    params.peakon_sum_at(t).to_profile(mesh, t)
}

/// `u = c e^{-|x - ct|}`.
pub fn single_peakon(c: f64, t: f64, mesh: &MeshSpec) -> Result<WaveProfile> {
    PeakonSum::new(&[c * t], &[c]).to_profile(mesh, t)
}

/// Profiles of `-u(T - t, ·)` for every input profile stamped in `[0, T]`,
/// in increasing order of the new time.
pub fn time_reverse(trajectory: &[WaveProfile], t_rev: f64) -> Result<Vec<WaveProfile>> {
    let first = trajectory.first().map(|p| p.time_stamp());
    let last = trajectory.last().map(|p| p.time_stamp());
    match (first, last) {
        (Some(a), Some(b)) if a <= 0.0 && t_rev >= 0.0 && t_rev <= b => {}
        _ => {
            return Err(Error::OutOfSpan {
                t: t_rev,
                start: first.unwrap_or(f64::NAN),
                end: last.unwrap_or(f64::NAN),
            })
        }
    }
    Ok(trajectory
        .iter()
        .rev()
        .filter(|p| p.time_stamp() <= t_rev)
        .map(|p| p.negated().with_time(t_rev - p.time_stamp()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw_closed_form(par: &PeakonAntipeakonParams, t: f64) -> (f64, f64) {
        let (p0, h) = (par.p0, par.h0);
        let e = (h * t).exp();
        let p = h * ((p0 + h) + (p0 - h) * e) / ((p0 + h) - (p0 - h) * e);
        let num = (p0 + h) * (-h * t / 2.0).exp() + (p0 - h) * (h * t / 2.0).exp();
        let q = par.q0 - 2.0 * (num / (2.0 * p0)).ln();
        (p, q)
    }

    fn normalized() -> PeakonAntipeakonParams {
        derive_params(2.0, (0.75f64).ln()).unwrap()
    }

    #[test]
    fn normalized_parameters() {
        let par = normalized();
        assert!((par.h0 - 1.0).abs() < 1e-15);
        assert!((par.t_collision - 3f64.ln()).abs() < 1e-15);
        assert!((par.crest_value() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(derive_params(1.0, 1.0).is_err());
        assert!(derive_params(1.0, 0.0).is_err());
        assert!(derive_params(0.0, -1.0).is_err());
    }

    #[test]
    fn small_separation_limit() {
        // H₀ → 0 and T → 2/p₀ as q₀ → 0⁻
        let par = derive_params(1.0, -1e-12).unwrap();
        assert!(par.h0 < 1e-5);
        assert!((par.t_collision - 2.0).abs() < 1e-9);
    }

    #[test]
    fn stable_form_matches_published_form() {
        let par = normalized();
        for k in 0..10 {
            let t = par.t_collision * k as f64 / 10.0;
            let (p, q) = par.state_at(t);
            let (pp, qq) = raw_closed_form(&par, t);
            assert!((p - pp).abs() < 1e-12 * pp.abs(), "p at {t}");
            assert!((q - qq).abs() < 1e-12, "q at {t}");
        }
        let (p0, q0) = par.state_at(0.0);
        assert!((p0 - 2.0).abs() < 1e-14 && (q0 - par.q0).abs() < 1e-14);
    }

    #[test]
    fn published_denominator_vanishes_at_collision() {
        let par = normalized();
        let t = par.t_collision * (1.0 - 1e-9);
        let den = (par.p0 + par.h0) - (par.p0 - par.h0) * (par.h0 * t).exp();
        assert!(den.abs() < 1e-8);
        assert!(par.state_at(t).0 > 1e8);
    }

    #[test]
    fn profile_examples() {
        let par = normalized();
        let mesh = MeshSpec::default();
        let u0 = profile_at(&par, 0.0, &mesh).unwrap();
        assert!((u0.eval(0.5 * par.q0) - par.crest_value()).abs() < 1e-15);
        let ut = profile_at(&par, par.t_collision, &mesh).unwrap();
        assert_eq!(ut.sup_abs(), 0.0);
        let ps = par.peakon_sum_at(0.3);
        for &x in &[0.1, 0.7, 2.0] {
            assert_eq!(ps.u(-x), -ps.u(x));
        }
    }

    #[test]
    fn energy_conserved_through_collision() {
        let par = normalized();
        for &t in &[0.0, 0.5, 1.0, 1.0986, 1.1, 1.5, 2.0] {
            let (eu, ex) = par.peakon_sum_at(t).energies();
            if t != par.t_collision {
                assert!((0.5 * (eu + ex) - par.half_h1_energy()).abs() < 1e-12, "t={t}");
            }
        }
    }

    #[test]
    fn prolongation_mirrors() {
        let par = normalized();
        let t = par.t_collision + 0.2;
        let a = par.peakon_sum_at(t);
        let b = par.peakon_sum_at(par.t_collision - 0.2);
        for &x in &[-0.3, 0.05, 1.0] {
            assert_eq!(a.u(x), -b.u(x));
        }
    }

    #[test]
    fn single_peakon_translates() {
        let m = MeshSpec::default();
        let p = single_peakon(1.0, 2.0, &m).unwrap();
        assert_eq!(p.eval(2.0), 1.0);
        let e = single_peakon(1.0, 0.0, &m.refined(4.0)).unwrap().total_energy();
        assert!((e.half_h1() - 1.0).abs() < 1e-5);
    }

    #[test]
    fn reversal_is_an_involution() {
        let par = normalized();
        let m = MeshSpec::default();
        let traj: Vec<WaveProfile> = (0..=4)
            .map(|k| profile_at(&par, 0.25 * k as f64, &m).unwrap())
            .collect();
        let back = time_reverse(&time_reverse(&traj, 1.0).unwrap(), 1.0).unwrap();
        assert_eq!(back, traj);
        assert!(time_reverse(&traj, 1.5).is_err());
    }
}
