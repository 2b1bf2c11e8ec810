//! Nonlocal kernels `A(x, y)` of the generalized equation
//!
//! ```text
//! u_t + u u_x = ∫ A(x, y) [a u² + b u_x²] dy
//! ```
//!
//! for the Camassa-Holm (CH) and Hunter-Saxton (HS) instances, together with
//! the exact four-term splitting of the difference quotient
//! `K_t(y) = (A(η, y) - A(ζ, y)) / (η - ζ)` used by the slope ODE.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Which equation a kernel belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KernelId {
    CamassaHolm,
    HunterSaxton,
}

/// Coefficients and published constants of a kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kernel_id: KernelId,
    /// Weight of `u²` in the source density.
    pub a: f64,
    /// Weight of `u_x²` in the source density.
    pub b: f64,
    /// One-sided Lipschitz constant: `(A(x₂,y) - A(x₁,y)) / (x₂ - x₁) ≥ -L`.
    pub lipschitz: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl KernelSpec {
    pub const fn camassa_holm() -> Self {
        Self {
            kernel_id: KernelId::CamassaHolm,
            a: 1.0,
            b: 0.5,
            lipschitz: 1.0,
            c1: 1.0,
            c2: 2.0,
            c3: 1.0,
        }
    }

    pub const fn hunter_saxton() -> Self {
        Self {
            kernel_id: KernelId::HunterSaxton,
            a: 0.0,
            b: 0.5,
            lipschitz: 0.0,
            c1: 1.0,
            c2: 0.0,
            c3: 0.0,
        }
    }

    pub const fn for_id(id: KernelId) -> Self {
        match id {
            KernelId::CamassaHolm => Self::camassa_holm(),
            KernelId::HunterSaxton => Self::hunter_saxton(),
        }
    }

    /// Source density `a u² + b u_x²`.
    #[inline]
    pub fn density(&self, u: f64, ux: f64) -> f64 {
        self.a * u * u + self.b * ux * ux
    }
}

/// `sgn` with `sgn(0) = 0`.
#[inline]
pub(crate) fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Evaluates `A(x, y)`.
///
/// CH: `½ sgn(x - y) e^{-|x-y|}` (zero on the diagonal). HS: `1` iff `y ≤ x`.
pub fn eval_a(spec: &KernelSpec, x: f64, y: f64) -> f64 {
    match spec.kernel_id {
        KernelId::CamassaHolm => 0.5 * sgn(x - y) * (-(x - y).abs()).exp(),
        KernelId::HunterSaxton => {
            if y <= x {
                1.0
            } else {
                0.0
            }
        }
    }
}

/// The `η`-independent part `L(ζ, y)` of the splitting.
pub fn eval_l_smooth(spec: &KernelSpec, zeta: f64, y: f64) -> f64 {
    match spec.kernel_id {
        KernelId::CamassaHolm => -0.5 * (-(zeta - y).abs()).exp(),
        KernelId::HunterSaxton => 0.0,
    }
}

/// `K_t(y) = L(ζ, y) + L¹(y) + L²(y) + L³(y)` evaluated at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelDecomposition {
    pub l_term: f64,
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
}

impl KernelDecomposition {
    pub fn sum(&self) -> f64 {
        self.l_term + self.l1 + self.l2 + self.l3
    }

    /// Checks `L¹ = C₁/h · 1_[ζ,η]`, `|L²| ≤ C₂ 1_[ζ,η]`, `|L³| ≤ C₃ h`.
    ///
    /// Endpoints `y ∈ {ζ, η}` carry weight ½ (CH) or follow the half-open
    /// interval `(ζ, η]` (HS); the indicator check only constrains `L¹` from
    /// above there.
    pub fn satisfies_bounds(&self, spec: &KernelSpec, zeta: f64, eta: f64, y: f64, tol: f64) -> bool {
        let h = eta - zeta;
        let inside = zeta < y && y < eta;
        let on_closed = zeta <= y && y <= eta;
        let l1_ok = if inside {
            (self.l1 - spec.c1 / h).abs() <= tol * (1.0 + spec.c1 / h)
        } else if on_closed {
            self.l1.abs() <= spec.c1 / h * (1.0 + tol) + tol
        } else {
            self.l1.abs() <= tol
        };
        let ind = if on_closed { 1.0 } else { 0.0 };
        let l2_ok = self.l2.abs() <= spec.c2 * ind + tol;
        let l3_ok = self.l3.abs() <= spec.c3 * h + tol;
        l1_ok && l2_ok && l3_ok
    }
}

/// Raw difference quotient `(A(η, y) - A(ζ, y)) / (η - ζ)`.
pub fn difference_quotient(spec: &KernelSpec, zeta: f64, eta: f64, y: f64) -> f64 {
    (eval_a(spec, eta, y) - eval_a(spec, zeta, y)) / (eta - zeta)
}

/// Splits `K_t(y)` for `η > ζ` into the smooth part and the three remainders.
///
/// For CH the remainders are `L¹ = K¹¹`, `L² = K¹² - K²²`, `L³ = -K²¹`,
/// where the `s`-integrals inside `K²¹`, `K²²` are taken in closed form.
pub fn decompose_k(spec: &KernelSpec, zeta: f64, eta: f64, y: f64) -> Result<KernelDecomposition> {
    if !(eta > zeta) || !zeta.is_finite() || !eta.is_finite() {
        return Err(invalid(
            "decompose_k",
            format!("need eta > zeta, got zeta={zeta}, eta={eta}"),
        ));
    }
    let h = eta - zeta;
    match spec.kernel_id {
        KernelId::HunterSaxton => {
            let k = if zeta < y && y <= eta { 1.0 / h } else { 0.0 };
            Ok(KernelDecomposition {
                l_term: 0.0,
                l1: spec.c1 * k,
                l2: 0.0,
                l3: 0.0,
            })
        }
        KernelId::CamassaHolm => {
            let dz = (zeta - y).abs();
            let de = (eta - y).abs();
            let ez = (-dz).exp();
            let sz = sgn(zeta - y);
            // ½(sgn(η-y) - sgn(ζ-y)): 1 inside, ½ at the endpoints, 0 outside.
            let ind = 0.5 * (sgn(eta - y) - sz);
            let k11 = ind / h;
            let k12 = ind / h * (-de).exp_m1();
            // e^{-|η-y|} - e^{-|ζ-y|} without cancellation for nearby points.
            let ee_minus_ez = ez * (dz - de).exp_m1();
            // ∫_ζ^η sgn(s-y) ds = |η-y| - |ζ-y|
            let int_sgn = de - dz;
            let k21 = 0.5 / h * sz * (-ee_minus_ez - ez * int_sgn);
            let k22 = 0.5 / h * ez * (sz * int_sgn - h);
            Ok(KernelDecomposition {
                l_term: eval_l_smooth(spec, zeta, y),
                l1: spec.c1 * k11,
                l2: k12 - k22,
                l3: -k21,
            })
        }
    }
}

/// Outcome of a randomized one-sided Lipschitz probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    pub min_quotient: f64,
    pub samples: usize,
    pub pass: bool,
}

pub const LIPSCHITZ_TOL: f64 = 1e-10;

/// Minimum of `(A(x₂,y) - A(x₁,y)) / (x₂ - x₁)` over random `x₁ < x₂`, `y`.
///
/// A quarter of the probes use gaps down to `1e-12` with `y` placed next to
/// the pair, where the CH quotient is most negative.
pub fn verify_one_sided_lipschitz(spec: &KernelSpec, samples: usize, seed: u64) -> Result<LipschitzReport> {
    if samples == 0 {
        return Err(invalid("verify_one_sided_lipschitz", "samples must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut min_q = f64::INFINITY;
    for i in 0..samples {
        let x1: f64 = rng.random_range(-5.0..5.0);
        let (gap, y) = if i % 4 == 3 {
            let gap = 10f64.powf(rng.random_range(-12.0..-3.0));
            (
                gap,
                x1 + rng.random_range(-2.0..2.0) * gap + rng.random_range(-1e-3..1e-3),
            )
        } else {
            (10f64.powf(rng.random_range(-6.0..0.7)), rng.random_range(-6.0..6.0))
        };
        let x2 = x1 + gap;
        let q = difference_quotient(spec, x1, x2, y);
        if q.is_finite() {
            min_q = min_q.min(q);
        } else {
            return Err(invalid(
                "verify_one_sided_lipschitz",
                format!("non-finite quotient at x1={x1}, x2={x2}, y={y}"),
            ));
        }
    }
    Ok(LipschitzReport {
        min_quotient: min_q,
        samples,
        pass: min_q >= -spec.lipschitz - LIPSCHITZ_TOL,
    })
}

/// Outcome of a randomized check of [`decompose_k`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub samples: usize,
    /// Largest `|K_t(y) - (L + L¹ + L² + L³)|`.
    pub max_reconstruction_error: f64,
    pub bound_violations: usize,
    pub pass: bool,
}

/// Absolute reconstruction tolerance used by [`verify_decomposition`].
pub const RECONSTRUCTION_TOL: f64 = 1e-12;

/// Decomposes `K_t(y)` at random triples `ζ < η`, `y` and checks the
/// reconstruction and the bounds on `L¹`, `L²`, `L³`.
pub fn verify_decomposition(spec: &KernelSpec, samples: usize, seed: u64) -> Result<DecompositionReport> {
    if samples == 0 {
        return Err(invalid("verify_decomposition", "samples must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_err: f64 = 0.0;
    let mut violations = 0;
    for i in 0..samples {
        let zeta: f64 = rng.random_range(-5.0..5.0);
        let h = 10f64.powf(rng.random_range(-3.0..0.7));
        let eta = zeta + h;
        let y = if i % 3 == 0 {
            rng.random_range(zeta..eta)
        } else {
            rng.random_range(-6.0..6.0)
        };
        let d = decompose_k(spec, zeta, eta, y)?;
        max_err = max_err.max((d.sum() - difference_quotient(spec, zeta, eta, y)).abs());
        if !d.satisfies_bounds(spec, zeta, eta, y, 1e-12) {
            violations += 1;
        }
    }
    Ok(DecompositionReport {
        samples,
        max_reconstruction_error: max_err,
        bound_violations: violations,
        pass: max_err <= RECONSTRUCTION_TOL && violations == 0,
    })
}
