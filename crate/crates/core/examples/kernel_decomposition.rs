//! Splits the CH and HS kernels at a few points and runs the randomized
//! one-sided Lipschitz and decomposition checks.

use chlab::kernel::{decompose_k, verify_decomposition, verify_one_sided_lipschitz};
use chlab::KernelSpec;

fn main() -> chlab::Result<()> {
    for spec in [KernelSpec::camassa_holm(), KernelSpec::hunter_saxton()] {
        println!(
            "{:?}: a = {}, b = {}, L = {}",
            spec.kernel_id, spec.a, spec.b, spec.lipschitz
        );
        for (zeta, eta, y) in [(-1.0, 0.5, 0.0), (0.0, 0.1, 0.05), (-2.0, 3.0, 4.0)] {
            let d = decompose_k(&spec, zeta, eta, y)?;
            println!(
                "  zeta={zeta:5.2} eta={eta:5.2} y={y:5.2}  L={:+.6} L1={:+.6} L2={:+.6} L3={:+.6}  sum={:+.6}",
                d.l_term,
                d.l1,
                d.l2,
                d.l3,
                d.sum()
            );
        }
        let lip = verify_one_sided_lipschitz(&spec, 10_000, 1)?;
        let dec = verify_decomposition(&spec, 10_000, 1)?;
        println!(
            "  min difference quotient {:.6} (pass: {}), reconstruction error {:.1e}, bound violations {}",
            lip.min_quotient, lip.pass, dec.max_reconstruction_error, dec.bound_violations
        );
    }
    Ok(())
}
