//! The slope `v = u_x` carried along a characteristic of a two-peakon
//! overtaking solution, and the identity relating `v²` to the change of the
//! flow map.

use chlab::characteristics::{trace, v2mprime_check, v_along, Side};
use chlab::solver::{MultipeakonState, SolutionHandle, SolverOptions};

fn main() -> chlab::Result<()> {
    let initial = MultipeakonState::new(vec![-4.0, 0.0], vec![2.0, 1.0], 0.0)?;
    let handle = SolutionHandle::multipeakon(&initial, 6.0, &SolverOptions::default())?;

    let ch = trace(&handle, -2.0, 0.0, 6.0, Side::Plain)?;
    let with_v = v_along(&handle, &ch)?;
    println!("{:>6} {:>10} {:>10} {:>10} {:>10}", "t", "x", "u", "v (ODE)", "u_x");
    for s in with_v.samples.iter().step_by(with_v.samples.len() / 12) {
        let (left, right) = handle.snapshot(s.t)?.slopes(s.x);
        println!(
            "{:6.3} {:10.6} {:10.6} {:10.6} {:10.6}",
            s.t,
            s.x,
            s.u,
            s.v.unwrap_or(f64::NAN),
            0.5 * (left + right)
        );
    }

    for t in [1.0, 3.0, 5.0] {
        let r = v2mprime_check(&handle, &ch, t)?;
        println!(
            "t = {t}: v^2 M' = {:.8}, expected {:.8}, relative error {:.1e}",
            r.lhs, r.rhs, r.rel_err
        );
    }
    Ok(())
}
