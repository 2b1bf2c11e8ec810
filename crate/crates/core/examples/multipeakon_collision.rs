//! Three peakons where a peakon-antipeakon pair collides in the middle of the
//! run. Prints the collision window and checks that energy and momentum come
//! back after it.

use chlab::solver::{MultipeakonState, MultipeakonTrajectory, SolverOptions};

fn main() -> chlab::Result<()> {
    let initial = MultipeakonState::new(vec![-3.0, -0.5, 0.5], vec![1.5, 1.0, -1.0], 0.0)?;
    let traj = MultipeakonTrajectory::integrate(&initial, 3.0, &SolverOptions::default())?;
    for w in traj.collisions() {
        println!(
            "peakons {} and {} collide at t = {:.12} (window [{:.6e}, {:.6e}] around it, H = {:.6})",
            w.i,
            w.j,
            w.t_c,
            w.t_a - w.t_c,
            w.t_b - w.t_c,
            w.h
        );
    }
    let h0 = initial.hamiltonian();
    let m0 = initial.total_momentum();
    println!("{:>6} {:>14} {:>14} {:>14}", "t", "energy", "rel. drift", "momentum");
    for k in 0..=12 {
        let t = 0.25 * k as f64;
        let s = traj.state_at(t)?;
        let h = s.hamiltonian();
        println!(
            "{t:6.2} {h:14.10} {:14.2e} {:14.10}",
            (h - h0).abs() / h0,
            s.total_momentum()
        );
    }
    println!("initial momentum {m0:.10}");
    Ok(())
}
