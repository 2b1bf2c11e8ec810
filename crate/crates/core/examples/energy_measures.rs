//! Energy bookkeeping for the peakon-antipeakon pair: the window ledger
//! between two characteristics, the atoms of the slope-energy measures at the
//! collision, and the total variation of the time-binned measure.

use chlab::characteristics::uniform_times;
use chlab::exact::derive_params;
use chlab::measures::{mu_atoms, nu_measure, window_ledger, LimitOptions, Sign, TestFunction};
use chlab::solver::SolutionHandle;

fn main() -> chlab::Result<()> {
    let params = derive_params(2.0, (0.75f64).ln())?;
    let tc = params.t_collision;
    let handle = SolutionHandle::exact_peakon_antipeakon(params, 2.0 * tc)?;

    let times = uniform_times(0.0, 2.0 * tc, 9);
    let ledger = window_ledger(&handle, -0.5, 0.5, &times)?;
    println!(
        "{:>8} {:>10} {:>10} {:>10} {:>10} {:>10}",
        "t", "alpha", "beta", "E+", "E-", "Eu"
    );
    for k in 0..ledger.times.len() {
        println!(
            "{:8.4} {:10.5} {:10.5} {:10.5} {:10.5} {:10.5}",
            ledger.times[k], ledger.alpha[k], ledger.beta[k], ledger.e_plus[k], ledger.e_minus[k], ledger.e_u[k]
        );
    }

    let phi = TestFunction::indicator(-1.0, 1.0)?;
    let (plus, minus) = mu_atoms(&handle, &phi, &[0.5 * tc, tc, 1.5 * tc], &LimitOptions::default())?;
    for a in &plus.atoms {
        println!("mu+ atom at t = {:.6}: {:+.6}", a.t, a.mass);
    }
    for a in &minus.atoms {
        println!("mu- atom at t = {:.6}: {:+.6}", a.t, a.mass);
    }

    let grid = uniform_times(0.0, 2.0 * tc, 201);
    for sign in [Sign::Plus, Sign::Minus] {
        let nu = nu_measure(&handle, &phi, sign, &grid)?;
        println!("total variation of nu{sign:?} over [0, 2T]: {:.6}", nu.total_variation);
    }
    Ok(())
}
