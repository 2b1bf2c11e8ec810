//! Characteristics through the peakon-antipeakon collision and the flow map
//! they define at t = 2T. Starts between the crests are swept into the
//! collision point and leave it together.

use chlab::characteristics::{flow_map, trace, Side};
use chlab::exact::derive_params;
use chlab::solver::SolutionHandle;

fn main() -> chlab::Result<()> {
    let params = derive_params(2.0, (0.75f64).ln())?;
    let t_end = 2.0 * params.t_collision;
    let handle = SolutionHandle::exact_peakon_antipeakon(params, t_end)?;

    for start in [-1.0, -0.1, 0.0, 0.1, 1.0] {
        let ch = trace(&handle, start, 0.0, t_end, Side::Leftmost)?;
        let at_t = ch.position_at(params.t_collision)?;
        println!("start {start:5.2}: x(T) = {at_t:+.6}, x(2T) = {:+.6}", ch.end().x);
    }

    let starts: Vec<f64> = (0..=20).map(|k| -2.0 + 0.2 * k as f64).collect();
    let map = flow_map(&handle, &starts, t_end)?;
    println!("flow map at t = {t_end:.6} (monotone: {})", map.monotone);
    for (a, b) in map.starts.iter().zip(&map.ends) {
        println!("  {a:+.3} -> {b:+.6}");
    }
    Ok(())
}
