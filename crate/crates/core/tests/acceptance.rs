//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit when
//! any criterion fails.

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use chlab::characteristics::{self, Side, V2MOptions};
use chlab::config::ScenarioConfig;
use chlab::exact::{derive_params, PeakonAntipeakonParams};
use chlab::kernel::{self, KernelSpec};
use chlab::measures::{self, LimitOptions, LimitSide, Sign, TestFunction};
use chlab::solver::{self, MultipeakonState, Snapshot, SolutionHandle, SolverOptions};
use chlab::Error;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn pair() -> PeakonAntipeakonParams {
    derive_params(2.0, 0.75f64.ln()).unwrap()
}

fn scenario_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

fn scenarios() -> Vec<(String, ScenarioConfig, SolutionHandle)> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(scenario_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let cfg = ScenarioConfig::load(&p).unwrap();
            let h = cfg.build_handle(1.0).unwrap();
            (p.file_stem().unwrap().to_string_lossy().into_owned(), cfg, h)
        })
        .collect()
}

fn total_energy(s: &Snapshot) -> f64 {
    let e = s.total_energy();
    e.e_plus + e.e_minus + e.e_u
}

/// Approach distance inside the span and clear of other events.
fn approach_delta(h: &SolutionHandle, t: f64, side: LimitSide, delta: f64) -> f64 {
    let (a, b) = h.span();
    let room = match side {
        LimitSide::Right => b - t,
        LimitSide::Left => t - a,
    };
    let mut d = delta.min(0.5 * room);
    for e in h.event_times() {
        if e != t {
            d = d.min(0.5 * (e - t).abs());
        }
    }
    d
}

fn criterion_1() -> Verdict {
    let p = pair();
    let start = Instant::now();
    let r = solver::oracle_compare(&p, 0.9 * p.t_collision, 201, &SolverOptions::default()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    verdict(
        r.max_error <= 1e-5 && secs < 10.0,
        format!(
            "sup error {:.3e} (worst t = {:.4}) over [0, 0.9T] in {secs:.3} s",
            r.max_error, r.worst_t
        ),
    )
}

fn criterion_2() -> Verdict {
    let p = pair();
    let tc = p.t_collision;
    let h = SolutionHandle::exact_peakon_antipeakon(p, 2.0 * tc).unwrap();
    let phi = TestFunction::indicator(-1.0, 1.0).unwrap();
    let others = [0.25 * tc, 0.5 * tc, 0.8 * tc, 1.3 * tc, 1.7 * tc];
    let mut candidates = vec![tc];
    candidates.extend(others);
    let opts = LimitOptions::default();
    let (plus, minus) = measures::mu_atoms(&h, &phi, &candidates, &opts).unwrap();
    let at = |r: &measures::MeasureReport, t: f64| r.atoms.iter().find(|a| a.t == t).map_or(0.0, |a| a.mass);
    let (mp, mm) = (at(&plus, tc), at(&minus, tc));
    let target = 2.0 * p.h0 * p.h0;
    let stray = plus.atoms.len() + minus.atoms.len() - [mp, mm].iter().filter(|m| **m != 0.0).count();
    let ok = (mp - target).abs() <= 0.02 * target && (mm + target).abs() <= 0.02 * target && stray == 0;
    verdict(
        ok,
        format!("mu+ atom at T = {mp:.6}, mu- atom at T = {mm:.6} (expected +/-{target:.1}); {stray} atoms at other tested times"),
    )
}

struct Draw {
    scenario: usize,
    alpha: f64,
    beta: f64,
    t0: f64,
}

fn draws(handles: &[(String, ScenarioConfig, SolutionHandle)]) -> Vec<Draw> {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    (0..20)
        .map(|k| {
            let scenario = k % handles.len();
            let h = &handles[scenario].2;
            let (a, b) = h.span();
            let alpha = rng.random_range(-3.0..1.0);
            let beta = alpha + rng.random_range(0.5..3.0);
            let events = h.event_times();
            let t0 = if !events.is_empty() && rng.random_bool(0.4) {
                events[rng.random_range(0..events.len())]
            } else {
                rng.random_range(a..b - 0.05 * (b - a))
            };
            Draw {
                scenario,
                alpha,
                beta,
                t0,
            }
        })
        .collect()
}

/// One-sided continuity of `E⁻` (or `E⁺`) at `t0`; returns (ok, gap,
/// uncertainty, energy).
fn continuity(h: &SolutionHandle, d: &Draw, t0: f64, side: LimitSide, sign: Sign) -> (bool, f64, f64, f64) {
    let opts = LimitOptions::default();
    let delta = approach_delta(h, t0, side, opts.delta);
    let approach = measures::approach_times(t0, side, delta, opts.k_max);
    let mut times = vec![t0];
    times.extend(&approach);
    let l = measures::window_ledger(h, d.alpha, d.beta, &times).unwrap();
    let series = if sign == Sign::Minus { &l.e_minus } else { &l.e_plus };
    let energy = total_energy(&h.snapshot(t0).unwrap()).max(h.energy_sup());
    // window energies are sums of terms as large as the total energy
    let lim = measures::one_sided_limit_scaled(&series[1..], t0, side, energy).unwrap();
    let gap = (lim.value - series[0]).abs();
    (
        gap <= lim.uncertainty && lim.uncertainty <= 1e-3 * energy,
        gap,
        lim.uncertainty,
        energy,
    )
}

fn continuity_suite(reverse: bool) -> Verdict {
    let hs = scenarios();
    let mut failures = Vec::new();
    let mut worst_gap: f64 = 0.0;
    let mut worst_unc: f64 = 0.0;
    let ds = draws(&hs);
    for d in &ds {
        let (name, _, h) = &hs[d.scenario];
        let (ok, gap, unc, _) = if reverse {
            let t_rev = h.span().1;
            let rh = SolutionHandle::reversed(Arc::new(h.clone()), t_rev)
                .unwrap()
                .with_mesh(*h.mesh());
            continuity(&rh, d, t_rev - d.t0, LimitSide::Left, Sign::Plus)
        } else {
            continuity(h, d, d.t0, LimitSide::Right, Sign::Minus)
        };
        worst_gap = worst_gap.max(gap);
        worst_unc = worst_unc.max(unc);
        if !ok {
            failures.push(format!(
                "{name} t0={:.4} [{:.2},{:.2}] gap {gap:.2e} unc {unc:.2e}",
                d.t0, d.alpha, d.beta
            ));
        }
    }
    verdict(
        failures.is_empty(),
        format!(
            "{} (window, t0) pairs, max |limit - value| {worst_gap:.2e}, max uncertainty {worst_unc:.2e}{}",
            ds.len(),
            if failures.is_empty() {
                String::new()
            } else {
                format!("; failing: {}", failures.join("; "))
            }
        ),
    )
}

fn criterion_5() -> Verdict {
    let p = pair();
    let tc = p.t_collision;
    let single = SolutionHandle::single_peakon(1.0, 3.0).unwrap();
    let overtaking = SolutionHandle::multipeakon(
        &MultipeakonState::new(vec![-4.0, 0.0], vec![2.0, 1.0], 0.0).unwrap(),
        6.0,
        &SolverOptions::default(),
    )
    .unwrap();
    let collision = SolutionHandle::exact_peakon_antipeakon(p, 0.9 * tc).unwrap();
    let cases: [(&SolutionHandle, f64, f64); 10] = [
        (&single, -2.0, 2.5),
        (&single, -0.5, 2.5),
        (&single, 0.7, 2.5),
        (&single, 3.0, 2.5),
        (&overtaking, -6.0, 5.5),
        (&overtaking, -2.0, 5.5),
        (&overtaking, 2.0, 5.5),
        (&collision, -1.0, 0.85 * tc),
        (&collision, 0.0, 0.85 * tc),
        (&collision, 1.5, 0.85 * tc),
    ];
    let step = 1e-4;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for (h, start, t_end) in cases {
        let centres = characteristics::uniform_times(0.1, t_end - 0.1, 6);
        let times: Vec<f64> = centres.iter().flat_map(|&t| [t - step, t, t + step]).collect();
        let ch = characteristics::trace_at(
            h,
            start,
            0.0,
            &times,
            Side::Plain,
            &characteristics::TraceOptions::default(),
        )
        .unwrap();
        let v = |k: usize| {
            let s = h.snapshot(ch.samples[k].t).unwrap();
            let (l, r) = s.slopes(ch.samples[k].x);
            0.5 * (l + r)
        };
        for k in 0..centres.len() {
            let (i, j) = (3 * k, 3 * k + 2);
            let fd = (v(j) - v(i)) / (2.0 * step);
            let s = h.snapshot(ch.samples[3 * k + 1].t).unwrap();
            let x = ch.samples[3 * k + 1].x;
            let u = s.u(x);
            let vm = v(3 * k + 1);
            let pr = s.pressure(x).p;
            let rhs = u * u - 0.5 * vm * vm - pr;
            let scale = u * u + 0.5 * vm * vm + pr.abs();
            worst = worst.max((fd - rhs).abs() / scale);
            checked += 1;
        }
    }
    verdict(
        worst <= 1e-3,
        format!("{checked} samples on 10 characteristics, max relative error {worst:.2e}"),
    )
}

fn criterion_6() -> Verdict {
    let mut parts = Vec::new();
    let mut ok = true;
    for (spec, floor) in [(KernelSpec::camassa_holm(), -1.0), (KernelSpec::hunter_saxton(), 0.0)] {
        let d = kernel::verify_decomposition(&spec, 10_000, 6).unwrap();
        let l = kernel::verify_one_sided_lipschitz(&spec, 10_000, 6).unwrap();
        ok &= d.max_reconstruction_error <= 1e-12 && d.bound_violations == 0 && l.min_quotient >= floor;
        parts.push(format!(
            "{:?}: reconstruction {:.1e}, {} bound violations, min quotient {:.6}",
            spec.kernel_id, d.max_reconstruction_error, d.bound_violations, l.min_quotient
        ));
    }
    verdict(ok, parts.join("; "))
}

fn criterion_7() -> Verdict {
    let hs = scenarios();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut total = characteristics::BoundCheck::default();
    let mut traced = 0;
    while traced < 50 {
        let (_, _, h) = &hs[traced % hs.len()];
        let (a, b) = h.span();
        let zeta = rng.random_range(-3.0..2.0);
        let eta = zeta + rng.random_range(0.05..1.5);
        let pair = characteristics::pair_series(h, zeta, eta, a, b).unwrap();
        let l = h.kernel().lipschitz;
        let c = h.energy_sup();
        total = total
            .merge(characteristics::check_differential_inequality(&pair, l, c, 1e-6))
            .merge(characteristics::check_tangent_bound(&pair, l, c, 1e-6));
        traced += 1;
    }
    verdict(
        total.violations == 0,
        format!(
            "{traced} pairs, {} samples checked, {} skipped (out of branch), {} violations, worst margin {:.3e}",
            total.checked, total.skipped, total.violations, total.worst_margin
        ),
    )
}

/// `sup |u_x|` over the sampled times, from the crest momenta.
fn slope_bound(h: &SolutionHandle, t: f64) -> f64 {
    characteristics::uniform_times(0.0, t, 65)
        .into_iter()
        .map(|s| match h.snapshot(s).unwrap() {
            Snapshot::Peakons(ps) => ps.momenta().iter().map(|p| p.abs()).sum::<f64>(),
            Snapshot::Profile(_) => f64::INFINITY,
        })
        .fold(0.0, f64::max)
}

fn criterion_8() -> Verdict {
    let p = pair();
    let tc = p.t_collision;
    let single = SolutionHandle::single_peakon(1.0, 3.0).unwrap();
    let overtaking = SolutionHandle::multipeakon(
        &MultipeakonState::new(vec![-4.0, 0.0], vec![2.0, 1.0], 0.0).unwrap(),
        6.0,
        &SolverOptions::default(),
    )
    .unwrap();
    let collision = SolutionHandle::exact_peakon_antipeakon(p, 2.0 * tc).unwrap();
    let mut bounds = characteristics::BoundCheck::default();
    for (h, t, lo, hi) in [
        (&single, 2.5, -3.0, 3.0),
        (&overtaking, 5.0, -7.0, 3.0),
        (&collision, 0.8 * tc, -3.0, 3.0),
    ] {
        let starts = characteristics::uniform_times(lo, hi, 61);
        let map = characteristics::flow_map(h, &starts, t).unwrap();
        bounds = bounds.merge(map.increment_bounds(t, slope_bound(h, t), 1e-6));
        if !map.monotone {
            bounds.violations += 1;
        }
    }
    let cases = [
        (&single, -2.0, 2.0),
        (&single, -0.5, 2.0),
        (&single, 1.0, 2.0),
        (&overtaking, -5.0, 3.0),
        (&overtaking, -2.0, 3.0),
        (&overtaking, 1.0, 3.0),
        (&collision, -1.0, 0.8 * tc),
        (&collision, -0.05, 0.3 * tc),
        (&collision, 1.0, 0.8 * tc),
    ];
    let (mut worst, mut tested, mut below_floor, mut bound_fail) = (0.0f64, 0, 0, 0);
    for (h, start, t) in cases {
        let ch = characteristics::trace(h, start, 0.0, t, Side::Plain).unwrap();
        match characteristics::v2mprime_check_with(h, &ch, t, &V2MOptions::default()) {
            Ok(r) => {
                worst = worst.max(r.rel_err);
                tested += 1;
                bound_fail += usize::from(!r.bound_ok);
            }
            Err(Error::VFloorViolated { .. }) => below_floor += 1,
            Err(e) => panic!("v2mprime_check: {e}"),
        }
    }
    verdict(
        bounds.holds() && worst <= 1e-3 && bound_fail == 0 && tested >= 5,
        format!(
            "flow map: {} increments, {} violations, worst margin {:.2e}; v^2 M': {tested} characteristics (|v| >= 0.1), {below_floor} below floor, max relative error {worst:.2e}, {bound_fail} two-sided bound failures",
            bounds.checked, bounds.violations, bounds.worst_margin
        ),
    )
}

fn criterion_9() -> Verdict {
    let hs = scenarios();
    let mut worst_change: f64 = 0.0;
    let mut failures = Vec::new();
    let (mut bv_tested, mut bv_out_of_regime, mut bv_fail) = (0, 0, 0);
    for (name, cfg, h) in &hs {
        let coarse = cfg.sample_times(1.0);
        let fine = cfg.sample_times(2.0);
        for phi in cfg.test_functions().unwrap() {
            for sign in [Sign::Plus, Sign::Minus] {
                let a = measures::nu_measure(h, &phi, sign, &coarse).unwrap().total_variation;
                let b = measures::nu_measure(h, &phi, sign, &fine).unwrap().total_variation;
                let change = if a.max(b) > 0.0 { (a - b).abs() / a.max(b) } else { 0.0 };
                worst_change = worst_change.max(change);
                if change >= 0.05 {
                    failures.push(format!("{name} {sign:?}: {a:.4} vs {b:.4}"));
                }
            }
        }
        let (t_start, t_end) = h.span();
        for w in &cfg.windows {
            let times = characteristics::uniform_times(t_start, t_end, 41);
            let opts = characteristics::TraceOptions::default();
            let al = characteristics::trace_at(h, w.alpha, t_start, &times, Side::Leftmost, &opts).unwrap();
            let be = characteristics::trace_at(h, w.beta, t_start, &times, Side::Leftmost, &opts).unwrap();
            for &t1 in &times[..times.len() - 1] {
                for dt in [1e-3, 1e-2, 5e-2] {
                    let t2 = (t1 + dt).min(t_end);
                    match measures::bv_lower_bound_check(h, &al, &be, t1, t2) {
                        Ok(r) => {
                            bv_tested += 1;
                            bv_fail += usize::from(!r.holds);
                        }
                        Err(Error::RegimeViolated { .. }) => bv_out_of_regime += 1,
                        Err(e) => panic!("bv_lower_bound_check: {e}"),
                    }
                }
            }
        }
    }
    verdict(
        failures.is_empty() && bv_fail == 0 && bv_tested > 0,
        format!(
            "max TV change under 2x refinement {:.2}%; lower bound: {bv_tested} (t1, t2) in regime, {bv_fail} failures, {bv_out_of_regime} out of regime{}",
            100.0 * worst_change,
            if failures.is_empty() { String::new() } else { format!("; TV failures: {}", failures.join("; ")) }
        ),
    )
}

fn criterion_10() -> Verdict {
    let p = pair();
    let tc = p.t_collision;
    let init = p.peakon_sum_at(0.0);
    let through_solver = SolutionHandle::multipeakon(
        &MultipeakonState::new(init.positions().to_vec(), init.momenta().to_vec(), 0.0).unwrap(),
        2.0 * tc,
        &SolverOptions::default(),
    )
    .unwrap();
    let three = SolutionHandle::multipeakon(
        &MultipeakonState::new(vec![-3.0, -0.5, 0.5], vec![1.5, 1.0, -1.0], 0.0).unwrap(),
        3.0,
        &SolverOptions::default(),
    )
    .unwrap();
    let mut handles: Vec<(String, SolutionHandle)> = scenarios().into_iter().map(|(n, _, h)| (n, h)).collect();
    handles.push(("pair via multipeakon solver".into(), through_solver));
    handles.push(("three peakons with collision".into(), three));
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (name, h) in &handles {
        let (a, b) = h.span();
        let mut times = characteristics::uniform_times(a, b, 201);
        for e in h.event_times() {
            // closer than this the colliding gap drops below the spacing of f64 positions
            times.extend(
                [e - 1e-3, e - 1e-6, e + 1e-6, e + 1e-3]
                    .into_iter()
                    .filter(|t| *t >= a && *t <= b),
            );
        }
        let events = h.event_times();
        times.retain(|t| !events.contains(t));
        let energies: Vec<f64> = times.iter().map(|&t| total_energy(&h.snapshot(t).unwrap())).collect();
        let e0 = energies[0];
        let dev = energies.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max);
        let rel = if e0 > 0.0 { dev / e0 } else { dev };
        worst = worst.max(rel);
        parts.push(format!("{name} {rel:.1e}"));
    }
    verdict(
        worst <= 1e-4,
        format!("max relative drift {worst:.2e} ({})", parts.join(", ")),
    )
}

fn main() -> ExitCode {
    type Criterion = (&'static str, fn() -> Verdict);
    let criteria: [Criterion; 10] = [
        ("peakon-antipeakon oracle match", criterion_1),
        ("measure atoms at collision", criterion_2),
        ("right-continuity of E-", || continuity_suite(false)),
        ("left-continuity of E+ under time reversal", || continuity_suite(true)),
        ("slope ODE along characteristics", criterion_5),
        ("kernel decomposition", criterion_6),
        ("omega bounds", criterion_7),
        ("flow-map bounds and v^2 M' identity", criterion_8),
        ("BV stability", criterion_9),
        ("conservation bookkeeping", criterion_10),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let v = run();
        let secs = start.elapsed().as_secs_f64();
        println!(
            "criterion {:>2} {}: {name}: {} [{secs:.2} s]",
            k + 1,
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        failed += usize::from(!v.pass);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
