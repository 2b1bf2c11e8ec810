//! Dormand-Prince 5(4) integrator with step-size control and continuous
//! (dense) output of order four.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: Option<f64>,
    pub h_max: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-12,
            h_init: None,
            h_max: f64::INFINITY,
            h_min: 1e-15,
            max_steps: 1_000_000,
        }
    }
}

/// Interpolant over one accepted step `[t, t + h]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseStep {
    pub t: f64,
    pub h: f64,
    cont: [Vec<f64>; 5],
}

impl DenseStep {
    pub fn t_end(&self) -> f64 {
        self.t + self.h
    }

    pub fn y_start(&self) -> &[f64] {
        &self.cont[0]
    }

    /// State at the end of the step.
    pub fn y_end(&self) -> Vec<f64> {
        self.cont[0].iter().zip(&self.cont[1]).map(|(a, b)| a + b).collect()
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.cont[0].len()];
        self.eval_into(t, &mut out);
        out
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let th = (t - self.t) / self.h;
        let th1 = 1.0 - th;
        let [r1, r2, r3, r4, r5] = &self.cont;
        for i in 0..out.len() {
            out[i] = r1[i] + th * (r2[i] + th1 * (r3[i] + th * (r4[i] + th1 * r5[i])));
        }
    }

    pub fn dim(&self) -> usize {
        self.cont[0].len()
    }
}

/// Returned by the step observer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub t: f64,
    pub y: Vec<f64>,
    pub steps: usize,
    pub rejected: usize,
    pub stopped: bool,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

fn error_norm(err: &[f64], y0: &[f64], y1: &[f64], o: &OdeOptions) -> f64 {
    let n = err.len().max(1) as f64;
    let s: f64 = err
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let sc = o.atol + o.rtol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (s / n).sqrt()
}

/// Integrates `y' = f(t, y)` from `t0` to `t_end` (either direction).
///
/// `observe` sees every accepted step and may stop the integration; the
/// returned state is then the end of the last accepted step.
pub fn integrate<F, O>(mut f: F, t0: f64, y0: &[f64], t_end: f64, opts: &OdeOptions, mut observe: O) -> Result<Outcome>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    O: FnMut(&DenseStep) -> Control,
{
    let n = y0.len();
    let dir = if t_end >= t0 { 1.0 } else { -1.0 };
    let mut t = t0;
    let mut y = y0.to_vec();
    if t_end == t0 {
        return Ok(Outcome {
            t,
            y,
            steps: 0,
            rejected: 0,
            stopped: false,
        });
    }
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut ys = vec![0.0; n];
    let mut y1 = vec![0.0; n];
    let mut err = vec![0.0; n];
    f(t, &y, &mut k1);

    let span = (t_end - t0).abs();
    let mut h = match opts.h_init {
        Some(h) => h.abs(),
        None => {
            let d0 = error_norm(&y, &vec![0.0; n], &y, opts);
            let d1 = error_norm(&k1, &vec![0.0; n], &y, opts);
            let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
            h0.min(span)
        }
    }
    .min(opts.h_max)
    .max(opts.h_min);

    let mut steps = 0;
    let mut rejected = 0;
    let mut err_prev: f64 = 1e-4;
    loop {
        if steps + rejected >= opts.max_steps {
            return Err(Error::Integrator {
                t,
                reason: format!("step budget {} exhausted", opts.max_steps),
            });
        }
        let remaining = (t_end - t).abs();
        let last = h >= remaining * (1.0 - 1e-12);
        if last {
            h = remaining;
        }
        let hs = dir * h;

        for i in 0..n {
            ys[i] = y[i] + hs * A21 * k1[i];
        }
        f(t + C2 * hs, &ys, &mut k2);
        for i in 0..n {
            ys[i] = y[i] + hs * (A31 * k1[i] + A32 * k2[i]);
        }
        f(t + C3 * hs, &ys, &mut k3);
        for i in 0..n {
            ys[i] = y[i] + hs * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        f(t + C4 * hs, &ys, &mut k4);
        for i in 0..n {
            ys[i] = y[i] + hs * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        f(t + C5 * hs, &ys, &mut k5);
        for i in 0..n {
            ys[i] = y[i] + hs * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        let t_new = if last { t_end } else { t + hs };
        f(t_new, &ys, &mut k6);
        for i in 0..n {
            y1[i] = y[i] + hs * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        f(t_new, &y1, &mut k7);
        for i in 0..n {
            err[i] = hs * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let en = error_norm(&err, &y, &y1, opts);
        if !en.is_finite() || y1.iter().any(|v| !v.is_finite()) {
            rejected += 1;
            h *= 0.2;
            if h < opts.h_min {
                return Err(Error::Integrator {
                    t,
                    reason: "non-finite state".into(),
                });
            }
            continue;
        }
        if en <= 1.0 {
            // PI controller
            let fac = (0.9 * en.max(1e-10).powf(-0.7 / 5.0) * err_prev.powf(0.4 / 5.0)).clamp(0.2, 10.0);
            err_prev = en.max(1e-4);
            let mut cont = [y.clone(), vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
            for i in 0..n {
                let ydiff = y1[i] - y[i];
                let bspl = hs * k1[i] - ydiff;
                cont[1][i] = ydiff;
                cont[2][i] = bspl;
                cont[3][i] = ydiff - hs * k7[i] - bspl;
                cont[4][i] = hs * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }
            let step = DenseStep { t, h: t_new - t, cont };
            steps += 1;
            t = t_new;
            std::mem::swap(&mut y, &mut y1);
            std::mem::swap(&mut k1, &mut k7);
            if observe(&step) == Control::Stop {
                return Ok(Outcome {
                    t,
                    y,
                    steps,
                    rejected,
                    stopped: true,
                });
            }
            if last {
                return Ok(Outcome {
                    t,
                    y,
                    steps,
                    rejected,
                    stopped: false,
                });
            }
            h = (h * fac).min(opts.h_max);
        } else {
            rejected += 1;
            h *= (0.9 * en.powf(-0.2)).clamp(0.2, 1.0);
            if h < opts.h_min {
                return Err(Error::Integrator {
                    t,
                    reason: format!("step size {h:e} below minimum"),
                });
            }
        }
    }
}

/// Integrates and returns every accepted step.
pub fn integrate_dense<F>(f: F, t0: f64, y0: &[f64], t_end: f64, opts: &OdeOptions) -> Result<(Outcome, Vec<DenseStep>)>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let mut steps = Vec::new();
    let out = integrate(f, t0, y0, t_end, opts, |s| {
        steps.push(s.clone());
        Control::Continue
    })?;
    Ok((out, steps))
}

/// Locates the step of a forward dense trajectory covering `t`.
pub fn locate(steps: &[DenseStep], t: f64) -> Option<&DenseStep> {
    let i = steps.partition_point(|s| s.t_end() < t);
    steps.get(i).filter(|s| s.t <= t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let (out, steps) = integrate_dense(|_, y, dy| dy[0] = -y[0], 0.0, &[1.0], 2.0, &OdeOptions::default()).unwrap();
        assert!((out.y[0] - (-2.0f64).exp()).abs() < 1e-10);
        for k in 0..=40 {
            let t = 0.05 * k as f64;
            let y = locate(&steps, t).unwrap().eval(t)[0];
            assert!((y - (-t).exp()).abs() < 1e-9, "t={t}");
        }
    }

    #[test]
    fn harmonic_oscillator_backwards() {
        let (out, _) = integrate_dense(
            |_, y, dy| {
                dy[0] = y[1];
                dy[1] = -y[0];
            },
            1.0,
            &[1f64.cos(), -1f64.sin()],
            -2.0,
            &OdeOptions::default(),
        )
        .unwrap();
        assert!((out.y[0] - (-2f64).cos()).abs() < 1e-9);
        assert!((out.y[1] + (-2f64).sin()).abs() < 1e-9);
    }

    #[test]
    fn observer_can_stop() {
        let out = integrate(
            |_, _, dy| dy[0] = 1.0,
            0.0,
            &[0.0],
            10.0,
            &OdeOptions {
                h_max: 0.5,
                ..Default::default()
            },
            |s| {
                if s.t_end() > 3.0 {
                    Control::Stop
                } else {
                    Control::Continue
                }
            },
        )
        .unwrap();
        assert!(out.stopped && out.t > 3.0 && out.t < 10.0);
        assert!((out.y[0] - out.t).abs() < 1e-12);
    }

    #[test]
    fn dense_output_matches_endpoints() {
        let (_, steps) = integrate_dense(|t, _, dy| dy[0] = t.cos(), 0.0, &[0.0], 3.0, &OdeOptions::default()).unwrap();
        for s in &steps {
            assert_eq!(s.eval(s.t)[0], s.y_start()[0]);
            assert!((s.eval(s.t_end())[0] - s.y_end()[0]).abs() < 1e-15);
        }
    }
}
