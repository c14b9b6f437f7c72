//! Explicit Runge–Kutta steppers over fixed-size complex state vectors.
//!
//! `dopri5` is the Dormand–Prince 5(4) pair with PI step-size control and
//! the 4th-order continuous extension of Hairer, Nørsett & Wanner.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub min_step: f64,
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            min_step: 1e-12,
            max_step: f64::INFINITY,
            max_steps: 5_000_000,
        }
    }
}

impl StepControl {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::Config("rel_tol and abs_tol must be positive".into()));
        }
        if !(self.min_step > 0.0 && self.min_step < self.max_step) {
            return Err(Error::Config("need 0 < min_step < max_step".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::Config("max_steps must be positive".into()));
        }
        Ok(())
    }
}

fn axpy<const N: usize>(y: &[C64; N], terms: &[(f64, &[C64; N])]) -> [C64; N] {
    let mut out = *y;
    for (c, k) in terms {
        if *c == 0.0 {
            continue;
        }
        for (o, v) in out.iter_mut().zip(k.iter()) {
            *o += v * *c;
        }
    }
    out
}

fn check_finite<const N: usize>(t: f64, k: &[C64; N]) -> Result<()> {
    if k.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::Singular {
            t,
            reason: "non-finite derivative".into(),
        })
    }
}

/// One classical RK4 step of size `dt`.
pub fn rk4_step<const N: usize, F>(mut f: F, t: f64, y: &[C64; N], dt: f64) -> Result<[C64; N]>
where
    F: FnMut(f64, &[C64; N]) -> Result<[C64; N]>,
{
    if !(dt > 0.0) {
        return Err(Error::Config(format!("rk4 step needs dt > 0, got {dt}")));
    }
    let half = 0.5 * dt;
    let k1 = f(t, y)?;
    check_finite(t, &k1)?;
    let k2 = f(t + half, &axpy(y, &[(half, &k1)]))?;
    check_finite(t + half, &k2)?;
    let k3 = f(t + half, &axpy(y, &[(half, &k2)]))?;
    check_finite(t + half, &k3)?;
    let k4 = f(t + dt, &axpy(y, &[(dt, &k3)]))?;
    check_finite(t + dt, &k4)?;
    Ok(axpy(
        y,
        &[(dt / 6.0, &k1), (dt / 3.0, &k2), (dt / 3.0, &k3), (dt / 6.0, &k4)],
    ))
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

const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

/// Continuous extension of one accepted step.
#[derive(Debug, Clone)]
pub struct DenseSegment<const N: usize> {
    t0: f64,
    h: f64,
    coeffs: [[C64; N]; 5],
}

impl<const N: usize> DenseSegment<N> {
    pub fn eval(&self, t: f64) -> [C64; N] {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        let [r1, r2, r3, r4, r5] = &self.coeffs;
        std::array::from_fn(|i| r1[i] + (r2[i] + (r3[i] + (r4[i] + r5[i] * th1) * th) * th1) * th)
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t0 && t <= self.t0 + self.h
    }
}

/// Everything produced by one adaptive integration.
#[derive(Debug, Clone)]
pub struct Integration<const N: usize> {
    pub samples: Vec<(f64, [C64; N])>,
    pub dense: Option<Vec<DenseSegment<N>>>,
    pub accepted: usize,
    pub rejected: usize,
    pub t_end: f64,
    pub y_end: [C64; N],
}

impl<const N: usize> Integration<N> {
    /// Dense-output state at `t`, if segments were kept.
    pub fn eval(&self, t: f64) -> Option<[C64; N]> {
        let segs = self.dense.as_ref()?;
        let idx = segs.partition_point(|s| s.t0 + s.h < t);
        segs.get(idx.min(segs.len().saturating_sub(1)))
            .filter(|s| s.contains(t))
            .map(|s| s.eval(t))
    }
}

fn error_norm<const N: usize>(y0: &[C64; N], y1: &[C64; N], err: &[C64; N], c: &StepControl) -> f64 {
    let sum: f64 = (0..N)
        .map(|i| {
            let sc = c.abs_tol + c.rel_tol * y0[i].norm().max(y1[i].norm());
            (err[i].norm() / sc).powi(2)
        })
        .sum();
    (sum / N as f64).sqrt()
}

fn initial_step<const N: usize, F>(f: &mut F, t0: f64, y0: &[C64; N], k1: &[C64; N], c: &StepControl, span: f64) -> Result<f64>
where
    F: FnMut(f64, &[C64; N]) -> Result<[C64; N]>,
{
    let mut dnf = 0.0;
    let mut dny = 0.0;
    for i in 0..N {
        let sk = c.abs_tol + c.rel_tol * y0[i].norm();
        dnf += (k1[i].norm() / sk).powi(2);
        dny += (y0[i].norm() / sk).powi(2);
    }
    let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
        1e-6
    } else {
        (dny / dnf).sqrt() * 0.01
    };
    h = h.min(c.max_step).min(span);
    let y1 = axpy(y0, &[(h, k1)]);
    let k2 = f(t0 + h, &y1)?;
    let mut der2 = 0.0;
    for i in 0..N {
        let sk = c.abs_tol + c.rel_tol * y0[i].norm();
        der2 += ((k2[i] - k1[i]).norm() / sk).powi(2);
    }
    let der2 = der2.sqrt() / h;
    let der12 = der2.max(dnf.sqrt());
    let h1 = if der12 <= 1e-15 {
        (h * 1e-3).max(1e-6)
    } else {
        (0.01 / der12).powf(0.2)
    };
    Ok((100.0 * h).min(h1).min(c.max_step).min(span).max(c.min_step))
}

/// Adaptive Dormand–Prince 5(4) integration from `t0` to `t_end`.
///
/// `outputs` must be sorted and lie in `[t0, t_end]`; each is sampled with
/// the dense formula. `on_accept` sees every accepted step and may abort.
pub fn dopri5<const N: usize, F, A>(
    mut f: F,
    t0: f64,
    y0: [C64; N],
    t_end: f64,
    control: &StepControl,
    outputs: &[f64],
    keep_dense: bool,
    mut on_accept: A,
) -> Result<Integration<N>>
where
    F: FnMut(f64, &[C64; N]) -> Result<[C64; N]>,
    A: FnMut(f64, &[C64; N]) -> Result<()>,
{
    control.validate()?;
    if outputs.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Config("output times must be sorted".into()));
    }
    let mut out_iter = outputs.iter().copied().peekable();
    let mut samples = Vec::with_capacity(outputs.len());
    while let Some(&to) = out_iter.peek() {
        if to > t0 {
            break;
        }
        samples.push((to, y0));
        out_iter.next();
    }
    let mut dense = keep_dense.then(Vec::new);

    let span = t_end - t0;
    if span <= 0.0 {
        return Ok(Integration {
            samples,
            dense,
            accepted: 0,
            rejected: 0,
            t_end: t0,
            y_end: y0,
        });
    }

    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y)?;
    check_finite(t, &k1)?;
    let mut h = initial_step(&mut f, t0, &y0, &k1, control, span)?;
    let mut fac_old = 1e-4_f64;
    let mut last_rejected = false;
    let (mut accepted, mut rejected) = (0usize, 0usize);

    loop {
        if accepted + rejected >= control.max_steps {
            return Err(Error::Budget {
                t,
                steps: accepted + rejected,
            });
        }
        let last = t + h >= t_end || (t_end - t - h) < 1e-12 * span;
        if last {
            h = t_end - t;
        }
        if h < control.min_step && !last {
            return Err(Error::Singular {
                t,
                reason: format!("step size underflow (h = {h:.3e})"),
            });
        }

        let k2 = f(t + C2 * h, &axpy(&y, &[(h * A21, &k1)]))?;
        check_finite(t + C2 * h, &k2)?;
        let k3 = f(t + C3 * h, &axpy(&y, &[(h * A31, &k1), (h * A32, &k2)]))?;
        check_finite(t + C3 * h, &k3)?;
        let k4 = f(
            t + C4 * h,
            &axpy(&y, &[(h * A41, &k1), (h * A42, &k2), (h * A43, &k3)]),
        )?;
        check_finite(t + C4 * h, &k4)?;
        let k5 = f(
            t + C5 * h,
            &axpy(&y, &[(h * A51, &k1), (h * A52, &k2), (h * A53, &k3), (h * A54, &k4)]),
        )?;
        check_finite(t + C5 * h, &k5)?;
        let k6 = f(
            t + h,
            &axpy(
                &y,
                &[(h * A61, &k1), (h * A62, &k2), (h * A63, &k3), (h * A64, &k4), (h * A65, &k5)],
            ),
        )?;
        check_finite(t + h, &k6)?;
        let y_new = axpy(
            &y,
            &[(h * A71, &k1), (h * A73, &k3), (h * A74, &k4), (h * A75, &k5), (h * A76, &k6)],
        );
        let k7 = f(t + h, &y_new)?;
        check_finite(t + h, &k7)?;

        let err_vec = axpy(
            &[C64::new(0.0, 0.0); N],
            &[(h * E1, &k1), (h * E3, &k3), (h * E4, &k4), (h * E5, &k5), (h * E6, &k6), (h * E7, &k7)],
        );
        let err = error_norm(&y, &y_new, &err_vec, control);
        if !err.is_finite() {
            return Err(Error::Singular {
                t,
                reason: "non-finite error estimate".into(),
            });
        }

        let fac11 = err.powf(0.2 - BETA * 0.75);
        if err <= 1.0 {
            let t_new = if last { t_end } else { t + h };
            on_accept(t_new, &y_new)?;

            let seg = {
                let r2 = axpy(&y_new, &[(-1.0, &y)]);
                let r3 = axpy(&axpy(&[C64::new(0.0, 0.0); N], &[(h, &k1)]), &[(-1.0, &r2)]);
                let r4 = axpy(&axpy(&r2, &[(-h, &k7)]), &[(-1.0, &r3)]);
                let r5 = axpy(
                    &[C64::new(0.0, 0.0); N],
                    &[(h * D1, &k1), (h * D3, &k3), (h * D4, &k4), (h * D5, &k5), (h * D6, &k6), (h * D7, &k7)],
                );
                DenseSegment {
                    t0: t,
                    h,
                    coeffs: [y, r2, r3, r4, r5],
                }
            };
            while let Some(&to) = out_iter.peek() {
                if to > t_new {
                    break;
                }
                let v = if to == t_new { y_new } else { seg.eval(to) };
                samples.push((to, v));
                out_iter.next();
            }
            if let Some(d) = dense.as_mut() {
                d.push(seg);
            }

            accepted += 1;
            t = t_new;
            y = y_new;
            k1 = k7;
            if last {
                break;
            }
            let mut fac = fac11 / fac_old.powf(BETA);
            fac = (fac / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let mut h_new = (h / fac).min(control.max_step);
            if last_rejected {
                h_new = h_new.min(h);
            }
            fac_old = err.max(1e-4);
            last_rejected = false;
            h = h_new;
        } else {
            rejected += 1;
            last_rejected = true;
            h /= (fac11 / SAFETY).min(1.0 / FAC_MIN);
        }
    }

    Ok(Integration {
        samples,
        dense,
        accepted,
        rejected,
        t_end: t,
        y_end: y,
    })
}
