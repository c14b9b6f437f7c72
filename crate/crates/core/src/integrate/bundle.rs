//! The bundled flow: guiding trajectory, linear flow, direct width
//! integration and all phase accumulators advanced by one stepper.

use num_complex::Complex64 as C64;

use super::stepper::{dopri5, Integration, StepControl};
use crate::classical::{
    beta_from_guiding, beta_from_linear, beta_rate_from_linear, guiding_rhs, linear_rhs, riccati_rhs, GuidingState,
    LinearState, RiccatiSign, SystemParams,
};
use crate::error::{Error, Result};
use crate::phases::{
    checked_real, frame_from_linear, frame_rate, hannay_rate_frame_raw, k_rate, log_qq_rate, total_rate_raw,
    PhaseLedger, REALNESS_TOL,
};
use crate::schedules::CoefficientSchedule;

pub const BUNDLE_LEN: usize = 10;

/// Flat state `(q, p, Q, P, β, θ, θ_H, ln QQ*, S, k)`.
///
/// `β` is integrated directly from the width equation; `ln QQ*` is stored
/// relative to its initial value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BundledState {
    pub q: C64,
    pub p: C64,
    pub big_q: C64,
    pub big_p: C64,
    pub beta: C64,
    pub theta: C64,
    pub theta_h: C64,
    pub ln_qq: C64,
    pub s_integral: C64,
    pub k: C64,
}

impl BundledState {
    pub fn to_array(&self) -> [C64; BUNDLE_LEN] {
        [
            self.q,
            self.p,
            self.big_q,
            self.big_p,
            self.beta,
            self.theta,
            self.theta_h,
            self.ln_qq,
            self.s_integral,
            self.k,
        ]
    }

    pub fn from_array(a: &[C64; BUNDLE_LEN]) -> Self {
        Self {
            q: a[0],
            p: a[1],
            big_q: a[2],
            big_p: a[3],
            beta: a[4],
            theta: a[5],
            theta_h: a[6],
            ln_qq: a[7],
            s_integral: a[8],
            k: a[9],
        }
    }

    pub fn guiding(&self) -> GuidingState {
        GuidingState { q: self.q, p: self.p }
    }

    pub fn linear(&self) -> LinearState {
        LinearState {
            big_q: self.big_q,
            big_p: self.big_p,
        }
    }

    /// Width from the linear flow, `−(i/2)P/Q`.
    pub fn beta_linear(&self) -> C64 {
        -0.5 * C64::i() * self.big_p / self.big_q
    }

    pub fn beta_guiding(&self, params: &SystemParams) -> C64 {
        beta_from_guiding(&self.guiding(), params)
    }

    pub fn ledger(&self, t: f64, params: &SystemParams) -> PhaseLedger {
        PhaseLedger::new(t, self.theta.re, self.theta_h.re, self.ln_qq.re, self.s_integral, self.k, params)
    }
}

/// Initial conditions of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialData {
    pub guiding: GuidingState,
    pub linear: LinearState,
    pub beta: C64,
    pub k: C64,
}

impl InitialData {
    /// `(Q, P) = (1, 2iβ)` and guiding data as given.
    pub fn new(beta: C64, guiding: GuidingState, k: C64) -> Self {
        Self {
            guiding,
            linear: LinearState {
                big_q: C64::new(1.0, 0.0),
                big_p: 2.0 * C64::i() * beta,
            },
            beta,
            k,
        }
    }

    pub fn state(&self) -> BundledState {
        let zero = C64::new(0.0, 0.0);
        BundledState {
            q: self.guiding.q,
            p: self.guiding.p,
            big_q: self.linear.big_q,
            big_p: self.linear.big_p,
            beta: self.beta,
            theta: zero,
            theta_h: zero,
            ln_qq: zero,
            s_integral: zero,
            k: self.k,
        }
    }
}

/// Samples of one integration plus run metadata.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub samples: Vec<(f64, BundledState)>,
    pub initial: InitialData,
    pub params: SystemParams,
    pub sign: RiccatiSign,
    pub control: StepControl,
    pub schedule: CoefficientSchedule,
    pub t_end: f64,
    pub final_state: BundledState,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    /// Largest `|Im|/(1+|Re|)` seen on the real accumulators at accepted steps.
    pub max_realness_drift: f64,
    /// Largest `|β − (−iP/2Q)|` seen at accepted steps.
    pub max_riccati_gap: f64,
    integration: Integration<BUNDLE_LEN>,
}

impl Trajectory {
    /// State at any `t ∈ [0, t_end]`, when dense output was kept.
    pub fn state_at(&self, t: f64) -> Option<BundledState> {
        if t == self.t_end {
            return Some(self.final_state);
        }
        self.integration.eval(t).map(|a| BundledState::from_array(&a))
    }

    pub fn has_dense(&self) -> bool {
        self.integration.dense.is_some()
    }
}

/// Everything needed to evaluate the bundled right-hand side.
#[derive(Debug, Clone, Copy)]
pub struct Propagator<'a> {
    pub schedule: &'a CoefficientSchedule,
    pub params: SystemParams,
    pub sign: RiccatiSign,
    pub eps_q: f64,
    pub control: StepControl,
}

impl<'a> Propagator<'a> {
    pub fn rhs(&self, t: f64, s: &BundledState) -> Result<BundledState> {
        let c = self.schedule.evaluate(t)?;
        let guiding = s.guiding();
        let dg = guiding_rhs(&guiding, &c, &self.params, self.eps_q).map_err(|e| e.at_time(t))?;

        let lin = s.linear();
        let dlin = linear_rhs(&lin, &c);
        let beta_lin = beta_from_linear(&lin, self.eps_q)?;
        let dbeta_lin = beta_rate_from_linear(&lin, &dlin);
        let dln = log_qq_rate(&lin, &dlin);

        let theta_dot = total_rate_raw(beta_lin, &c, dln);
        checked_real(theta_dot, "total angle rate").map_err(|e| annotate(e, t))?;
        let frame = frame_from_linear(&lin, beta_lin)?;
        let de = frame_rate(&lin, &dlin, beta_lin, dbeta_lin);
        let theta_h_dot = hannay_rate_frame_raw(&frame, de)?;
        checked_real(theta_h_dot, "Hannay rate").map_err(|e| annotate(e, t))?;

        let dbeta = riccati_rhs(s.beta, &c, self.sign);
        let ds = s.beta * c.z - 0.5 * C64::i() * c.y;
        let dk = k_rate(&guiding, dg.q, s.beta, &c, &self.params, self.eps_q).map_err(|e| e.at_time(t))?;

        Ok(BundledState {
            q: dg.q,
            p: dg.p,
            big_q: dlin.big_q,
            big_p: dlin.big_p,
            beta: dbeta,
            theta: theta_dot,
            theta_h: theta_h_dot,
            ln_qq: C64::new(dln, 0.0),
            s_integral: ds,
            k: dk,
        })
    }

    /// Integrates from `t = 0` to `t_end`, sampling at `outputs`.
    pub fn run(&self, initial: &InitialData, t_end: f64, outputs: &[f64], keep_dense: bool) -> Result<Trajectory> {
        if !(t_end.is_finite() && t_end >= 0.0) {
            return Err(Error::Config(format!("run duration must be >= 0, got {t_end}")));
        }
        self.schedule.check_covers(t_end)?;
        if outputs.iter().any(|&t| !(0.0..=t_end).contains(&t)) {
            return Err(Error::Config("output times must lie in [0, duration]".into()));
        }
        let y0 = initial.state().to_array();
        let mut max_drift = 0.0_f64;
        let mut prev_q = initial.guiding.q;
        let mut max_gap = 0.0_f64;
        let integration = dopri5(
            |t, y| self.rhs(t, &BundledState::from_array(y)).map(|d| d.to_array()),
            0.0,
            y0,
            t_end,
            &self.control,
            outputs,
            keep_dense,
            |t, y| {
                for (idx, name) in [(5, "theta"), (6, "theta_H"), (7, "ln QQ*")] {
                    let drift = y[idx].im.abs() / (1.0 + y[idx].re.abs());
                    max_drift = max_drift.max(drift);
                    if drift >= REALNESS_TOL {
                        return Err(Error::Consistency(format!(
                            "{name} acquired imaginary part {:.3e} at t = {t}",
                            y[idx].im
                        )));
                    }
                }
                if self.params.l != 0.0 {
                    // A step can jump over the origin, so test the chord too.
                    let closest = chord_distance(prev_q, y[0]);
                    if !(closest > self.eps_q) {
                        return Err(Error::Singular {
                            t,
                            reason: format!("|q| = {closest:.3e} reached the guard"),
                        });
                    }
                }
                prev_q = y[0];
                max_gap = max_gap.max((y[4] + 0.5 * C64::i() * y[3] / y[2]).norm());
                Ok(())
            },
        )?;
        Ok(Trajectory {
            samples: integration
                .samples
                .iter()
                .map(|(t, y)| (*t, BundledState::from_array(y)))
                .collect(),
            initial: *initial,
            params: self.params,
            sign: self.sign,
            control: self.control,
            schedule: self.schedule.clone(),
            t_end: integration.t_end,
            final_state: BundledState::from_array(&integration.y_end),
            accepted_steps: integration.accepted,
            rejected_steps: integration.rejected,
            max_realness_drift: max_drift,
            max_riccati_gap: max_gap,
            integration,
        })
    }
}

fn annotate(e: Error, t: f64) -> Error {
    match e {
        Error::Consistency(msg) => Error::Consistency(format!("{msg} at t = {t}")),
        other => other,
    }
}

/// Distance from the origin to the segment `[a, b]` in the complex plane.
fn chord_distance(a: C64, b: C64) -> f64 {
    let d = b - a;
    let len2 = d.norm_sqr();
    if len2 == 0.0 {
        return a.norm();
    }
    let s = (-(a.conj() * d).re / len2).clamp(0.0, 1.0);
    (a + d * s).norm()
}
