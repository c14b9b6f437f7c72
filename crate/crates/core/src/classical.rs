//! Classical side of the problem: the complex guiding trajectory, the
//! linear Hamilton flow of `(Q, P)`, and the Riccati equation for the width
//! parameter `β = −(i/2)·P/Q`.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::{dopri5, StepControl};
use crate::schedules::{CoefficientSchedule, Coefficients};

/// Default guard on `|q|` and `|Q|`.
pub const DEFAULT_EPS_Q: f64 = 1e-8;

const I: C64 = C64::new(0.0, 1.0);

/// Which root of `a(a − 1) = (l/ħ)²` multiplies the Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PowerBranch {
    /// `a = 1/2 − s`, singular at the origin for `l ≠ 0`.
    #[default]
    Minus,
    /// `a = 1/2 + s`, regular at the origin.
    Plus,
}

/// Sign `σ` in front of `X/2` in the width equation `iβ̇ = 2Zβ² − 2iYβ + σX/2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RiccatiSign {
    /// `σ = −1`, the sign produced by the `(Q, P)` linearization.
    #[default]
    Negative,
    /// `σ = +1`.
    Positive,
}

impl RiccatiSign {
    pub fn sigma(self) -> f64 {
        match self {
            RiccatiSign::Negative => -1.0,
            RiccatiSign::Positive => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SystemParams {
    pub l: f64,
    pub hbar: f64,
    pub branch: PowerBranch,
}

impl SystemParams {
    pub fn new(l: f64, hbar: f64, branch: PowerBranch) -> Result<Self> {
        if !(l.is_finite() && l >= 0.0) {
            return Err(Error::Config(format!("l must be finite and >= 0, got {l}")));
        }
        if !(hbar.is_finite() && hbar > 0.0) {
            return Err(Error::Config(format!("hbar must be positive, got {hbar}")));
        }
        Ok(Self { l, hbar, branch })
    }

    /// `s = √((l/ħ)² + 1/4)`.
    pub fn root(&self) -> f64 {
        let r = self.l / self.hbar;
        (r * r + 0.25).sqrt()
    }

    /// Exponent `a` of the `x^a` prefactor.
    pub fn power_exponent(&self) -> f64 {
        match self.branch {
            PowerBranch::Minus => 0.5 - self.root(),
            PowerBranch::Plus => 0.5 + self.root(),
        }
    }

    /// `ν = a + 1/2`: `1 − s` on the minus branch, `1 + s` on the plus branch.
    pub fn phase_prefactor(&self) -> f64 {
        match self.branch {
            PowerBranch::Minus => 1.0 - self.root(),
            PowerBranch::Plus => 1.0 + self.root(),
        }
    }

    /// Whether `∫₀^∞ x^{2a} e^{−bx²} dx` converges at the origin.
    pub fn normalizable(&self) -> bool {
        2.0 * self.power_exponent() > -1.0
    }
}

/// Complex guiding trajectory `(q, p)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuidingState {
    pub q: C64,
    pub p: C64,
}

/// Solution `(Q, P)` of the linear flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearState {
    pub big_q: C64,
    pub big_p: C64,
}

impl LinearState {
    pub fn as_vector(&self) -> [C64; 2] {
        [self.big_q, self.big_p]
    }
}

fn guard(q: C64, params: &SystemParams, eps_q: f64) -> Result<()> {
    if params.l != 0.0 && !(q.norm() > eps_q) {
        return Err(Error::Singular {
            t: f64::NAN,
            reason: format!("|q| = {:.3e} <= {eps_q:.1e} with l != 0", q.norm()),
        });
    }
    Ok(())
}

/// Right-hand side of the guiding equations
/// `q̇ = Zp + Yq`, `ṗ = −Xq − Yp + Zl²/q³`.
pub fn guiding_rhs(state: &GuidingState, c: &Coefficients, params: &SystemParams, eps_q: f64) -> Result<GuidingState> {
    guard(state.q, params, eps_q)?;
    let GuidingState { q, p } = *state;
    let dq = p * c.z + q * c.y;
    let mut dp = -q * c.x - p * c.y;
    if params.l != 0.0 {
        dp += c.z * params.l * params.l / (q * q * q);
    }
    Ok(GuidingState { q: dq, p: dp })
}

/// `Q̇ = YQ + ZP`, `Ṗ = −XQ − YP`.
pub fn linear_rhs(state: &LinearState, c: &Coefficients) -> LinearState {
    let [dq, dp] = c.flow_matrix().apply(state.as_vector());
    LinearState { big_q: dq, big_p: dp }
}

/// `β̇ = −i(2Zβ² − 2iYβ + σX/2)`.
pub fn riccati_rhs(beta: C64, c: &Coefficients, sign: RiccatiSign) -> C64 {
    -I * (beta * beta * (2.0 * c.z) - I * beta * (2.0 * c.y) + sign.sigma() * c.x / 2.0)
}

/// `β = −(i/2)·P/Q`.
pub fn beta_from_linear(state: &LinearState, eps_q: f64) -> Result<C64> {
    if !(state.big_q.norm() > eps_q) {
        return Err(Error::Degenerate(format!("|Q| = {:.3e} <= {eps_q:.1e}", state.big_q.norm())));
    }
    Ok(-0.5 * I * state.big_p / state.big_q)
}

/// Time derivative of `−(i/2)·P/Q` by the chain rule.
pub fn beta_rate_from_linear(state: &LinearState, rate: &LinearState) -> C64 {
    let LinearState { big_q: q, big_p: p } = *state;
    -0.5 * I * (rate.big_p * q - p * rate.big_q) / (q * q)
}

/// Width implied by the guiding trajectory, `β = −ip/(2q) − l/(2q²)`.
pub fn beta_from_guiding(state: &GuidingState, params: &SystemParams) -> C64 {
    let GuidingState { q, p } = *state;
    -I * p / (2.0 * q) - params.l / (2.0 * q * q)
}

/// Fixed point of the width equation with `Re β > 0`, if one exists.
pub fn fixed_point_beta(c: &Coefficients, sign: RiccatiSign) -> Option<C64> {
    if c.z == 0.0 {
        return None;
    }
    // 2Zβ² − 2iYβ + σX/2 = 0  ⇒  β = (iY ± √(−Y² − σXZ)) / 2Z
    let disc = C64::new(-c.y * c.y - sign.sigma() * c.x * c.z, 0.0).sqrt();
    [1.0, -1.0]
        .into_iter()
        .map(|pm| (I * c.y + disc * pm) / (2.0 * c.z))
        .find(|b| b.re > 0.0)
}

/// Guiding initial data compatible with width `β`, so that the packet
/// exponent built from `(q, p)` equals `−βx²`.
///
/// Without an explicit `q`, `l = 0` uses `q = 1`; `l ≠ 0` uses
/// `q = i·√(l / 2Re β)`, on which `|q|² = l/(2 Re β)` for all time.
pub fn guiding_for_width(beta: C64, q: Option<C64>, params: &SystemParams) -> Result<GuidingState> {
    let l = params.l;
    let q = match q {
        Some(q) => q,
        None if l == 0.0 => C64::new(1.0, 0.0),
        None => {
            if !(beta.re > 0.0) {
                return Err(Error::Config("default guiding data needs Re(beta0) > 0".into()));
            }
            I * (l / (2.0 * beta.re)).sqrt()
        }
    };
    if q.norm() == 0.0 {
        return Err(Error::Config("q0 must be nonzero".into()));
    }
    let p = 2.0 * I * q * beta + I * l / q;
    Ok(GuidingState { q, p })
}

/// `H = ½[Zp² + 2Ypq + Xq² + Zl²/q²]`.
pub fn classical_hamiltonian(state: &GuidingState, c: &Coefficients, params: &SystemParams, eps_q: f64) -> Result<C64> {
    guard(state.q, params, eps_q)?;
    let GuidingState { q, p } = *state;
    let mut h = p * p * c.z + p * q * (2.0 * c.y) + q * q * c.x;
    if params.l != 0.0 {
        h += c.z * params.l * params.l / (q * q);
    }
    Ok(0.5 * h)
}

/// `L = p·q̇ − H`.
pub fn lagrangian(state: &GuidingState, dq: C64, c: &Coefficients, params: &SystemParams, eps_q: f64) -> Result<C64> {
    Ok(state.p * dq - classical_hamiltonian(state, c, params, eps_q)?)
}

/// Time-`period` map of the linear flow; columns are the images of the
/// basis vectors `(1, 0)` and `(0, 1)`.
pub fn monodromy(schedule: &CoefficientSchedule, period: f64, control: &StepControl) -> Result<[[C64; 2]; 2]> {
    let one = C64::new(1.0, 0.0);
    let zero = C64::new(0.0, 0.0);
    if period == 0.0 {
        return Ok([[one, zero], [zero, one]]);
    }
    if !(period > 0.0) {
        return Err(Error::Config(format!("monodromy period must be >= 0, got {period}")));
    }
    schedule.check_covers(period)?;
    let rhs = |t: f64, y: &[C64; 4]| -> Result<[C64; 4]> {
        let m = schedule.evaluate(t)?.flow_matrix();
        let [a, b] = m.apply([y[0], y[1]]);
        let [c, d] = m.apply([y[2], y[3]]);
        Ok([a, b, c, d])
    };
    let run = dopri5(rhs, 0.0, [one, zero, zero, one], period, control, &[], false, |_, _| Ok(()))?;
    let y = run.y_end;
    Ok([[y[0], y[2]], [y[1], y[3]]])
}

pub fn det2(m: &[[C64; 2]; 2]) -> C64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}
