//! Time-dependent coefficients `X(t)`, `Y(t)`, `Z(t)` of the generalized
//! singular oscillator and the linear flow matrix they generate.
//!
//! Three schedule kinds are supported: constant, sums of sinusoids, and
//! tabulated samples joined by a clamped cubic spline. Any schedule can be
//! slowed down by a factor `ε` (the slowness), which evaluates the base
//! schedule at `ε·t`.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64 as C64;
use serde::Deserialize;

use crate::error::{Error, Result};

/// Absolute tolerance of the periodicity probe.
pub const PERIOD_PROBE_TOL: f64 = 1e-12;
const PERIOD_PROBE_POINTS: usize = 257;

/// Instantaneous values of the three drive coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Coefficients {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn flow_matrix(&self) -> FlowMatrix {
        flow_matrix(self.x, self.y, self.z)
    }

    /// `ω² = XZ − Y²`, the squared instantaneous frequency of the frozen flow.
    pub fn omega_squared(&self) -> f64 {
        self.x * self.z - self.y * self.y
    }

    fn max_abs_diff(&self, other: &Self) -> f64 {
        (self.x - other.x)
            .abs()
            .max((self.y - other.y).abs())
            .max((self.z - other.z).abs())
    }
}

/// The 2×2 generator of the linear Hamilton flow `v̇ = M v`,
/// `M = [[Y, Z], [−X, −Y]]`. The matrix `ℋ` of the flow equation is `−M`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowMatrix {
    m: [[f64; 2]; 2],
}

impl FlowMatrix {
    pub fn rhs_matrix(&self) -> [[f64; 2]; 2] {
        self.m
    }

    pub fn cal_h(&self) -> [[f64; 2]; 2] {
        let m = self.m;
        [[-m[0][0], -m[0][1]], [-m[1][0], -m[1][1]]]
    }

    pub fn trace(&self) -> f64 {
        self.m[0][0] + self.m[1][1]
    }

    pub fn det(&self) -> f64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    /// `M v` for a complex two-vector.
    pub fn apply(&self, v: [C64; 2]) -> [C64; 2] {
        let m = self.m;
        [v[0] * m[0][0] + v[1] * m[0][1], v[0] * m[1][0] + v[1] * m[1][1]]
    }

    /// `ℋ v = −M v`.
    pub fn apply_cal_h(&self, v: [C64; 2]) -> [C64; 2] {
        let w = self.apply(v);
        [-w[0], -w[1]]
    }
}

pub fn flow_matrix(x: f64, y: f64, z: f64) -> FlowMatrix {
    FlowMatrix {
        m: [[y, z], [-x, -y]],
    }
}

/// One term `amplitude · sin(frequency · t + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sinusoid {
    pub amplitude: f64,
    pub frequency: f64,
    #[serde(default)]
    pub phase: f64,
}

/// `offset + Σ amplitude·sin(frequency·t + phase)`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Harmonic {
    #[serde(default)]
    pub offset: f64,
    #[serde(default)]
    pub terms: Vec<Sinusoid>,
}

impl Harmonic {
    pub fn constant(offset: f64) -> Self {
        Self {
            offset,
            terms: Vec::new(),
        }
    }

    pub fn single(offset: f64, amplitude: f64, frequency: f64, phase: f64) -> Self {
        Self {
            offset,
            terms: vec![Sinusoid {
                amplitude,
                frequency,
                phase,
            }],
        }
    }

    fn value(&self, t: f64) -> f64 {
        self.terms.iter().fold(self.offset, |acc, s| {
            acc + s.amplitude * (s.frequency * t + s.phase).sin()
        })
    }

    fn derivative(&self, t: f64) -> f64 {
        self.terms.iter().fold(0.0, |acc, s| {
            acc + s.amplitude * s.frequency * (s.frequency * t + s.phase).cos()
        })
    }

    fn frequencies(&self) -> impl Iterator<Item = f64> + '_ {
        self.terms
            .iter()
            .filter(|s| s.amplitude != 0.0 && s.frequency != 0.0)
            .map(|s| s.frequency.abs())
    }
}

/// Cubic spline with prescribed end slopes.
#[derive(Debug, Clone, PartialEq)]
pub struct ClampedSpline {
    knots: Vec<f64>,
    values: Vec<f64>,
    second: Vec<f64>,
}

impl ClampedSpline {
    /// Builds the spline with end slopes estimated from the quadratic through
    /// the three outermost samples (the secant when only two samples exist).
    pub fn new(knots: &[f64], values: &[f64]) -> Result<Self> {
        validate_knots(knots, values)?;
        let (s0, s1) = end_slopes(knots, values);
        Self::with_slopes(knots, values, s0, s1)
    }

    pub fn with_slopes(knots: &[f64], values: &[f64], start_slope: f64, end_slope: f64) -> Result<Self> {
        validate_knots(knots, values)?;
        let n = knots.len();
        let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
        let secant: Vec<f64> = (0..n - 1).map(|i| (values[i + 1] - values[i]) / h[i]).collect();

        // Tridiagonal system for the knot second derivatives.
        let mut sub = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut sup = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        diag[0] = 2.0 * h[0];
        sup[0] = h[0];
        rhs[0] = 6.0 * (secant[0] - start_slope);
        for i in 1..n - 1 {
            sub[i] = h[i - 1];
            diag[i] = 2.0 * (h[i - 1] + h[i]);
            sup[i] = h[i];
            rhs[i] = 6.0 * (secant[i] - secant[i - 1]);
        }
        sub[n - 1] = h[n - 2];
        diag[n - 1] = 2.0 * h[n - 2];
        rhs[n - 1] = 6.0 * (end_slope - secant[n - 2]);

        let second = solve_tridiagonal(&sub, &diag, &sup, &rhs);
        Ok(Self {
            knots: knots.to_vec(),
            values: values.to_vec(),
            second,
        })
    }

    pub fn start(&self) -> f64 {
        self.knots[0]
    }

    pub fn end(&self) -> f64 {
        *self.knots.last().unwrap()
    }

    fn locate(&self, t: f64) -> Result<usize> {
        let (a, b) = (self.start(), self.end());
        if !(a..=b).contains(&t) {
            return Err(Error::Domain { t, start: a, end: b });
        }
        let idx = self.knots.partition_point(|&k| k <= t);
        Ok(idx.saturating_sub(1).min(self.knots.len() - 2))
    }

    pub fn value(&self, t: f64) -> Result<f64> {
        let i = self.locate(t)?;
        let h = self.knots[i + 1] - self.knots[i];
        let a = (self.knots[i + 1] - t) / h;
        let b = (t - self.knots[i]) / h;
        let (m0, m1) = (self.second[i], self.second[i + 1]);
        Ok(a * self.values[i]
            + b * self.values[i + 1]
            + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0)
    }

    pub fn derivative(&self, t: f64) -> Result<f64> {
        let i = self.locate(t)?;
        let h = self.knots[i + 1] - self.knots[i];
        let a = (self.knots[i + 1] - t) / h;
        let b = (t - self.knots[i]) / h;
        let (m0, m1) = (self.second[i], self.second[i + 1]);
        Ok((self.values[i + 1] - self.values[i]) / h
            - (3.0 * a * a - 1.0) / 6.0 * h * m0
            + (3.0 * b * b - 1.0) / 6.0 * h * m1)
    }
}

fn validate_knots(knots: &[f64], values: &[f64]) -> Result<()> {
    if knots.len() < 2 || knots.len() != values.len() {
        return Err(Error::Config(
            "tabulated schedule needs at least two samples of each coefficient".into(),
        ));
    }
    if knots.iter().chain(values).any(|v| !v.is_finite()) {
        return Err(Error::Config("tabulated schedule contains non-finite values".into()));
    }
    if knots.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("tabulated times must be strictly increasing".into()));
    }
    Ok(())
}

fn end_slopes(t: &[f64], y: &[f64]) -> (f64, f64) {
    let n = t.len();
    if n == 2 {
        let s = (y[1] - y[0]) / (t[1] - t[0]);
        return (s, s);
    }
    let quad_slope = |x0: f64, pts: [(f64, f64); 3]| {
        let [(a, ya), (b, yb), (c, yc)] = pts;
        ya * (2.0 * x0 - b - c) / ((a - b) * (a - c))
            + yb * (2.0 * x0 - a - c) / ((b - a) * (b - c))
            + yc * (2.0 * x0 - a - b) / ((c - a) * (c - b))
    };
    let head = [(t[0], y[0]), (t[1], y[1]), (t[2], y[2])];
    let tail = [(t[n - 3], y[n - 3]), (t[n - 2], y[n - 2]), (t[n - 1], y[n - 1])];
    (quad_slope(t[0], head), quad_slope(t[n - 1], tail))
}

fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = sup[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let denom = diag[i] - sub[i] * c[i - 1];
        c[i] = sup[i] / denom;
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / denom;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleKind {
    Constant(Coefficients),
    Sinusoidal {
        x: Harmonic,
        y: Harmonic,
        z: Harmonic,
    },
    Tabulated {
        x: ClampedSpline,
        y: ClampedSpline,
        z: ClampedSpline,
    },
}

/// A coefficient schedule, immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSchedule {
    kind: ScheduleKind,
    /// Declared period in base (unslowed) time.
    declared_period: Option<f64>,
    slowness: f64,
}

impl CoefficientSchedule {
    pub fn constant(x: f64, y: f64, z: f64) -> Self {
        Self::from_kind(ScheduleKind::Constant(Coefficients::new(x, y, z)))
    }

    pub fn sinusoidal(x: Harmonic, y: Harmonic, z: Harmonic) -> Self {
        Self::from_kind(ScheduleKind::Sinusoidal { x, y, z })
    }

    /// Builds a tabulated schedule from `(t, X, Y, Z)` rows.
    pub fn tabulated(rows: &[(f64, Coefficients)]) -> Result<Self> {
        let t: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let col = |f: fn(&Coefficients) -> f64| rows.iter().map(|r| f(&r.1)).collect::<Vec<_>>();
        Ok(Self::from_kind(ScheduleKind::Tabulated {
            x: ClampedSpline::new(&t, &col(|c| c.x))?,
            y: ClampedSpline::new(&t, &col(|c| c.y))?,
            z: ClampedSpline::new(&t, &col(|c| c.z))?,
        }))
    }

    /// Reads a CSV with header `t,X,Y,Z`.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| csv_error(path, e))?;
        let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
        let expected = ["t", "X", "Y", "Z"];
        if header.len() != 4 || header.iter().zip(expected).any(|(h, e)| h != e) {
            return Err(Error::Config(format!(
                "{}: expected header `t,X,Y,Z`, found `{}`",
                path.display(),
                header.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut rows = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| csv_error(path, e))?;
            let mut vals = [0.0; 4];
            for (slot, field) in vals.iter_mut().zip(record.iter()) {
                *slot = field.parse().map_err(|_| {
                    Error::Config(format!("{}: row {}: bad number `{field}`", path.display(), line + 2))
                })?;
            }
            rows.push((vals[0], Coefficients::new(vals[1], vals[2], vals[3])));
        }
        Self::tabulated(&rows)
    }

    fn from_kind(kind: ScheduleKind) -> Self {
        Self {
            kind,
            declared_period: None,
            slowness: 1.0,
        }
    }

    pub fn kind(&self) -> &ScheduleKind {
        &self.kind
    }

    pub fn slowness(&self) -> f64 {
        self.slowness
    }

    /// Evaluates the base schedule at `ε·t`.
    pub fn with_slowness(mut self, slowness: f64) -> Result<Self> {
        if !(slowness.is_finite() && slowness > 0.0) {
            return Err(Error::Config(format!("slowness must be positive, got {slowness}")));
        }
        self.slowness = slowness;
        Ok(self)
    }

    /// Declares a period in base time units and runs the periodicity probe.
    pub fn with_period(mut self, period: f64) -> Result<Self> {
        if !(period.is_finite() && period > 0.0) {
            return Err(Error::Config(format!("period must be positive, got {period}")));
        }
        self.declared_period = Some(period);
        self.check_periodicity(period)?;
        Ok(self)
    }

    fn base_evaluate(&self, s: f64) -> Result<Coefficients> {
        match &self.kind {
            ScheduleKind::Constant(c) => Ok(*c),
            ScheduleKind::Sinusoidal { x, y, z } => Ok(Coefficients::new(x.value(s), y.value(s), z.value(s))),
            ScheduleKind::Tabulated { x, y, z } => Ok(Coefficients::new(x.value(s)?, y.value(s)?, z.value(s)?)),
        }
    }

    fn base_derivative(&self, s: f64) -> Result<Coefficients> {
        match &self.kind {
            ScheduleKind::Constant(_) => Ok(Coefficients::new(0.0, 0.0, 0.0)),
            ScheduleKind::Sinusoidal { x, y, z } => Ok(Coefficients::new(
                x.derivative(s),
                y.derivative(s),
                z.derivative(s),
            )),
            ScheduleKind::Tabulated { x, y, z } => Ok(Coefficients::new(
                x.derivative(s)?,
                y.derivative(s)?,
                z.derivative(s)?,
            )),
        }
    }

    pub fn evaluate(&self, t: f64) -> Result<Coefficients> {
        self.base_evaluate(self.slowness * t).map_err(|e| self.rescale_domain(e))
    }

    /// Time derivative of the coefficients.
    pub fn derivative(&self, t: f64) -> Result<Coefficients> {
        let d = self.base_derivative(self.slowness * t).map_err(|e| self.rescale_domain(e))?;
        let e = self.slowness;
        Ok(Coefficients::new(e * d.x, e * d.y, e * d.z))
    }

    fn rescale_domain(&self, err: Error) -> Error {
        match err {
            Error::Domain { t, start, end } => Error::Domain {
                t: t / self.slowness,
                start: start / self.slowness,
                end: end / self.slowness,
            },
            other => other,
        }
    }

    /// Time interval on which the schedule is defined, if bounded.
    pub fn interval(&self) -> Option<(f64, f64)> {
        match &self.kind {
            ScheduleKind::Tabulated { x, .. } => Some((x.start() / self.slowness, x.end() / self.slowness)),
            _ => None,
        }
    }

    /// Declared period, or for sums of sinusoids the least common period of
    /// all components when their frequencies are commensurate.
    pub fn period(&self) -> Option<f64> {
        let base = self.declared_period.or_else(|| match &self.kind {
            ScheduleKind::Sinusoidal { x, y, z } => {
                let freqs: Vec<f64> = x.frequencies().chain(y.frequencies()).chain(z.frequencies()).collect();
                common_period(&freqs)
            }
            _ => None,
        })?;
        Some(base / self.slowness)
    }

    fn check_periodicity(&self, period: f64) -> Result<()> {
        let (start, span) = match &self.kind {
            ScheduleKind::Tabulated { x, .. } => {
                let span = x.end() - x.start() - period;
                if span < 0.0 {
                    return Err(Error::Config(format!(
                        "declared period {period} exceeds the tabulated interval"
                    )));
                }
                (x.start(), span)
            }
            _ => (0.0, period),
        };
        let mut worst = 0.0_f64;
        for i in 0..PERIOD_PROBE_POINTS {
            let s = start + span * i as f64 / (PERIOD_PROBE_POINTS - 1) as f64;
            let a = self.base_evaluate(s)?;
            let b = self.base_evaluate(s + period)?;
            worst = worst.max(a.max_abs_diff(&b));
        }
        if worst >= PERIOD_PROBE_TOL {
            return Err(Error::Config(format!(
                "declared period {period} fails the periodicity probe (max jump {worst:.3e})"
            )));
        }
        Ok(())
    }

    /// Checks `Z(t) > 0` on a probe grid over `[0, t_end]`.
    pub fn check_positive_kinetic(&self, t_end: f64) -> Result<()> {
        let probes = 1025;
        for i in 0..probes {
            let t = t_end * i as f64 / (probes - 1) as f64;
            let c = self.evaluate(t)?;
            if !(c.z > 0.0) {
                return Err(Error::Config(format!(
                    "Z(t) = {} is not positive at t = {t}; set allow_nonpositive_z to override",
                    c.z
                )));
            }
        }
        Ok(())
    }

    /// Checks that the schedule is defined on `[0, t_end]`.
    pub fn check_covers(&self, t_end: f64) -> Result<()> {
        if let Some((a, b)) = self.interval() {
            if a > 0.0 || b < t_end {
                return Err(Error::Config(format!(
                    "schedule interval [{a}, {b}] does not cover the run [0, {t_end}]"
                )));
            }
        }
        Ok(())
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        if let csv::ErrorKind::Io(io) = e.into_kind() {
            return Error::io(path, io);
        }
        unreachable!()
    }
    Error::Config(format!("{}: {e}", path.display()))
}

fn common_period(freqs: &[f64]) -> Option<f64> {
    let fmin = freqs.iter().cloned().fold(f64::INFINITY, f64::min);
    if !fmin.is_finite() {
        return None;
    }
    (1..=64).find_map(|k| {
        let base = fmin / k as f64;
        let commensurate = freqs.iter().all(|f| {
            let ratio = f / base;
            (ratio - ratio.round()).abs() < 1e-9 * ratio.max(1.0)
        });
        commensurate.then(|| 2.0 * PI / base)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_evaluates_anywhere() {
        let s = CoefficientSchedule::constant(1.0, 0.0, 1.0);
        assert_eq!(s.evaluate(7.3).unwrap(), Coefficients::new(1.0, 0.0, 1.0));
        assert_eq!(s.period(), None);
    }

    #[test]
    fn sinusoid_at_origin_returns_offset() {
        let s = CoefficientSchedule::sinusoidal(
            Harmonic::single(1.0, 0.5, 1.0, 0.0),
            Harmonic::constant(0.0),
            Harmonic::constant(1.0),
        );
        assert_eq!(s.evaluate(0.0).unwrap().x, 1.0);
        assert!((s.period().unwrap() - 2.0 * PI).abs() < 1e-15);
    }

    #[test]
    fn mixed_frequencies_share_fundamental_period() {
        let w = 1.7;
        let s = CoefficientSchedule::sinusoidal(
            Harmonic::single(1.0, 0.5, w, 0.0),
            Harmonic::single(0.0, 0.1, 2.0 * w, 0.3),
            Harmonic::constant(1.0),
        );
        assert!((s.period().unwrap() - 2.0 * PI / w).abs() < 1e-12);
        let slow = s.clone().with_slowness(0.1).unwrap();
        assert!((slow.period().unwrap() - 20.0 * PI / w).abs() < 1e-10);
    }

    #[test]
    fn incommensurate_frequencies_have_no_period() {
        let s = CoefficientSchedule::sinusoidal(
            Harmonic::single(1.0, 0.5, 1.0, 0.0),
            Harmonic::single(0.0, 0.1, 2.0_f64.sqrt(), 0.0),
            Harmonic::constant(1.0),
        );
        assert_eq!(s.period(), None);
    }

    #[test]
    fn wrong_declared_period_is_rejected() {
        let s = CoefficientSchedule::sinusoidal(
            Harmonic::single(1.0, 0.5, 1.0, 0.0),
            Harmonic::constant(0.0),
            Harmonic::constant(1.0),
        );
        assert!(s.clone().with_period(2.0 * PI).is_ok());
        assert!(matches!(s.with_period(3.0), Err(Error::Config(_))));
    }

    #[test]
    fn flow_matrix_layout() {
        let m = flow_matrix(1.0, 0.0, 1.0);
        assert_eq!(m.rhs_matrix(), [[0.0, 1.0], [-1.0, 0.0]]);
        assert_eq!(flow_matrix(0.0, 0.0, 0.0).rhs_matrix(), [[0.0; 2]; 2]);
        let m = flow_matrix(2.0, 3.0, 5.0);
        assert_eq!(m.rhs_matrix(), [[3.0, 5.0], [-2.0, -3.0]]);
        assert_eq!(m.det(), 1.0);
        assert_eq!(m.cal_h(), [[-3.0, -5.0], [2.0, 3.0]]);
    }

    #[test]
    fn tabulated_out_of_interval_is_domain_error() {
        let s = CoefficientSchedule::tabulated(&[
            (0.0, Coefficients::new(1.0, 0.0, 1.0)),
            (1.0, Coefficients::new(2.0, 0.0, 1.0)),
        ])
        .unwrap();
        assert!(matches!(s.evaluate(1.5), Err(Error::Domain { .. })));
        assert!(s.evaluate(1.0).is_ok());
    }

    #[test]
    fn tabulated_rejects_non_increasing_times() {
        let r = CoefficientSchedule::tabulated(&[
            (0.0, Coefficients::new(1.0, 0.0, 1.0)),
            (0.0, Coefficients::new(2.0, 0.0, 1.0)),
        ]);
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn spline_reproduces_cubics_exactly() {
        // Clamped ends with exact slopes reproduce any cubic.
        let f = |t: f64| 1.0 - 2.0 * t + 0.5 * t * t + 0.25 * t * t * t;
        let df = |t: f64| -2.0 + t + 0.75 * t * t;
        let knots: Vec<f64> = (0..7).map(|i| 0.3 * i as f64 + 0.05 * (i * i) as f64).collect();
        let vals: Vec<f64> = knots.iter().map(|&t| f(t)).collect();
        let sp = ClampedSpline::with_slopes(&knots, &vals, df(knots[0]), df(knots[6])).unwrap();
        for i in 0..50 {
            let t = knots[0] + (knots[6] - knots[0]) * i as f64 / 49.0;
            assert!((sp.value(t).unwrap() - f(t)).abs() < 1e-12);
            assert!((sp.derivative(t).unwrap() - df(t)).abs() < 1e-11);
        }
    }

    #[test]
    fn sinusoid_derivative_matches_finite_difference() {
        let s = CoefficientSchedule::sinusoidal(
            Harmonic::single(1.0, 0.5, 1.3, 0.2),
            Harmonic::single(0.0, 0.4, 2.6, 0.0),
            Harmonic::single(1.0, 0.2, 1.3, 1.0),
        )
        .with_slowness(0.5)
        .unwrap();
        let t = 0.77;
        let h = 1e-5;
        let d = s.derivative(t).unwrap();
        let fd = |f: fn(&Coefficients) -> f64| {
            (f(&s.evaluate(t + h).unwrap()) - f(&s.evaluate(t - h).unwrap())) / (2.0 * h)
        };
        assert!((d.x - fd(|c| c.x)).abs() < 1e-9);
        assert!((d.y - fd(|c| c.y)).abs() < 1e-9);
        assert!((d.z - fd(|c| c.z)).abs() < 1e-9);
    }

    #[test]
    fn kinetic_validation_flags_negative_z() {
        let s = CoefficientSchedule::constant(1.0, 0.0, -1.0);
        assert!(s.check_positive_kinetic(1.0).is_err());
    }
}
