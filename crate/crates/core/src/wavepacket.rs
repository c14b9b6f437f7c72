//! Grid evaluation of the packet in its two closed forms, the discretized
//! Hamiltonian and the finite-difference Schrödinger residual.

use std::path::Path;

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::classical::{beta_from_guiding, GuidingState, SystemParams};
use crate::error::{Error, Result};
use crate::integrate::{InitialData, Trajectory};
use crate::phases::PhaseLedger;
use crate::schedules::Coefficients;

const I: C64 = C64::new(0.0, 1.0);

/// Edge amplitude, relative to the peak, below which a packet counts as
/// fully contained in its grid.
pub const DEFAULT_TRUNCATION: f64 = 1e-10;
pub const MIN_GRID_POINTS: usize = 64;

/// Uniform grid on `[x_min, x_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpatialGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub n: usize,
    pub h: f64,
}

impl SpatialGrid {
    /// A grid for `params`: the half line `x_min > 0` is required when `l ≠ 0`.
    pub fn new(x_min: f64, x_max: f64, n: usize, params: &SystemParams) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite() && x_max > x_min) {
            return Err(Error::Config(format!("grid needs x_min < x_max, got [{x_min}, {x_max}]")));
        }
        if n < MIN_GRID_POINTS {
            return Err(Error::Config(format!("grid needs at least {MIN_GRID_POINTS} points, got {n}")));
        }
        if params.l != 0.0 && x_min <= 0.0 {
            return Err(Error::Config(format!(
                "l = {} needs a half-line grid with x_min > 0, got x_min = {x_min}",
                params.l
            )));
        }
        Ok(Self {
            x_min,
            x_max,
            n,
            h: (x_max - x_min) / (n - 1) as f64,
        })
    }

    pub fn x(&self, j: usize) -> f64 {
        if j + 1 == self.n {
            self.x_max
        } else {
            self.x_min + j as f64 * self.h
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.x(j)).collect()
    }

    /// Same interval, spacing halved.
    pub fn refined(&self) -> Self {
        let n = 2 * (self.n - 1) + 1;
        Self {
            n,
            h: (self.x_max - self.x_min) / (n - 1) as f64,
            ..*self
        }
    }

    fn starts_at_origin_side(&self) -> bool {
        self.x_min > 0.0
    }
}

/// Parameters a packet was evaluated from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PacketSnapshot {
    pub t: f64,
    pub q: [f64; 2],
    pub p: [f64; 2],
    pub beta: [f64; 2],
    pub k: [f64; 2],
    pub params: SystemParams,
}

impl PacketSnapshot {
    fn new(t: f64, q: C64, p: C64, beta: C64, k: C64, params: &SystemParams) -> Self {
        let pair = |z: C64| [z.re, z.im];
        Self {
            t,
            q: pair(q),
            p: pair(p),
            beta: pair(beta),
            k: pair(k),
            params: *params,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WavePacket {
    pub grid: SpatialGrid,
    pub amplitudes: Vec<C64>,
    pub snapshot: PacketSnapshot,
}

impl WavePacket {
    pub fn peak(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm()).fold(0.0, f64::max)
    }

    /// Refuses packets that are not contained in the grid. The left edge of
    /// a half-line grid is exempt for `l ≠ 0`: there the boundary is the
    /// origin and the prefactor may legitimately be large.
    pub fn check_truncation(&self, threshold: f64) -> Result<()> {
        let peak = self.peak();
        if !(peak > 0.0 && peak.is_finite()) {
            return Err(Error::Truncation(format!("packet peak is {peak}")));
        }
        let left_exempt = self.grid.starts_at_origin_side() && self.snapshot.params.l != 0.0;
        let mut edges = vec![("right", self.amplitudes[self.grid.n - 1].norm())];
        if !left_exempt {
            edges.push(("left", self.amplitudes[0].norm()));
        }
        for (side, value) in edges {
            if value > threshold * peak {
                return Err(Error::Truncation(format!(
                    "{side} edge amplitude is {:.3e} of the peak at t = {} (limit {threshold:.1e}); \
                     widen the grid or use a narrower packet",
                    value / peak,
                    self.snapshot.t
                )));
            }
        }
        Ok(())
    }

    /// Indices where `|Ψ| > rel·peak`.
    pub fn significant(&self, rel: f64) -> Vec<usize> {
        let cut = rel * self.peak();
        (0..self.grid.n).filter(|&j| self.amplitudes[j].norm() > cut).collect()
    }

    /// Writes `x,re,im,abs2` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        w.write_record(["x", "re", "im", "abs2"]).map_err(|e| csv_error(path, e))?;
        for (j, a) in self.amplitudes.iter().enumerate() {
            w.write_record([
                format!("{:.16e}", self.grid.x(j)),
                format!("{:.16e}", a.re),
                format!("{:.16e}", a.im),
                format!("{:.16e}", a.norm_sqr()),
            ])
            .map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::io(path, std::io::Error::other(format!("{other:?}"))),
    }
}

/// `x^a` for `x > 0`, or for any real `x` when `a` is 0 or 1 (`l = 0`).
fn power(x: f64, a: f64) -> f64 {
    if a == 0.0 {
        1.0
    } else if a == 1.0 {
        x
    } else {
        x.powf(a)
    }
}

fn finish(grid: &SpatialGrid, amplitudes: Vec<C64>, snapshot: PacketSnapshot) -> Result<WavePacket> {
    if let Some(j) = amplitudes.iter().position(|a| !(a.re.is_finite() && a.im.is_finite())) {
        return Err(Error::Truncation(format!(
            "amplitude overflow at x = {} (t = {}); use a larger Re(beta) or a wider grid",
            grid.x(j),
            snapshot.t
        )));
    }
    Ok(WavePacket {
        grid: *grid,
        amplitudes,
        snapshot,
    })
}

/// `Ψ = x^a·exp{(1/ħ)[½(l + ipq)·(((x−q)/q)² + 2(x−q)/q) + k]}`.
///
/// `beta` is recorded in the snapshot only; the width is implied by `(q, p)`.
pub fn evaluate_packet(
    grid: &SpatialGrid,
    t: f64,
    guiding: &GuidingState,
    beta: C64,
    k: C64,
    params: &SystemParams,
    eps_q: f64,
) -> Result<WavePacket> {
    let GuidingState { q, p } = *guiding;
    if !(q.norm() > eps_q) {
        return Err(Error::Singular {
            t,
            reason: format!("|q| = {:.3e} is below the guard", q.norm()),
        });
    }
    let a = params.power_exponent();
    let lead = 0.5 * (params.l + I * p * q);
    let amplitudes = grid
        .points()
        .into_iter()
        .map(|x| {
            let u = (x - q) / q;
            let exponent = (lead * (u * u + 2.0 * u) + k) / params.hbar;
            exponent.exp() * power(x, a)
        })
        .collect();
    finish(grid, amplitudes, PacketSnapshot::new(t, q, p, beta, k, params))
}

/// Rearranged form
/// `Ψ = x^a·(QQ*(0)/QQ*(t))^{ν/2}·exp{(1/ħ)[−βx² − ½(l + ip₀q₀) + k₀]}·e^{iνΔθ}`
/// with `ν = a + 1/2`, built from the accumulated angles of `ledger`.
pub fn evaluate_packet_factored(
    grid: &SpatialGrid,
    beta: C64,
    ledger: &PhaseLedger,
    initial: &InitialData,
    params: &SystemParams,
) -> Result<WavePacket> {
    let a = params.power_exponent();
    let nu = params.phase_prefactor();
    let GuidingState { q: q0, p: p0 } = initial.guiding;
    let c0 = -0.5 * (params.l + I * p0 * q0) + initial.k;
    let scale = (-0.5 * nu * ledger.ln_qq + I * nu * ledger.theta).exp();
    let amplitudes = grid
        .points()
        .into_iter()
        .map(|x| ((-beta * x * x + c0) / params.hbar).exp() * scale * power(x, a))
        .collect();
    // The effective constant term, for the record.
    let k_eff = c0 + 0.5 * (params.l + I * p0 * q0) + I * params.hbar * nu * C64::new(ledger.theta, 0.5 * ledger.ln_qq);
    finish(grid, amplitudes, PacketSnapshot::new(ledger.t, q0, p0, beta, k_eff, params))
}

/// `HΨ = ½[−ħ²ZΨ″ − iħY(2xΨ′ + Ψ) + Xx²Ψ + Zl²/x²·Ψ]` with second-order
/// central differences. Values beyond the grid are taken as zero, so the
/// two end points are not meaningful.
pub fn apply_hamiltonian(packet: &WavePacket, c: &Coefficients, params: &SystemParams) -> WavePacket {
    let grid = &packet.grid;
    let psi = &packet.amplitudes;
    let n = grid.n;
    let h = grid.h;
    let hbar = params.hbar;
    let l2 = params.l * params.l;
    let zero = C64::new(0.0, 0.0);
    let out = (0..n)
        .map(|j| {
            let left = if j > 0 { psi[j - 1] } else { zero };
            let right = if j + 1 < n { psi[j + 1] } else { zero };
            let x = grid.x(j);
            let d1 = (right - left) / (2.0 * h);
            let d2 = (right - 2.0 * psi[j] + left) / (h * h);
            let mut v = -hbar * hbar * c.z * d2 - I * hbar * c.y * (2.0 * x * d1 + psi[j]) + c.x * x * x * psi[j];
            if l2 != 0.0 {
                v += c.z * l2 / (x * x) * psi[j];
            }
            0.5 * v
        })
        .collect();
    WavePacket {
        grid: *grid,
        amplitudes: out,
        snapshot: packet.snapshot,
    }
}

/// `∫|Ψ|²dx`.
///
/// For `l = 0` this is the trapezoid rule on the grid. Otherwise the
/// smooth factor `g = |Ψ|²/x^{2a}` is integrated against the weight
/// `x^{2a}`: analytically on `[0, x_min]` from a quadratic extrapolation of
/// `g`, by product Simpson near the origin and by plain Simpson further out.
pub fn grid_norm(packet: &WavePacket) -> f64 {
    let grid = &packet.grid;
    let f: Vec<f64> = packet.amplitudes.iter().map(|a| a.norm_sqr()).collect();
    let a = packet.snapshot.params.power_exponent();
    if packet.snapshot.params.l == 0.0 {
        let inner: f64 = f[1..grid.n - 1].iter().sum();
        return grid.h * (inner + 0.5 * (f[0] + f[grid.n - 1]));
    }
    let b = 2.0 * a;
    let h = grid.h;
    let xs = grid.points();
    let g: Vec<f64> = xs.iter().zip(&f).map(|(x, v)| v / x.powf(b)).collect();
    let moment = |lo: f64, hi: f64, k: i32| {
        let e = b + k as f64 + 1.0;
        (hi.powf(e) - lo.powf(e)) / e
    };

    // Head [0, x0] with g ≈ c0 + c1 x + c2 x².
    let (x0, x1, x2) = (xs[0], xs[1], xs[2]);
    let d01 = (g[1] - g[0]) / (x1 - x0);
    let d12 = (g[2] - g[1]) / (x2 - x1);
    let c2 = (d12 - d01) / (x2 - x0);
    let c1 = d01 - c2 * (x0 + x1);
    let c0 = g[0] - x0 * (c1 + c2 * x0);
    let mut total = c0 * moment(0.0, x0, 0) + c1 * moment(0.0, x0, 1) + c2 * moment(0.0, x0, 2);

    let near = 32.0 * h;
    let mut j = 0;
    while j + 2 < grid.n && xs[j] < near {
        let (lo, hi) = (xs[j], xs[j + 2]);
        let m0 = moment(lo, hi, 0);
        let m1 = moment(lo, hi, 1) - lo * m0;
        let m2 = moment(lo, hi, 2) - 2.0 * lo * moment(lo, hi, 1) + lo * lo * m0;
        let (g0, g1, g2) = (g[j], g[j + 1], g[j + 2]);
        total += g0 * m0 + 0.5 * (-3.0 * g0 + 4.0 * g1 - g2) * m1 / h + 0.5 * (g0 - 2.0 * g1 + g2) * m2 / (h * h);
        j += 2;
    }
    while j + 2 < grid.n {
        total += h / 3.0 * (f[j] + 4.0 * f[j + 1] + f[j + 2]);
        j += 2;
    }
    if j + 1 < grid.n {
        total += 0.5 * h * (f[j] + f[j + 1]);
    }
    total
}

/// Real `k₀` making the product-form packet of `(q₀, p₀)` unit-normalized.
pub fn normalize_k0(grid: &SpatialGrid, guiding: &GuidingState, params: &SystemParams, eps_q: f64) -> Result<f64> {
    let width = beta_from_guiding(guiding, params);
    if !(width.re > 0.0) {
        return Err(Error::Config(format!(
            "packet width {width} has Re(beta) <= 0 and cannot be normalized"
        )));
    }
    if !params.normalizable() {
        return Err(Error::Config(format!(
            "power {} is not square integrable at the origin (l/hbar = {} on the {:?} branch)",
            params.power_exponent(),
            params.l / params.hbar,
            params.branch
        )));
    }
    let packet = evaluate_packet(grid, 0.0, guiding, width, C64::new(0.0, 0.0), params, eps_q)?;
    packet.check_truncation(DEFAULT_TRUNCATION)?;
    Ok(-0.5 * params.hbar * grid_norm(&packet).ln())
}

/// Which width drives the evolved packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WidthSource {
    /// The product form as written: the width implied by the guiding pair.
    #[default]
    Guiding,
    /// The directly integrated width with the guiding constant term.
    Direct,
}

/// Anything that can produce the packet at time `t`.
pub trait PacketSource {
    fn params(&self) -> SystemParams;
    fn coefficients(&self, t: f64) -> Result<Coefficients>;
    fn packet(&self, grid: &SpatialGrid, t: f64) -> Result<WavePacket>;
}

/// Packets read off an integrated trajectory with dense output.
#[derive(Debug, Clone, Copy)]
pub struct EvolvedPacket<'a> {
    pub trajectory: &'a Trajectory,
    pub width: WidthSource,
    pub eps_q: f64,
}

impl PacketSource for EvolvedPacket<'_> {
    fn params(&self) -> SystemParams {
        self.trajectory.params
    }

    fn coefficients(&self, t: f64) -> Result<Coefficients> {
        self.trajectory.schedule.evaluate(t)
    }

    fn packet(&self, grid: &SpatialGrid, t: f64) -> Result<WavePacket> {
        let params = self.trajectory.params;
        let s = self.trajectory.state_at(t).ok_or_else(|| {
            Error::Config(format!(
                "no dense state at t = {t} (run lacks dense output or t is outside [0, {}])",
                self.trajectory.t_end
            ))
        })?;
        match self.width {
            WidthSource::Guiding => evaluate_packet(grid, t, &s.guiding(), s.beta, s.k, &params, self.eps_q),
            WidthSource::Direct => {
                let a = params.power_exponent();
                let c = -0.5 * (params.l + I * s.p * s.q) + s.k;
                let amplitudes = grid
                    .points()
                    .into_iter()
                    .map(|x| ((-s.beta * x * x + c) / params.hbar).exp() * power(x, a))
                    .collect();
                finish(grid, amplitudes, PacketSnapshot::new(t, s.q, s.p, s.beta, s.k, &params))
            }
        }
    }
}

/// Which grid points enter the residual norms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualWindow {
    pub truncation: f64,
    /// Points with `x` below this are excluded on half-line grids, where
    /// difference stencils cannot resolve the power law at the origin.
    pub origin_cut: f64,
}

impl Default for ResidualWindow {
    fn default() -> Self {
        Self {
            truncation: DEFAULT_TRUNCATION,
            origin_cut: 0.0,
        }
    }
}

/// `‖iħ(Ψ(t+δ) − Ψ(t−δ))/2δ − HΨ(t)‖ / ‖Ψ(t)‖` over interior points of
/// the window.
pub fn schrodinger_residual(
    source: &impl PacketSource,
    t: f64,
    dt_fd: f64,
    grid: &SpatialGrid,
    window: &ResidualWindow,
) -> Result<f64> {
    if !(dt_fd > 0.0) {
        return Err(Error::Config(format!("dt_fd must be positive, got {dt_fd}")));
    }
    let params = source.params();
    let now = source.packet(grid, t)?;
    now.check_truncation(window.truncation)?;
    let later = source.packet(grid, t + dt_fd)?;
    let earlier = source.packet(grid, t - dt_fd)?;
    let h_psi = apply_hamiltonian(&now, &source.coefficients(t)?, &params);
    let (mut num, mut den) = (0.0, 0.0);
    for j in 1..grid.n - 1 {
        if grid.x_min > 0.0 && grid.x(j) < window.origin_cut {
            continue;
        }
        let dt_psi = (later.amplitudes[j] - earlier.amplitudes[j]) / (2.0 * dt_fd);
        num += (I * params.hbar * dt_psi - h_psi.amplitudes[j]).norm_sqr();
        den += now.amplitudes[j].norm_sqr();
    }
    if den == 0.0 {
        return Err(Error::Truncation("residual window holds no amplitude".into()));
    }
    Ok((num / den).sqrt())
}
