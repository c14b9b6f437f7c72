//! Run orchestration: integrate, analyse, write `trajectory.csv`,
//! `packet_<t>.csv` and `summary.json`; parameter sweeps on top.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::Serialize;

use crate::classical::{beta_rate_from_linear, det2, linear_rhs, monodromy, riccati_rhs, SystemParams};
use crate::config::{Analyses, RunConfig, RunPlan, SweepAxis};
use crate::error::{Error, Result};
use crate::integrate::{BundledState, Propagator, Trajectory};
use crate::phases::{
    adiabatic_hannay_angle, frame_from_linear, frame_rate, gamma_total, gamma_total_from_angles, hannay_rate_beta_raw,
    hannay_rate_frame_raw, log_qq_rate, total_rate_frame_raw, total_rate_raw, transport_residual, PhaseLedger,
};
use crate::schedules::CoefficientSchedule;
use crate::wavepacket::{
    csv_error, evaluate_packet_factored, evaluate_packet, grid_norm, schrodinger_residual, EvolvedPacket,
    ResidualWindow, SpatialGrid, WavePacket, WidthSource,
};

/// Version of the `summary.json` layout.
pub const SCHEMA_VERSION: u32 = 1;

/// Limits of the run-level checks.
pub mod limits {
    pub const REALNESS: f64 = 1e-8;
    pub const RICCATI_GAP: f64 = 1e-8;
    pub const AREA_DRIFT: f64 = 1e-8;
    pub const MONODROMY_DET: f64 = 1e-8;
    pub const RATE_GAP: f64 = 1e-8;
    pub const TRANSPORT: f64 = 1e-8;
    pub const K_IDENTITY: f64 = 1e-7;
    pub const GAMMA_FORMS: f64 = 1e-8;
    pub const FORM_GAP: f64 = 1e-8;
    pub const NORM_DRIFT: f64 = 1e-6;
    pub const ORDER_CENTRE: f64 = 2.0;
    pub const ORDER_SPREAD: f64 = 0.3;
    /// Amplitudes below this fraction of the peak are left out of the
    /// pointwise form comparison.
    pub const FORM_SIGNIFICANCE: f64 = 1e-12;
    /// Packet comparison times per run.
    pub const FORM_TIMES: usize = 16;
    /// Sweep: `γ^G/Δθ_H` against the prefactor.
    pub const PREFACTOR: f64 = 1e-10;
    /// Sweep: spread of `Δθ_H` across rows on the `l` and `ħ` axes.
    pub const HANNAY_SPREAD: f64 = 1e-8;
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
}

impl Check {
    fn below(name: &str, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            limit,
            pass: value < limit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualLevel {
    pub n: usize,
    pub h: f64,
    pub dt_fd: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualStudy {
    pub t: f64,
    /// Absolute `x` below which half-line points are excluded.
    pub origin_cut: f64,
    pub levels: Vec<ResidualLevel>,
    /// `ln(r_k/r_{k+1}) / ln(h_k/h_{k+1})`.
    pub orders: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdiabaticRow {
    pub slowness: f64,
    pub period: f64,
    pub theta_h: f64,
    pub accepted_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdiabaticStudy {
    pub rows: Vec<AdiabaticRow>,
    /// `|Δθ_H(ε_k) − Δθ_H(ε_{k+1})|`.
    pub differences: Vec<f64>,
    /// `C·ε_k`.
    pub cauchy_bounds: Vec<f64>,
    /// `2Δθ_H(ε/2) − Δθ_H(ε)`.
    pub richardson_first: Vec<f64>,
    /// Limit with the `ε` and `ε²` terms removed.
    pub extrapolated: f64,
    /// `½∮(Z dY − Y dZ)/(Z ω)` over one cycle.
    pub line_integral: f64,
    pub limit_error: f64,
}

/// Every diagnostic a run can produce; `None` when not computed.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub accepted_steps: Option<usize>,
    pub rejected_steps: Option<usize>,
    pub max_realness_drift: Option<f64>,
    pub max_riccati_gap: Option<f64>,
    pub max_area_drift: Option<f64>,
    pub monodromy_det: Option<[f64; 2]>,
    pub monodromy_span: Option<f64>,
    pub max_hannay_rate_gap: Option<f64>,
    pub max_total_rate_gap: Option<f64>,
    pub max_transport_residual: Option<f64>,
    pub max_k_identity_gap: Option<f64>,
    pub max_gamma_form_gap: Option<f64>,
    pub max_form_gap: Option<f64>,
    pub max_norm_drift: Option<f64>,
    pub residual_series: Vec<[f64; 2]>,
    pub residual_study: Option<ResidualStudy>,
    pub adiabatic: Option<AdiabaticStudy>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorInfo {
    pub code: String,
    pub exit_code: i32,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSetup {
    pub params: SystemParams,
    pub riccati_sigma: f64,
    pub duration: f64,
    pub period: Option<f64>,
    pub slowness: f64,
    pub beta0: [f64; 2],
    pub q0: [f64; 2],
    pub p0: [f64; 2],
    pub k0: [f64; 2],
    pub grid: Option<SpatialGrid>,
    pub analyses: Analyses,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunResult {
    pub schema_version: u32,
    pub name: String,
    /// `ok`, `checks-failed`, or an error code.
    pub status: String,
    pub error: Option<ErrorInfo>,
    pub setup: RunSetup,
    pub final_ledger: Option<PhaseLedger>,
    pub ledger_series: Vec<PhaseLedger>,
    pub diagnostics: Diagnostics,
    pub checks: Vec<Check>,
    #[serde(skip)]
    pub output_dir: PathBuf,
    #[serde(skip)]
    pub states: Vec<(f64, BundledState)>,
    #[serde(skip)]
    pub packets: Vec<WavePacket>,
}

impl RunResult {
    fn new(plan: &RunPlan) -> Self {
        let pair = |z: C64| [z.re, z.im];
        Self {
            schema_version: SCHEMA_VERSION,
            name: plan.name.clone(),
            status: "ok".into(),
            error: None,
            setup: RunSetup {
                params: plan.params,
                riccati_sigma: plan.sign.sigma(),
                duration: plan.t_end,
                period: plan.period,
                slowness: plan.schedule.slowness(),
                beta0: pair(plan.initial.beta),
                q0: pair(plan.initial.guiding.q),
                p0: pair(plan.initial.guiding.p),
                k0: pair(plan.initial.k),
                grid: plan.grid,
                analyses: plan.analyses,
            },
            final_ledger: None,
            ledger_series: Vec::new(),
            diagnostics: Diagnostics::default(),
            checks: Vec::new(),
            output_dir: plan.output_dir.clone(),
            states: Vec::new(),
            packets: Vec::new(),
        }
    }

    pub fn failed_checks(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }

    /// 0 on success, the error's code on failure, 4 when only checks failed.
    pub fn exit_code(&self) -> i32 {
        match &self.error {
            Some(e) => e.exit_code,
            None if self.checks.iter().all(|c| c.pass) => 0,
            None => 4,
        }
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Validates `config`, runs every requested analysis and writes outputs
/// under `output_root`. Config errors return early without touching disk;
/// later failures are recorded in the result and its summary.
pub fn run(config: &RunConfig, output_root: &Path) -> Result<RunResult> {
    let plan = config.plan(output_root)?;
    execute(&plan)
}

/// The convergence study alone.
pub fn run_residual(config: &RunConfig, output_root: &Path) -> Result<RunResult> {
    let mut cfg = config.clone();
    cfg.analyses = Analyses {
        phases: false,
        packets: false,
        residual: true,
        monodromy: false,
        adiabatic: false,
    };
    run(&cfg, output_root)
}

pub fn execute(plan: &RunPlan) -> Result<RunResult> {
    fs::create_dir_all(&plan.output_dir).map_err(|e| Error::io(&plan.output_dir, e))?;
    let mut result = RunResult::new(plan);
    if let Err(e) = analyse(plan, &mut result) {
        result.status = e.code().into();
        result.error = Some(ErrorInfo {
            code: e.code().into(),
            exit_code: e.exit_code(),
            message: e.to_string(),
        });
    } else if result.checks.iter().any(|c| !c.pass) {
        result.status = "checks-failed".into();
    }
    write_outputs(&result)?;
    Ok(result)
}

/// Uniform samples plus cycle boundaries, strictly increasing.
pub fn output_times(t_end: f64, samples: usize, period: Option<f64>) -> Vec<f64> {
    let mut times: Vec<f64> = (0..samples).map(|i| t_end * i as f64 / (samples - 1) as f64).collect();
    if let Some(p) = period {
        let cycles = (t_end / p * (1.0 + 1e-12)).floor() as usize;
        times.extend((1..=cycles).map(|k| (k as f64 * p).min(t_end)));
    }
    times.sort_by(f64::total_cmp);
    times.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * t_end);
    times
}

fn propagator(plan: &RunPlan) -> Propagator<'_> {
    Propagator {
        schedule: &plan.schedule,
        params: plan.params,
        sign: plan.sign,
        eps_q: plan.eps_q,
        control: plan.control,
    }
}

fn analyse(plan: &RunPlan, result: &mut RunResult) -> Result<()> {
    let times = output_times(plan.t_end, plan.samples, plan.period);
    let keep_dense = plan.analyses.packets || plan.analyses.residual;
    let traj = propagator(plan).run(&plan.initial, plan.t_end, &times, keep_dense)?;
    let d = &mut result.diagnostics;
    d.accepted_steps = Some(traj.accepted_steps);
    d.rejected_steps = Some(traj.rejected_steps);
    d.max_realness_drift = Some(traj.max_realness_drift);
    d.max_riccati_gap = Some(traj.max_riccati_gap);
    result.checks.push(Check::below("realness_drift", traj.max_realness_drift, limits::REALNESS));
    result.checks.push(Check::below("riccati_gap", traj.max_riccati_gap, limits::RICCATI_GAP));
    result.ledger_series = traj.samples.iter().map(|(t, s)| s.ledger(*t, &plan.params)).collect();
    result.final_ledger = Some(traj.final_state.ledger(plan.t_end, &plan.params));
    result.states = traj.samples.clone();

    if plan.analyses.phases {
        phase_diagnostics(plan, &traj, result)?;
    }
    if plan.analyses.monodromy {
        let span = plan.period.filter(|p| *p <= plan.t_end).unwrap_or(plan.t_end);
        let det = det2(&monodromy(&plan.schedule, span, &plan.control)?);
        result.diagnostics.monodromy_det = Some([det.re, det.im]);
        result.diagnostics.monodromy_span = Some(span);
        result.checks.push(Check::below("monodromy_det", (det - 1.0).norm(), limits::MONODROMY_DET));
    }
    if plan.analyses.packets {
        packet_diagnostics(plan, &traj, result)?;
    }
    if plan.analyses.residual {
        residual_diagnostics(plan, &traj, result)?;
    }
    if plan.analyses.adiabatic {
        let study = adiabatic_study(plan)?;
        for (k, (diff, bound)) in study.differences.iter().zip(&study.cauchy_bounds).enumerate() {
            result.checks.push(Check::below(&format!("adiabatic_cauchy_{k}"), *diff, *bound));
        }
        result.checks.push(Check::below("adiabatic_limit", study.limit_error, plan.adiabatic.limit_tol));
        result.diagnostics.adiabatic = Some(study);
    }
    Ok(())
}

/// Pointwise identities between the width and frame forms of the rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateGaps {
    pub hannay: f64,
    pub total: f64,
    pub transport: f64,
}

/// Compares the width-form rates (built from the integrated `β` and the
/// width equation) with the frame-form rates (built from the linear flow).
pub fn rate_gaps(plan_schedule: &CoefficientSchedule, sign: crate::classical::RiccatiSign, t: f64, s: &BundledState) -> Result<RateGaps> {
    let c = plan_schedule.evaluate(t)?;
    let lin = s.linear();
    let dlin = linear_rhs(&lin, &c);
    let beta_lin = s.beta_linear();
    let dbeta_lin = beta_rate_from_linear(&lin, &dlin);
    let dln = log_qq_rate(&lin, &dlin);
    let frame = frame_from_linear(&lin, beta_lin)?;
    let de = frame_rate(&lin, &dlin, beta_lin, dbeta_lin);
    let h_frame = hannay_rate_frame_raw(&frame, de)?;
    let h_width = hannay_rate_beta_raw(s.beta, riccati_rhs(s.beta, &c, sign), dln)?;
    let t_frame = total_rate_frame_raw(&frame, de, &c.flow_matrix())?;
    let t_width = total_rate_raw(s.beta, &c, dln);
    Ok(RateGaps {
        hannay: (h_frame - h_width).norm(),
        total: (t_frame - t_width).norm(),
        transport: transport_residual(&frame, de, h_frame.re),
    })
}

fn phase_diagnostics(plan: &RunPlan, traj: &Trajectory, result: &mut RunResult) -> Result<()> {
    let params = &plan.params;
    let nu = params.phase_prefactor();
    let init = &plan.initial;
    let pq0 = init.guiding.p * init.guiding.q;
    let area0 = frame_from_linear(&init.linear, init.beta)?.area().re;
    let (mut area, mut hannay, mut total, mut transport, mut k_gap, mut gamma_gap) = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
    for (t, s) in &traj.samples {
        let frame = frame_from_linear(&s.linear(), s.beta_linear())?;
        area = area.max((frame.area().re / area0 - 1.0).abs());
        let g = rate_gaps(&plan.schedule, plan.sign, *t, s)?;
        hannay = hannay.max(g.hannay);
        total = total.max(g.total);
        transport = transport.max(g.transport);
        // i∫(L + Zl²/q²)dt recovered from k by removing the width term.
        let action = s.k - init.k + 2.0 * C64::i() * params.hbar * nu * s.s_integral;
        let closed = 0.5 * C64::i() * (s.p * s.q - pq0);
        k_gap = k_gap.max((action - closed).norm());
        let a = gamma_total(params, s.s_integral);
        let b = gamma_total_from_angles(params, s.theta.re, s.ln_qq.re);
        gamma_gap = gamma_gap.max((a - b).norm() / (1.0 + a.norm()));
    }
    let d = &mut result.diagnostics;
    d.max_area_drift = Some(area);
    d.max_hannay_rate_gap = Some(hannay);
    d.max_total_rate_gap = Some(total);
    d.max_transport_residual = Some(transport);
    d.max_k_identity_gap = Some(k_gap);
    d.max_gamma_form_gap = Some(gamma_gap);
    result.checks.extend([
        Check::below("area_drift", area, limits::AREA_DRIFT),
        Check::below("hannay_rate_forms", hannay, limits::RATE_GAP),
        Check::below("total_rate_forms", total, limits::RATE_GAP),
        Check::below("transport_residual", transport, limits::TRANSPORT),
        Check::below("k_identity", k_gap, limits::K_IDENTITY),
        Check::below("gamma_forms", gamma_gap, limits::GAMMA_FORMS),
    ]);
    Ok(())
}

fn dense_state(traj: &Trajectory, t: f64) -> Result<BundledState> {
    traj.state_at(t)
        .ok_or_else(|| Error::Consistency(format!("no dense state at t = {t}")))
}

/// Largest pointwise relative difference over significant points.
pub fn form_gap(a: &WavePacket, b: &WavePacket) -> f64 {
    a.significant(limits::FORM_SIGNIFICANCE)
        .into_iter()
        .map(|j| (a.amplitudes[j] - b.amplitudes[j]).norm() / a.amplitudes[j].norm())
        .fold(0.0, f64::max)
}

fn packet_pair(plan: &RunPlan, traj: &Trajectory, grid: &SpatialGrid, t: f64) -> Result<(WavePacket, WavePacket)> {
    let s = dense_state(traj, t)?;
    let product = evaluate_packet(grid, t, &s.guiding(), s.beta, s.k, &plan.params, plan.eps_q)?;
    let factored = evaluate_packet_factored(grid, s.beta_linear(), &s.ledger(t, &plan.params), &plan.initial, &plan.params)?;
    Ok((product, factored))
}

fn packet_diagnostics(plan: &RunPlan, traj: &Trajectory, result: &mut RunResult) -> Result<()> {
    let grid = plan.grid.as_ref().expect("validated");
    if !plan.params.normalizable() {
        return Err(Error::Config("packet analysis needs a square-integrable power branch".into()));
    }
    let n0 = {
        let (p, _) = packet_pair(plan, traj, grid, 0.0)?;
        p.check_truncation(plan.truncation)?;
        grid_norm(&p)
    };
    let (mut gap, mut drift) = (0.0_f64, 0.0_f64);
    for i in 0..limits::FORM_TIMES {
        let t = plan.t_end * i as f64 / (limits::FORM_TIMES - 1) as f64;
        let (product, factored) = packet_pair(plan, traj, grid, t)?;
        product.check_truncation(plan.truncation)?;
        gap = gap.max(form_gap(&product, &factored));
        drift = drift.max((grid_norm(&product) / n0 - 1.0).abs());
    }
    result.diagnostics.max_form_gap = Some(gap);
    result.diagnostics.max_norm_drift = Some(drift);
    result.checks.push(Check::below("form_equivalence", gap, limits::FORM_GAP));
    result.checks.push(Check::below("norm_drift", drift, limits::NORM_DRIFT));
    for &t in &plan.packet_times {
        let (product, _) = packet_pair(plan, traj, grid, t)?;
        result.packets.push(product);
    }
    Ok(())
}

fn residual_window(plan: &RunPlan) -> ResidualWindow {
    ResidualWindow {
        truncation: plan.truncation,
        origin_cut: plan.residual.origin_cut * plan.initial_width(),
    }
}

/// Residual source: the width integrated from the width equation, so the
/// sign choice in that equation is what the residual arbitrates.
fn residual_source(traj: &Trajectory, eps_q: f64) -> EvolvedPacket<'_> {
    EvolvedPacket {
        trajectory: traj,
        width: WidthSource::Direct,
        eps_q,
    }
}

/// Residual at one time on grids with `base, 2·base, 4·base, …` points.
pub fn residual_study(plan: &RunPlan, traj: &Trajectory) -> Result<ResidualStudy> {
    let grid = plan.grid.as_ref().expect("validated");
    let r = &plan.residual;
    let t = r.time * plan.t_end;
    let window = residual_window(plan);
    let source = residual_source(traj, plan.eps_q);
    let base = r.base_points.unwrap_or(grid.n / 4).max(crate::wavepacket::MIN_GRID_POINTS);
    let mut levels = Vec::with_capacity(r.levels);
    for k in 0..r.levels {
        let g = SpatialGrid::new(grid.x_min, grid.x_max, base << k, &plan.params)?;
        let dt_fd = r.dt_factor * g.h;
        let residual = schrodinger_residual(&source, t, dt_fd, &g, &window)?;
        levels.push(ResidualLevel {
            n: g.n,
            h: g.h,
            dt_fd,
            residual,
        });
    }
    let orders = levels
        .windows(2)
        .map(|w| (w[0].residual / w[1].residual).ln() / (w[0].h / w[1].h).ln())
        .collect();
    Ok(ResidualStudy {
        t,
        origin_cut: window.origin_cut,
        levels,
        orders,
    })
}

fn residual_diagnostics(plan: &RunPlan, traj: &Trajectory, result: &mut RunResult) -> Result<()> {
    let grid = plan.grid.as_ref().expect("validated");
    let window = residual_window(plan);
    let source = residual_source(traj, plan.eps_q);
    let dt_fd = plan.residual.dt_factor * grid.h;
    let m = plan.residual.series_points;
    for i in 0..m {
        let t = plan.t_end * (i as f64 + 0.5) / m as f64;
        if t - dt_fd < 0.0 || t + dt_fd > plan.t_end {
            continue;
        }
        let r = schrodinger_residual(&source, t, dt_fd, grid, &window)?;
        result.diagnostics.residual_series.push([t, r]);
    }
    let study = residual_study(plan, traj)?;
    for (k, order) in study.orders.iter().enumerate() {
        result.checks.push(Check::below(
            &format!("residual_order_{k}"),
            (order - limits::ORDER_CENTRE).abs(),
            limits::ORDER_SPREAD,
        ));
    }
    result.diagnostics.residual_study = Some(study);
    Ok(())
}

/// One-cycle Hannay angle at each slowness level, Richardson extrapolation
/// and comparison with the adiabatic line integral.
pub fn adiabatic_study(plan: &RunPlan) -> Result<AdiabaticStudy> {
    let cfg = &plan.adiabatic;
    let base_period = plan.schedule.period().expect("validated") * plan.schedule.slowness();
    let unslowed = plan.schedule.clone().with_slowness(1.0)?;
    let rows: Vec<AdiabaticRow> = cfg
        .slowness
        .par_iter()
        .map(|&eps| {
            let schedule = unslowed.clone().with_slowness(eps)?;
            let period = base_period / eps;
            let prop = Propagator {
                schedule: &schedule,
                ..propagator(plan)
            };
            let traj = prop.run(&plan.initial, period, &[], false)?;
            Ok(AdiabaticRow {
                slowness: eps,
                period,
                theta_h: traj.final_state.theta_h.re,
                accepted_steps: traj.accepted_steps,
            })
        })
        .collect::<Result<_>>()?;
    let values: Vec<f64> = rows.iter().map(|r| r.theta_h).collect();
    let differences = values.windows(2).map(|w| (w[0] - w[1]).abs()).collect();
    let cauchy_bounds = rows[..rows.len() - 1].iter().map(|r| cfg.cauchy_constant * r.slowness).collect();
    let richardson_first: Vec<f64> = values.windows(2).map(|w| 2.0 * w[1] - w[0]).collect();
    let second: Vec<f64> = richardson_first.windows(2).map(|w| (4.0 * w[1] - w[0]) / 3.0).collect();
    let extrapolated = *second.last().expect("three levels");
    let line_integral = adiabatic_hannay_angle(&unslowed, base_period, cfg.oracle_points)?;
    Ok(AdiabaticStudy {
        rows,
        differences,
        cauchy_bounds,
        richardson_first,
        extrapolated,
        line_integral,
        limit_error: (extrapolated - line_integral).abs(),
    })
}

fn f(v: f64) -> String {
    format!("{v:.16e}")
}

pub const TRAJECTORY_COLUMNS: [&str; 16] = [
    "t", "q_re", "q_im", "p_re", "p_im", "Q_re", "Q_im", "P_re", "P_im", "beta_re", "beta_im", "theta", "theta_h",
    "theta_d", "k_re", "k_im",
];

fn write_outputs(result: &RunResult) -> Result<()> {
    let dir = &result.output_dir;
    if !result.states.is_empty() {
        let path = dir.join("trajectory.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_error(&path, e))?;
        w.write_record(TRAJECTORY_COLUMNS).map_err(|e| csv_error(&path, e))?;
        for (t, s) in &result.states {
            let row = [
                *t,
                s.q.re,
                s.q.im,
                s.p.re,
                s.p.im,
                s.big_q.re,
                s.big_q.im,
                s.big_p.re,
                s.big_p.im,
                s.beta.re,
                s.beta.im,
                s.theta.re,
                s.theta_h.re,
                s.theta.re - s.theta_h.re,
                s.k.re,
                s.k.im,
            ];
            w.write_record(row.map(f)).map_err(|e| csv_error(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    for p in &result.packets {
        p.write_csv(&dir.join(format!("packet_{:.6}.csv", p.snapshot.t)))?;
    }
    if let Some(study) = &result.diagnostics.residual_study {
        let path = dir.join("residual.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_error(&path, e))?;
        w.write_record(["n", "h", "dt_fd", "residual"]).map_err(|e| csv_error(&path, e))?;
        for l in &study.levels {
            w.write_record([l.n.to_string(), f(l.h), f(l.dt_fd), f(l.residual)])
                .map_err(|e| csv_error(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    write_json(&dir.join("summary.json"), result)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub index: usize,
    pub value: f64,
    pub status: String,
    pub exit_code: i32,
    pub delta_theta_h: Option<f64>,
    pub gamma_g: Option<f64>,
    pub gamma_l: Option<[f64; 2]>,
    /// `γ^G / Δθ_H`.
    pub prefactor: Option<f64>,
    /// `1 ∓ √((l/ħ)² + 1/4)` for the configured branch.
    pub expected_prefactor: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepTable {
    pub schema_version: u32,
    pub name: String,
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
    pub checks: Vec<Check>,
}

impl SweepTable {
    pub fn exit_code(&self) -> i32 {
        if self.checks.iter().all(|c| c.pass) {
            0
        } else {
            4
        }
    }
}

fn expected_prefactor(l: f64, hbar: f64, branch: crate::classical::PowerBranch) -> f64 {
    let s = ((l / hbar).powi(2) + 0.25).sqrt();
    match branch {
        crate::classical::PowerBranch::Minus => 1.0 - s,
        crate::classical::PowerBranch::Plus => 1.0 + s,
    }
}

/// Runs one independent job per value on a worker pool. Failed rows are
/// recorded and the sweep continues.
pub fn sweep(config: &RunConfig, axis: SweepAxis, values: &[f64], output_root: &Path) -> Result<SweepTable> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::Config(format!("sweep values must be finite, got {v}")));
    }
    let name = config.name();
    let sweep_dir = output_root.join(config.output.dir.clone().unwrap_or_else(|| PathBuf::from(&name))).join(format!("sweep-{}", axis.name()));
    fs::create_dir_all(&sweep_dir).map_err(|e| Error::io(&sweep_dir, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.sweep.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start sweep workers: {e}")))?;
    let rows: Vec<SweepRow> = pool.install(|| {
        values
            .par_iter()
            .enumerate()
            .map(|(index, &value)| {
                let mut cfg = config.with_axis(axis, value);
                cfg.output.dir = Some(PathBuf::from(format!("row-{index:03}")));
                let outcome = run(&cfg, &sweep_dir);
                let mut row = SweepRow {
                    index,
                    value,
                    status: String::new(),
                    exit_code: 0,
                    delta_theta_h: None,
                    gamma_g: None,
                    gamma_l: None,
                    prefactor: None,
                    expected_prefactor: None,
                };
                match outcome {
                    Ok(r) => {
                        row.status = r.status.clone();
                        row.exit_code = r.exit_code();
                        row.expected_prefactor = Some(expected_prefactor(r.setup.params.l, r.setup.params.hbar, r.setup.params.branch));
                        if let Some(l) = r.final_ledger {
                            row.delta_theta_h = Some(l.theta_h);
                            row.gamma_g = Some(l.gamma_g);
                            row.gamma_l = Some(l.gamma_l);
                            row.prefactor = Some(l.gamma_g / l.theta_h);
                        }
                    }
                    Err(e) => {
                        row.status = e.code().into();
                        row.exit_code = e.exit_code();
                    }
                }
                row
            })
            .collect()
    });

    let mut checks = Vec::new();
    for r in &rows {
        checks.push(Check::below(&format!("row_{:03}_status", r.index), r.exit_code as f64, 0.5));
        if let (Some(p), Some(e), Some(h)) = (r.prefactor, r.expected_prefactor, r.delta_theta_h) {
            if h.abs() > 1e-6 {
                checks.push(Check::below(&format!("row_{:03}_prefactor", r.index), (p - e).abs(), limits::PREFACTOR));
            }
        }
    }
    if matches!(axis, SweepAxis::L | SweepAxis::Hbar) {
        let hs: Vec<f64> = rows.iter().filter_map(|r| r.delta_theta_h).collect();
        if hs.len() > 1 {
            let spread = hs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - hs.iter().cloned().fold(f64::INFINITY, f64::min);
            checks.push(Check::below("hannay_angle_spread", spread, limits::HANNAY_SPREAD));
        }
    }
    let table = SweepTable {
        schema_version: SCHEMA_VERSION,
        name,
        axis,
        rows,
        checks,
    };
    write_sweep(&sweep_dir, &table)?;
    Ok(table)
}

fn write_sweep(dir: &Path, table: &SweepTable) -> Result<()> {
    let path = dir.join("sweep.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_error(&path, e))?;
    w.write_record([
        "index",
        table.axis.name(),
        "status",
        "delta_theta_h",
        "gamma_g",
        "gamma_l_re",
        "gamma_l_im",
        "prefactor",
        "expected_prefactor",
    ])
    .map_err(|e| csv_error(&path, e))?;
    let opt = |v: Option<f64>| v.map(f).unwrap_or_default();
    for r in &table.rows {
        w.write_record([
            r.index.to_string(),
            f(r.value),
            r.status.clone(),
            opt(r.delta_theta_h),
            opt(r.gamma_g),
            opt(r.gamma_l.map(|g| g[0])),
            opt(r.gamma_l.map(|g| g[1])),
            opt(r.prefactor),
            opt(r.expected_prefactor),
        ])
        .map_err(|e| csv_error(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    write_json(&dir.join("sweep.json"), table)
}
