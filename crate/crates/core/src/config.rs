//! Run configuration: a TOML file with fixed sections, validated into a
//! `RunPlan` before anything is integrated or written.

use std::path::{Path, PathBuf};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::classical::{beta_from_guiding, fixed_point_beta, guiding_for_width, GuidingState, PowerBranch, RiccatiSign, SystemParams, DEFAULT_EPS_Q};
use crate::error::{Error, Result};
use crate::integrate::{InitialData, StepControl};
use crate::schedules::{CoefficientSchedule, Harmonic};
use crate::wavepacket::{normalize_k0, SpatialGrid, DEFAULT_TRUNCATION};

/// Environment variable naming the directory that run outputs go under.
pub const OUTPUT_ROOT_ENV: &str = "SINGOSC_OUT";
pub const DEFAULT_OUTPUT_ROOT: &str = "out";

/// Tolerance for `(q₀, p₀)` implying the configured `β₀`.
const WIDTH_MATCH_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub system: SystemConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub run: SpanConfig,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub integration: IntegrationConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub analyses: Analyses,
    #[serde(default)]
    pub residual: ResidualConfig,
    #[serde(default)]
    pub adiabatic: AdiabaticConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// A coefficient is either a number or `{ offset, terms = [...] }`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Component {
    Value(f64),
    Harmonic(Harmonic),
}

impl Component {
    fn harmonic(&self) -> Harmonic {
        match self {
            Component::Value(v) => Harmonic::constant(*v),
            Component::Harmonic(h) => h.clone(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub x: Option<Component>,
    pub y: Option<Component>,
    pub z: Option<Component>,
    /// CSV with header `t,X,Y,Z`; excludes `x`, `y`, `z`.
    pub file: Option<PathBuf>,
    /// Period in unslowed time.
    pub period: Option<f64>,
    #[serde(default = "one")]
    pub slowness: f64,
    #[serde(default)]
    pub allow_nonpositive_z: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    #[serde(default)]
    pub l: f64,
    #[serde(default = "one")]
    pub hbar: f64,
    #[serde(default)]
    pub power_branch: PowerBranch,
    #[serde(default)]
    pub riccati_sign: RiccatiSign,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            l: 0.0,
            hbar: 1.0,
            power_branch: PowerBranch::default(),
            riccati_sign: RiccatiSign::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum BetaSpec {
    /// Only `"fixed-point"` is accepted.
    Keyword(String),
    Value([f64; 2]),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum K0Spec {
    /// Only `"normalize"` is accepted.
    Keyword(String),
    Value(f64),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    #[serde(default = "fixed_point")]
    pub beta0: BetaSpec,
    pub q0: Option<[f64; 2]>,
    pub p0: Option<[f64; 2]>,
    pub k0: Option<K0Spec>,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self {
            beta0: fixed_point(),
            q0: None,
            p0: None,
            k0: None,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpanConfig {
    pub duration: Option<f64>,
    pub cycles: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub n: usize,
    #[serde(default = "default_truncation")]
    pub truncation: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrationConfig {
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_abs_tol")]
    pub abs_tol: f64,
    #[serde(default = "default_min_step")]
    pub min_step: f64,
    pub max_step: Option<f64>,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    #[serde(default = "default_eps_q")]
    pub eps_q: f64,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        let c = StepControl::default();
        Self {
            rel_tol: c.rel_tol,
            abs_tol: c.abs_tol,
            min_step: c.min_step,
            max_step: None,
            max_steps: c.max_steps,
            eps_q: DEFAULT_EPS_Q,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Subdirectory of the output root; defaults to the run name.
    pub dir: Option<PathBuf>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Packet snapshot times as fractions of the run duration.
    #[serde(default = "default_packet_times")]
    pub packet_times: Vec<f64>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: None,
            samples: default_samples(),
            packet_times: default_packet_times(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Analyses {
    #[serde(default = "yes")]
    pub phases: bool,
    #[serde(default = "yes")]
    pub packets: bool,
    #[serde(default = "yes")]
    pub residual: bool,
    #[serde(default = "yes")]
    pub monodromy: bool,
    #[serde(default)]
    pub adiabatic: bool,
}

impl Default for Analyses {
    fn default() -> Self {
        Self {
            phases: true,
            packets: true,
            residual: true,
            monodromy: true,
            adiabatic: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResidualConfig {
    /// Time of the convergence study, as a fraction of the duration.
    #[serde(default = "default_residual_time")]
    pub time: f64,
    /// `dt_fd = dt_factor · h`.
    #[serde(default = "one")]
    pub dt_factor: f64,
    /// Grids in the convergence study, each with twice the points.
    #[serde(default = "default_levels")]
    pub levels: usize,
    /// Base point count of the study; defaults to a quarter of the grid.
    pub base_points: Option<usize>,
    /// Half-line points closer to the origin than this many initial
    /// widths are left out of residual norms.
    #[serde(default = "default_origin_cut")]
    pub origin_cut: f64,
    /// Times in the residual series of a plain run.
    #[serde(default = "default_series")]
    pub series_points: usize,
}

impl Default for ResidualConfig {
    fn default() -> Self {
        Self {
            time: default_residual_time(),
            dt_factor: 1.0,
            levels: default_levels(),
            base_points: None,
            origin_cut: default_origin_cut(),
            series_points: default_series(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdiabaticConfig {
    /// Slowness levels, each half the previous one.
    #[serde(default)]
    pub slowness: Vec<f64>,
    /// `C` in the Cauchy bound `|Δθ_H(ε) − Δθ_H(ε/2)| < C·ε`.
    #[serde(default = "default_cauchy")]
    pub cauchy_constant: f64,
    /// Quadrature points of the adiabatic line integral.
    #[serde(default = "default_oracle_points")]
    pub oracle_points: usize,
    /// Allowed distance of the extrapolated angle from the line integral.
    #[serde(default = "default_limit_tol")]
    pub limit_tol: f64,
}

impl Default for AdiabaticConfig {
    fn default() -> Self {
        Self {
            slowness: Vec::new(),
            cauchy_constant: default_cauchy(),
            oracle_points: default_oracle_points(),
            limit_tol: default_limit_tol(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Worker threads; 0 picks one per core.
    #[serde(default)]
    pub workers: usize,
}

fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn fixed_point() -> BetaSpec {
    BetaSpec::Keyword("fixed-point".into())
}
fn default_truncation() -> f64 {
    DEFAULT_TRUNCATION
}
fn default_rel_tol() -> f64 {
    StepControl::default().rel_tol
}
fn default_abs_tol() -> f64 {
    StepControl::default().abs_tol
}
fn default_min_step() -> f64 {
    StepControl::default().min_step
}
fn default_max_steps() -> usize {
    StepControl::default().max_steps
}
fn default_eps_q() -> f64 {
    DEFAULT_EPS_Q
}
fn default_samples() -> usize {
    512
}
fn default_packet_times() -> Vec<f64> {
    vec![0.0, 0.5, 1.0]
}
fn default_residual_time() -> f64 {
    0.37
}
fn default_levels() -> usize {
    3
}
fn default_origin_cut() -> f64 {
    0.1
}
fn default_series() -> usize {
    8
}
fn default_cauchy() -> f64 {
    5.0
}
fn default_oracle_points() -> usize {
    4096
}
fn default_limit_tol() -> f64 {
    1e-4
}

/// Sweepable parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    L,
    Hbar,
    Slowness,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::L => "l",
            SweepAxis::Hbar => "hbar",
            SweepAxis::Slowness => "slowness",
        }
    }
}

/// Everything a run needs, validated.
#[derive(Debug, Clone)]
pub struct RunPlan {
    pub name: String,
    pub schedule: CoefficientSchedule,
    pub params: SystemParams,
    pub sign: RiccatiSign,
    pub initial: InitialData,
    pub grid: Option<SpatialGrid>,
    pub truncation: f64,
    pub control: StepControl,
    pub eps_q: f64,
    pub t_end: f64,
    pub period: Option<f64>,
    pub output_dir: PathBuf,
    pub samples: usize,
    pub packet_times: Vec<f64>,
    pub analyses: Analyses,
    pub residual: ResidualConfig,
    pub adiabatic: AdiabaticConfig,
    pub workers: usize,
}

impl RunPlan {
    /// `√(ħ / 2Re β₀)`, the 1/e half width of the initial amplitude.
    pub fn initial_width(&self) -> f64 {
        (self.params.hbar / (2.0 * self.initial.beta.re)).sqrt()
    }
}

fn pair(v: [f64; 2]) -> C64 {
    C64::new(v[0], v[1])
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn name(&self) -> String {
        self.name.clone().unwrap_or_else(|| "run".into())
    }

    /// Copy of the config with one sweep parameter replaced.
    pub fn with_axis(&self, axis: SweepAxis, value: f64) -> Self {
        let mut c = self.clone();
        match axis {
            SweepAxis::L => c.system.l = value,
            SweepAxis::Hbar => c.system.hbar = value,
            SweepAxis::Slowness => c.schedule.slowness = value,
        }
        c
    }

    /// Builds the schedule without slowness or period.
    fn base_schedule(&self) -> Result<CoefficientSchedule> {
        let s = &self.schedule;
        match (&s.file, &s.x, &s.y, &s.z) {
            (Some(file), None, None, None) => {
                let path = self.base_dir.join(file);
                if !path.is_file() {
                    return Err(Error::Config(format!("schedule file {} does not exist", path.display())));
                }
                CoefficientSchedule::from_csv(&path)
            }
            (None, Some(x), Some(y), Some(z)) => Ok(match (x, y, z) {
                (Component::Value(x), Component::Value(y), Component::Value(z)) => CoefficientSchedule::constant(*x, *y, *z),
                _ => CoefficientSchedule::sinusoidal(x.harmonic(), y.harmonic(), z.harmonic()),
            }),
            _ => Err(Error::Config(
                "schedule needs either `file` or all of `x`, `y`, `z`".into(),
            )),
        }
    }

    /// The schedule with period applied but at unit slowness.
    pub fn unslowed_schedule(&self) -> Result<CoefficientSchedule> {
        let schedule = self.base_schedule()?;
        match self.schedule.period {
            Some(p) => schedule.with_period(p),
            None => Ok(schedule),
        }
    }

    /// Validates everything and resolves defaults. Writes nothing.
    pub fn plan(&self, output_root: &Path) -> Result<RunPlan> {
        let schedule = self.unslowed_schedule()?.with_slowness(self.schedule.slowness)?;
        let sys = &self.system;
        let params = SystemParams::new(sys.l, sys.hbar, sys.power_branch)?;
        let sign = sys.riccati_sign;

        let period = schedule.period();
        let t_end = match (self.run.duration, self.run.cycles) {
            (Some(_), Some(_)) => return Err(Error::Config("give either run.duration or run.cycles".into())),
            (Some(d), None) => d,
            (None, cycles) => {
                let p = period.ok_or_else(|| {
                    Error::Config("schedule has no period; give run.duration or schedule.period".into())
                })?;
                cycles.unwrap_or(1.0) * p
            }
        };
        if !(t_end.is_finite() && t_end > 0.0) {
            return Err(Error::Config(format!("run duration must be positive, got {t_end}")));
        }
        schedule.check_covers(t_end)?;
        if !self.schedule.allow_nonpositive_z {
            schedule.check_positive_kinetic(t_end)?;
        }

        let ic = &self.integration;
        let control = StepControl {
            rel_tol: ic.rel_tol,
            abs_tol: ic.abs_tol,
            min_step: ic.min_step,
            max_step: ic.max_step.unwrap_or(f64::INFINITY),
            max_steps: ic.max_steps,
        };
        control.validate()?;
        if !(ic.eps_q > 0.0) {
            return Err(Error::Config(format!("eps_q must be positive, got {}", ic.eps_q)));
        }

        let c0 = schedule.evaluate(0.0)?;
        let beta = match &self.initial.beta0 {
            BetaSpec::Keyword(k) if k == "fixed-point" => fixed_point_beta(&c0, sign).ok_or_else(|| {
                Error::Config("no fixed point with Re(beta) > 0 for this sign; give initial.beta0 = [re, im]".into())
            })?,
            BetaSpec::Keyword(k) => {
                return Err(Error::Config(format!("initial.beta0 must be \"fixed-point\" or [re, im], got \"{k}\"")))
            }
            BetaSpec::Value(v) => pair(*v),
        };
        if !(beta.re > 0.0) {
            return Err(Error::Config(format!("initial width {beta} needs Re(beta0) > 0")));
        }
        let guiding = match (self.initial.q0, self.initial.p0) {
            (None, None) => guiding_for_width(beta, None, &params)?,
            (Some(q), None) => guiding_for_width(beta, Some(pair(q)), &params)?,
            (None, Some(_)) => return Err(Error::Config("initial.p0 needs initial.q0".into())),
            (Some(q), Some(p)) => {
                let g = GuidingState { q: pair(q), p: pair(p) };
                if g.q.norm() == 0.0 {
                    return Err(Error::Config("q0 must be nonzero".into()));
                }
                let implied = beta_from_guiding(&g, &params);
                if (implied - beta).norm() > WIDTH_MATCH_TOL * (1.0 + beta.norm()) {
                    return Err(Error::Config(format!(
                        "(q0, p0) imply width {implied}, not beta0 = {beta}; drop p0 to derive it from beta0"
                    )));
                }
                g
            }
        };

        let grid = match &self.grid {
            Some(g) => {
                if !(g.truncation > 0.0 && g.truncation < 1.0) {
                    return Err(Error::Config(format!("grid.truncation must lie in (0, 1), got {}", g.truncation)));
                }
                Some(SpatialGrid::new(g.x_min, g.x_max, g.n, &params)?)
            }
            None => None,
        };
        let truncation = self.grid.as_ref().map_or(DEFAULT_TRUNCATION, |g| g.truncation);
        let analyses = self.analyses;
        if (analyses.packets || analyses.residual) && grid.is_none() {
            return Err(Error::Config("packet and residual analyses need a [grid] section".into()));
        }

        let k0 = match &self.initial.k0 {
            Some(K0Spec::Value(v)) => *v,
            Some(K0Spec::Keyword(k)) if k == "normalize" => self.normalized_k0(grid.as_ref(), &guiding, &params, ic.eps_q)?,
            Some(K0Spec::Keyword(k)) => {
                return Err(Error::Config(format!("initial.k0 must be \"normalize\" or a number, got \"{k}\"")))
            }
            None if grid.is_some() => self.normalized_k0(grid.as_ref(), &guiding, &params, ic.eps_q)?,
            None => 0.0,
        };
        let initial = InitialData::new(beta, guiding, C64::new(k0, 0.0));

        if self.output.samples < 2 {
            return Err(Error::Config("output.samples must be at least 2".into()));
        }
        if self.output.packet_times.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::Config("output.packet_times are fractions in [0, 1]".into()));
        }
        let r = &self.residual;
        if !(r.time > 0.0 && r.time < 1.0) || !(r.dt_factor > 0.0) || r.levels < 2 || !(r.origin_cut >= 0.0) {
            return Err(Error::Config(
                "residual needs 0 < time < 1, dt_factor > 0, levels >= 2 and origin_cut >= 0".into(),
            ));
        }
        if analyses.adiabatic {
            self.check_adiabatic(&schedule)?;
        }

        let name = self.name();
        let sub = self.output.dir.clone().unwrap_or_else(|| PathBuf::from(&name));
        Ok(RunPlan {
            name,
            schedule,
            params,
            sign,
            initial,
            grid,
            truncation,
            control,
            eps_q: ic.eps_q,
            t_end,
            period,
            output_dir: output_root.join(sub),
            samples: self.output.samples,
            packet_times: self.output.packet_times.iter().map(|f| f * t_end).collect(),
            analyses,
            residual: *r,
            adiabatic: self.adiabatic.clone(),
            workers: self.sweep.workers,
        })
    }

    fn normalized_k0(&self, grid: Option<&SpatialGrid>, g: &GuidingState, params: &SystemParams, eps_q: f64) -> Result<f64> {
        let grid = grid.ok_or_else(|| Error::Config("k0 = \"normalize\" needs a [grid] section".into()))?;
        normalize_k0(grid, g, params, eps_q)
    }

    fn check_adiabatic(&self, schedule: &CoefficientSchedule) -> Result<()> {
        let a = &self.adiabatic;
        if a.slowness.len() < 3 {
            return Err(Error::Config("adiabatic study needs at least three slowness levels".into()));
        }
        if a.slowness.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
            return Err(Error::Config("adiabatic slowness levels must be positive".into()));
        }
        if a.slowness.windows(2).any(|w| (w[0] / w[1] - 2.0).abs() > 1e-12) {
            return Err(Error::Config("adiabatic slowness levels must halve at each step".into()));
        }
        if schedule.period().is_none() {
            return Err(Error::Config("adiabatic study needs a periodic schedule".into()));
        }
        if !(a.cauchy_constant > 0.0 && a.limit_tol > 0.0) || a.oracle_points < 16 {
            return Err(Error::Config("adiabatic needs cauchy_constant, limit_tol > 0 and oracle_points >= 16".into()));
        }
        Ok(())
    }
}

/// Output root from `SINGOSC_OUT`, else `./out`.
pub fn output_root_from_env() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV).map_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT), PathBuf::from)
}
