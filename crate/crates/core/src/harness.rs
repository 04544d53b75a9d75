//! Experiment runner: run configuration, τ sweeps with empirical order fits,
//! stability reports, and trace files (CSV plus SVG plots).

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use plotters::prelude::*;
use thiserror::Error;

use crate::fdforms::{self, FdError};
use crate::linalg::Mat;
use crate::models::{
    DecaySpec, DerivativeMode, InitMode, JacobianInverse, ModelError, RunSettings, SolverKind,
    ZnnRun,
};
use crate::problems::{self, ProblemError};
use crate::stability::{self, StabilityReport};

/// Residuals below this cannot support an order estimate in double precision.
pub const DEGENERATE_RESIDUAL: f64 = 1e-14;

/// Fraction of the trace (from the end) used for the steady-state median.
pub const STEADY_STATE_FRACTION: f64 = 0.2;

/// Minimum number of steps a run must take.
pub const MIN_STEPS: usize = 10;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("step {step}: {source}")]
    Model {
        step: usize,
        #[source]
        source: ModelError,
    },
    #[error("steady-state residual {value:e} at tau={tau} is below {DEGENERATE_RESIDUAL:e}")]
    DegenerateResidual { tau: f64, value: f64 },
    #[error("malformed trace file: {0}")]
    Parse(String),
    #[error("plot: {0}")]
    Plot(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl HarnessError {
    /// Process exit code: 2 for invalid configuration, 3 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::InvalidConfig(_) | HarnessError::Parse(_) => 2,
            HarnessError::Model { source, .. } if source.is_numerical() => 3,
            HarnessError::Model { .. } => 2,
            HarnessError::DegenerateResidual { .. } => 3,
            HarnessError::Plot(_) | HarnessError::Io(_) => 1,
        }
    }
}

impl From<ProblemError> for HarnessError {
    fn from(e: ProblemError) -> Self {
        HarnessError::InvalidConfig(e.to_string())
    }
}

impl From<FdError> for HarnessError {
    fn from(e: FdError) -> Self {
        HarnessError::InvalidConfig(e.to_string())
    }
}

fn setup_error(e: ModelError) -> HarnessError {
    HarnessError::Model { step: 0, source: e }
}

/// Either the dimensionless step gain `h` or the decay constant `λ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gain {
    H(f64),
    Lambda(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmitFormat {
    Csv,
    Svg,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: String,
    pub solver: SolverKind,
    pub formula: String,
    pub derivative: DerivativeMode,
    pub tau: f64,
    pub gain: Gain,
    pub t_end: f64,
    pub init: InitMode,
    /// Output path prefix; nothing is written without one.
    pub out: Option<PathBuf>,
    pub emit: Vec<EmitFormat>,
    /// Record iterate and reference entries in the trace.
    pub entries: bool,
    /// Hold every coefficient at its `t = 0` value.
    pub frozen: bool,
    pub jacobian: JacobianInverse,
}

/// Solver that consumes a named problem by default.
pub fn default_solver(problem: &str) -> SolverKind {
    match problem {
        "example1" => SolverKind::Tvpinv,
        "example2" => SolverKind::Tvinv,
        "example_opt" | "static_qp" => SolverKind::Tvopt,
        _ => SolverKind::Tvlin,
    }
}

impl RunConfig {
    /// Defaults for a named problem: `h = 0.1` (`λ = 10` for optimization),
    /// `τ = 0.1`, Euler formula, backward derivatives, exact init.
    pub fn new(problem: &str) -> Self {
        let solver = default_solver(problem);
        Self {
            problem: problem.to_string(),
            solver,
            formula: "euler_fwd".into(),
            derivative: DerivativeMode::Backward,
            tau: 0.1,
            gain: if solver == SolverKind::Tvopt {
                Gain::Lambda(10.0)
            } else {
                Gain::H(0.1)
            },
            t_end: problems::default_horizon(problem),
            init: InitMode::Exact,
            out: None,
            emit: vec![EmitFormat::Csv],
            entries: false,
            frozen: false,
            jacobian: JacobianInverse::Direct,
        }
    }

    pub fn decay(&self) -> Result<DecaySpec, HarnessError> {
        let d = match self.gain {
            Gain::H(h) => DecaySpec::from_gain(h, self.tau),
            Gain::Lambda(l) => DecaySpec::from_lambda(l, self.tau),
        };
        d.map_err(|e| HarnessError::InvalidConfig(e.to_string()))
    }

    /// Number of steps `t_end / τ`.
    pub fn steps(&self) -> usize {
        (self.t_end / self.tau).round() as usize
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::InvalidConfig(m));
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad(format!("t-end must be positive, got {}", self.t_end));
        }
        let ratio = self.t_end / self.tau;
        if (ratio - ratio.round()).abs() > 1e-6 * ratio.max(1.0) {
            return bad(format!(
                "tau={} does not divide t-end={}",
                self.tau, self.t_end
            ));
        }
        if self.steps() < MIN_STEPS {
            return bad(format!(
                "tau={} gives {} steps over t-end={}, need at least {MIN_STEPS}",
                self.tau,
                self.steps(),
                self.t_end
            ));
        }
        self.decay()?;
        problems::by_name(&self.problem)?;
        fdforms::lookup(&self.formula)?;
        Ok(())
    }

    /// Applies one `key = value` setting. Keys match the CLI flag names.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), HarnessError> {
        let bad = |what: &str| HarnessError::InvalidConfig(format!("bad {what} `{value}`"));
        let num = |what: &str| value.parse::<f64>().map_err(|_| bad(what));
        match key {
            "problem" => {
                // re-derive problem-dependent defaults only for fields not yet customized
                let fresh = RunConfig::new(value);
                let old = RunConfig::new(&self.problem);
                if self.solver == old.solver {
                    self.solver = fresh.solver;
                }
                if self.t_end == old.t_end {
                    self.t_end = fresh.t_end;
                }
                if self.gain == old.gain {
                    self.gain = fresh.gain;
                }
                self.problem = value.to_string();
            }
            "solver" => self.solver = value.parse().map_err(|_| bad("solver"))?,
            "formula" => self.formula = value.to_string(),
            "derivative" => self.derivative = value.parse().map_err(|_| bad("derivative"))?,
            "tau" => self.tau = num("tau")?,
            "h" => self.gain = Gain::H(num("h")?),
            "lambda" => self.gain = Gain::Lambda(num("lambda")?),
            "t-end" | "t_end" => self.t_end = num("t-end")?,
            "init" => {
                self.init = match value {
                    "exact" => InitMode::Exact,
                    "random" => InitMode::Random {
                        seed: match self.init {
                            InitMode::Random { seed } => seed,
                            InitMode::Exact => 1,
                        },
                    },
                    _ => return Err(bad("init")),
                }
            }
            "seed" => {
                let seed = value.parse().map_err(|_| bad("seed"))?;
                if let InitMode::Random { .. } = self.init {
                    self.init = InitMode::Random { seed };
                } else {
                    return Err(HarnessError::InvalidConfig(
                        "seed requires init = random".into(),
                    ));
                }
            }
            "out" => self.out = Some(PathBuf::from(value)),
            "emit" => {
                self.emit = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| match s {
                        "csv" => Ok(EmitFormat::Csv),
                        "svg" => Ok(EmitFormat::Svg),
                        _ => Err(bad("emit")),
                    })
                    .collect::<Result<_, _>>()?
            }
            "entries" => self.entries = value.parse().map_err(|_| bad("entries"))?,
            "frozen" => self.frozen = value.parse().map_err(|_| bad("frozen"))?,
            "jacobian" => {
                self.jacobian = match value {
                    "direct" => JacobianInverse::Direct,
                    "tracked" => JacobianInverse::Tracked,
                    _ => return Err(bad("jacobian")),
                }
            }
            other => {
                return Err(HarnessError::InvalidConfig(format!(
                    "unknown key `{other}`"
                )))
            }
        }
        Ok(())
    }

    /// Builds a config from ordered settings, starting from the defaults of the
    /// `problem` entry. Later entries override earlier ones; `h` and `lambda`
    /// may not both appear.
    pub fn from_settings(settings: &[(String, String)]) -> Result<Self, HarnessError> {
        let problem = settings
            .iter()
            .rev()
            .find(|(k, _)| k == "problem")
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| HarnessError::InvalidConfig("missing `problem`".into()))?;
        let mut cfg = RunConfig::new(problem);
        let has = |k: &str| settings.iter().any(|(key, _)| key == k);
        if has("h") && has("lambda") {
            return Err(HarnessError::InvalidConfig(
                "give exactly one of `h` and `lambda`".into(),
            ));
        }
        // init before seed so the seed lands on a random init
        let mut ordered: Vec<&(String, String)> =
            settings.iter().filter(|(k, _)| k != "seed").collect();
        ordered.extend(settings.iter().filter(|(k, _)| k == "seed"));
        for (k, v) in ordered {
            if k != "problem" {
                cfg.set(k, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse_settings(text: &str) -> Result<Vec<(String, String)>, HarnessError> {
        let mut out = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                HarnessError::InvalidConfig(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            out.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(out)
    }

    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        Self::from_settings(&Self::parse_settings(text)?)
    }

    /// Canonical `key = value` form; parses back to an equal config.
    pub fn to_settings_text(&self) -> String {
        let mut s = String::new();
        let mut line = |k: &str, v: String| s.push_str(&format!("{k} = {v}\n"));
        line("problem", self.problem.clone());
        line("solver", self.solver.to_string());
        line("formula", self.formula.clone());
        line("derivative", self.derivative.to_string());
        line("tau", self.tau.to_string());
        match self.gain {
            Gain::H(h) => line("h", h.to_string()),
            Gain::Lambda(l) => line("lambda", l.to_string()),
        }
        line("t-end", self.t_end.to_string());
        match self.init {
            InitMode::Exact => line("init", "exact".into()),
            InitMode::Random { seed } => {
                line("init", "random".into());
                line("seed", seed.to_string());
            }
        }
        if let Some(out) = &self.out {
            line("out", out.display().to_string());
        }
        let emit: Vec<&str> = self
            .emit
            .iter()
            .map(|e| match e {
                EmitFormat::Csv => "csv",
                EmitFormat::Svg => "svg",
            })
            .collect();
        line("emit", emit.join(","));
        line("entries", self.entries.to_string());
        line("frozen", self.frozen.to_string());
        line(
            "jacobian",
            match self.jacobian {
                JacobianInverse::Direct => "direct",
                JacobianInverse::Tracked => "tracked",
            }
            .into(),
        );
        s
    }

    /// Instantiates the stepper, unseeded.
    pub fn build_run(&self) -> Result<ZnnRun, HarnessError> {
        self.validate()?;
        let mut problem = problems::by_name(&self.problem)?;
        if self.frozen {
            problem = problem.frozen_at(0.0);
        }
        let mut settings = RunSettings::new(fdforms::lookup(&self.formula)?, self.decay()?);
        settings.derivative_mode = self.derivative;
        settings.init = self.init;
        settings.jacobian = self.jacobian;
        ZnnRun::new(self.solver, problem, settings).map_err(setup_error)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    pub t: f64,
    pub residual: f64,
    /// Values for [`ResidualTrace::columns`].
    pub extra: Vec<f64>,
}

/// Per-step residuals of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualTrace {
    pub config: RunConfig,
    /// Names of the optional entry columns.
    pub columns: Vec<String>,
    pub rows: Vec<TraceRow>,
}

impl ResidualTrace {
    /// Median residual over the final 20% of rows.
    pub fn steady_state_residual(&self) -> f64 {
        let n = self.rows.len();
        if n == 0 {
            return f64::NAN;
        }
        let tail = ((n as f64 * STEADY_STATE_FRACTION).ceil() as usize).clamp(1, n);
        let mut v: Vec<f64> = self.rows[n - tail..].iter().map(|r| r.residual).collect();
        v.sort_by(f64::total_cmp);
        let m = v.len();
        if m % 2 == 1 {
            v[m / 2]
        } else {
            0.5 * (v[m / 2 - 1] + v[m / 2])
        }
    }

    /// Index of a named entry column.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

fn entry_names(prefix: &str, shape: (usize, usize)) -> Vec<String> {
    let mut v = Vec::new();
    for i in 1..=shape.0 {
        for j in 1..=shape.1 {
            v.push(format!("{prefix}_{i}_{j}"));
        }
    }
    v
}

/// Runs a configuration to `t_end`: seeds the warm-up history, then steps,
/// recording one row per iterate `y_1 … y_N` with the residual taken at the
/// iterate's own instant.
pub fn run(config: &RunConfig) -> Result<ResidualTrace, HarnessError> {
    let mut znn = config.build_run()?;
    let n_steps = config.steps();
    let shape = znn.iterate_shape();
    let columns = if config.entries {
        let mut c = entry_names("entry", shape);
        c.extend(entry_names("oracle", shape));
        c
    } else {
        Vec::new()
    };

    let record = |znn: &ZnnRun, j: usize, y: &Mat| -> Result<TraceRow, HarnessError> {
        let t = znn.time_of(j);
        let mut extra = Vec::new();
        if config.entries {
            extra.extend_from_slice(y.as_slice());
            match znn
                .reference(t)
                .map_err(|e| HarnessError::Model { step: j, source: e })?
            {
                Some(r) => extra.extend_from_slice(r.as_slice()),
                None => extra.extend(std::iter::repeat_n(f64::NAN, y.as_slice().len())),
            }
        }
        Ok(TraceRow {
            k: j,
            t,
            residual: znn.residual(y, t),
            extra,
        })
    };

    let seeded = znn.seed().map_err(setup_error)?;
    let mut rows = Vec::with_capacity(n_steps);
    for (j, y) in seeded.iter().enumerate().skip(1).take(n_steps) {
        rows.push(record(&znn, j, y)?);
    }
    while znn.k() < n_steps {
        let step = znn.k() + 1;
        let y = znn
            .step()
            .map_err(|e| HarnessError::Model { step, source: e })?
            .clone();
        rows.push(record(&znn, step, &y)?);
    }
    Ok(ResidualTrace {
        config: config.clone(),
        columns,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub tau: f64,
    pub lambda: f64,
    pub steady_state_residual: f64,
}

/// Steady-state residuals over a τ sweep with fitted empirical orders.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    /// Gain `h = τλ` held fixed across the sweep.
    pub h: f64,
    pub rows: Vec<SweepRow>,
    /// `p̂` between consecutive rows.
    pub pairwise_orders: Vec<f64>,
    /// Least-squares slope of `ln(residual)` against `ln(τ)`.
    pub aggregate_order: f64,
}

/// `ln(r₁/r₂) / ln(τ₁/τ₂)`
pub fn fitted_order(tau1: f64, res1: f64, tau2: f64, res2: f64) -> f64 {
    (res1 / res2).ln() / (tau1 / tau2).ln()
}

/// Runs `base` at each τ with `h` held fixed and fits empirical orders. A base
/// given in terms of `λ` is anchored at its own τ, i.e. `h = λ·τ_base`.
pub fn sweep_order(base: &RunConfig, taus: &[f64]) -> Result<SweepTable, HarnessError> {
    if taus.len() < 2 {
        return Err(HarnessError::InvalidConfig(
            "a sweep needs at least two tau values".into(),
        ));
    }
    let h = base.decay()?.h();
    let configs: Vec<RunConfig> = taus
        .iter()
        .map(|&tau| {
            let mut c = base.clone();
            c.tau = tau;
            c.gain = Gain::H(h);
            c.out = None;
            c.validate().map(|_| c)
        })
        .collect::<Result<_, _>>()?;

    let results: Vec<Result<ResidualTrace, HarnessError>> = std::thread::scope(|s| {
        let handles: Vec<_> = configs.iter().map(|c| s.spawn(move || run(c))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep worker panicked"))
            .collect()
    });

    let mut rows = Vec::with_capacity(taus.len());
    for (cfg, res) in configs.iter().zip(results) {
        let steady = res?.steady_state_residual();
        if steady.is_nan() || steady < DEGENERATE_RESIDUAL {
            return Err(HarnessError::DegenerateResidual {
                tau: cfg.tau,
                value: steady,
            });
        }
        rows.push(SweepRow {
            tau: cfg.tau,
            lambda: h / cfg.tau,
            steady_state_residual: steady,
        });
    }
    let pairwise_orders = rows
        .windows(2)
        .map(|w| {
            fitted_order(
                w[0].tau,
                w[0].steady_state_residual,
                w[1].tau,
                w[1].steady_state_residual,
            )
        })
        .collect();
    let xs: Vec<f64> = rows.iter().map(|r| r.tau.ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.steady_state_residual.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Ok(SweepTable {
        h,
        rows,
        pairwise_orders,
        aggregate_order: sxy / sxx,
    })
}

impl fmt::Display for SweepTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "h = {}", self.h)?;
        writeln!(
            f,
            "{:>10}  {:>10}  {:>14}  {:>8}",
            "tau", "lambda", "steady-state", "p-hat"
        )?;
        for (i, r) in self.rows.iter().enumerate() {
            let p = if i == 0 {
                "-".to_string()
            } else {
                format!("{:.3}", self.pairwise_orders[i - 1])
            };
            writeln!(
                f,
                "{:>10}  {:>10.4}  {:>14.6e}  {:>8}",
                r.tau, r.lambda, r.steady_state_residual, p
            )?;
        }
        write!(f, "aggregate p-hat = {:.3}", self.aggregate_order)
    }
}

/// 0-stability report for a one-step-ahead registry formula.
pub fn stability_report(formula: &str) -> Result<StabilityReport, HarnessError> {
    let f = fdforms::lookup(formula)?;
    let u = fdforms::one_step_ahead_update(&f)?;
    stability::analyze(&u).map_err(|e| HarnessError::InvalidConfig(e.to_string()))
}

fn with_extension(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

/// Writes `k,t,residual[,columns…]` rows.
pub fn write_csv<W: io::Write>(trace: &ResidualTrace, w: W) -> Result<(), HarnessError> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["k".to_string(), "t".into(), "residual".into()];
    header.extend(trace.columns.iter().cloned());
    wtr.write_record(&header).map_err(csv_err)?;
    for r in &trace.rows {
        let mut rec = vec![r.k.to_string(), r.t.to_string(), r.residual.to_string()];
        rec.extend(r.extra.iter().map(f64::to_string));
        wtr.write_record(&rec).map_err(csv_err)?;
    }
    wtr.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> HarnessError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => HarnessError::Io(io),
        other => HarnessError::Parse(format!("{other:?}")),
    }
}

/// Parses rows written by [`write_csv`], returning the column names and rows.
pub fn read_csv<R: io::Read>(r: R) -> Result<(Vec<String>, Vec<TraceRow>), HarnessError> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.len() < 3 || &header[0] != "k" || &header[1] != "t" || &header[2] != "residual" {
        return Err(HarnessError::Parse(
            "header must start with k,t,residual".into(),
        ));
    }
    let columns: Vec<String> = header.iter().skip(3).map(String::from).collect();
    let num = |s: &str| {
        s.parse::<f64>()
            .map_err(|_| HarnessError::Parse(format!("not a number: `{s}`")))
    };
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        rows.push(TraceRow {
            k: rec[0]
                .parse()
                .map_err(|_| HarnessError::Parse(format!("bad step index `{}`", &rec[0])))?,
            t: num(&rec[1])?,
            residual: num(&rec[2])?,
            extra: rec.iter().skip(3).map(num).collect::<Result<_, _>>()?,
        });
    }
    Ok((columns, rows))
}

/// Writes the trace files selected by the config's `emit` list under `prefix`:
/// `PREFIX.csv` with its `PREFIX.cfg` config echo, and `PREFIX.svg`
/// (plus `PREFIX_entries.svg` when entries are recorded).
pub fn emit(trace: &ResidualTrace, prefix: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    if trace.rows.is_empty() {
        return Err(HarnessError::InvalidConfig("empty trace".into()));
    }
    if let Some(dir) = prefix.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut written = Vec::new();
    for format in &trace.config.emit {
        match format {
            EmitFormat::Csv => {
                let csv_path = with_extension(prefix, "csv");
                write_csv(trace, fs::File::create(&csv_path)?)?;
                let cfg_path = with_extension(prefix, "cfg");
                fs::write(&cfg_path, trace.config.to_settings_text())?;
                written.push(csv_path);
                written.push(cfg_path);
            }
            EmitFormat::Svg => {
                let svg = with_extension(prefix, "svg");
                plot_residual(trace, &svg)?;
                written.push(svg);
                if !trace.columns.is_empty() {
                    let mut name = prefix.as_os_str().to_owned();
                    name.push("_entries.svg");
                    let path = PathBuf::from(name);
                    plot_entries(trace, &path)?;
                    written.push(path);
                }
            }
        }
    }
    Ok(written)
}

/// Reads back a trace written by [`emit`] in CSV form.
pub fn load(prefix: &Path) -> Result<ResidualTrace, HarnessError> {
    let config = RunConfig::parse(&fs::read_to_string(with_extension(prefix, "cfg"))?)?;
    let (columns, rows) = read_csv(fs::File::open(with_extension(prefix, "csv"))?)?;
    Ok(ResidualTrace {
        config,
        columns,
        rows,
    })
}

fn plot_err<E: fmt::Display>(e: E) -> HarnessError {
    HarnessError::Plot(e.to_string())
}

fn plot_residual(trace: &ResidualTrace, path: &Path) -> Result<(), HarnessError> {
    let pts: Vec<(f64, f64)> = trace
        .rows
        .iter()
        .filter(|r| r.residual > 0.0 && r.residual.is_finite())
        .map(|r| (r.k as f64, r.residual))
        .collect();
    let (lo, hi) = pts.iter().fold((f64::INFINITY, 0.0_f64), |(lo, hi), p| {
        (lo.min(p.1), hi.max(p.1))
    });
    let (lo, hi) = if pts.is_empty() {
        (1e-16, 1.0)
    } else {
        (lo / 2.0, hi * 2.0)
    };
    let k_max = trace.rows.last().map_or(1, |r| r.k) as f64;
    let c = &trace.config;

    let root = SVGBackend::new(path, (800, 500)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let caption = format!(
        "{} / {} / {}  tau = {}",
        c.problem, c.solver, c.formula, c.tau
    );
    let mut chart = ChartBuilder::on(&root)
        .caption(caption, ("sans-serif", 20))
        .margin(10)
        .x_label_area_size(40)
        .y_label_area_size(70)
        .build_cartesian_2d(0.0..k_max, (lo..hi).log_scale())
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("k")
        .y_desc("residual")
        .y_label_formatter(&|v| format!("{v:.0e}"))
        .draw()
        .map_err(plot_err)?;
    chart
        .draw_series(LineSeries::new(pts, &BLUE))
        .map_err(plot_err)?;
    root.present().map_err(plot_err)?;
    Ok(())
}

fn plot_entries(trace: &ResidualTrace, path: &Path) -> Result<(), HarnessError> {
    let half = trace.columns.len() / 2;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for r in &trace.rows {
        for v in r.extra.iter().filter(|v| v.is_finite()) {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
    }
    if !lo.is_finite() {
        lo = -1.0;
        hi = 1.0;
    }
    let pad = 0.05 * (hi - lo).max(1e-9);
    let t_max = trace.rows.last().map_or(1.0, |r| r.t);

    let root = SVGBackend::new(path, (800, 500)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err)?;
    let mut chart = ChartBuilder::on(&root)
        .caption(
            format!(
                "{} entries (solid) vs reference (dashed)",
                trace.config.problem
            ),
            ("sans-serif", 20),
        )
        .margin(10)
        .x_label_area_size(40)
        .y_label_area_size(50)
        .build_cartesian_2d(0.0..t_max, (lo - pad)..(hi + pad))
        .map_err(plot_err)?;
    chart
        .configure_mesh()
        .x_desc("t")
        .draw()
        .map_err(plot_err)?;
    for i in 0..half {
        let color = Palette99::pick(i).to_rgba();
        let series = |col: usize| -> Vec<(f64, f64)> {
            trace
                .rows
                .iter()
                .filter(|r| r.extra[col].is_finite())
                .map(|r| (r.t, r.extra[col]))
                .collect()
        };
        chart
            .draw_series(LineSeries::new(series(i), color.stroke_width(2)))
            .map_err(plot_err)?
            .label(trace.columns[i].clone());
        chart
            .draw_series(DashedLineSeries::new(
                series(half + i),
                6,
                4,
                color.stroke_width(1),
            ))
            .map_err(plot_err)?;
    }
    root.present().map_err(plot_err)?;
    Ok(())
}
