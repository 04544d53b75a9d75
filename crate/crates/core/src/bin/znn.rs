use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use znn::fdforms::{self, StencilKind};
use znn::harness::{self, HarnessError, RunConfig};
use znn::problems::{self, PROBLEM_NAMES};
use znn::SolverKind;

#[derive(Parser)]
#[command(
    name = "znn",
    version,
    about = "Discrete-time zeroing neural network experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration and report its residual trace.
    Run(RunArgs),
    /// Run a configuration over several sampling gaps and fit the empirical order.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated sampling gaps.
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.05,0.02,0.01")]
        taus: Vec<f64>,
    },
    /// Characteristic polynomial, roots and 0-stability of a formula's recurrence.
    Stability {
        #[arg(long)]
        formula: String,
    },
    /// List problems, solvers and formulas.
    List,
}

#[derive(Args)]
struct RunArgs {
    /// File of `key = value` lines; flags given here override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    solver: Option<String>,
    #[arg(long)]
    formula: Option<String>,
    #[arg(long)]
    tau: Option<String>,
    #[arg(long, conflicts_with = "lambda")]
    h: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long)]
    t_end: Option<String>,
    /// exact | random
    #[arg(long)]
    init: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// analytic | backward
    #[arg(long)]
    derivative: Option<String>,
    /// Output path prefix for trace files.
    #[arg(long)]
    out: Option<String>,
    /// Comma-separated list of csv, svg.
    #[arg(long)]
    emit: Option<String>,
    /// Record iterate and reference entries.
    #[arg(long)]
    entries: bool,
    /// Freeze coefficients at t = 0.
    #[arg(long)]
    frozen: bool,
    /// direct | tracked
    #[arg(long)]
    jacobian: Option<String>,
}

impl RunArgs {
    fn into_config(self) -> Result<RunConfig, HarnessError> {
        let mut settings = match &self.config {
            Some(path) => {
                RunConfig::parse_settings(&fs::read_to_string(path).map_err(|e| {
                    HarnessError::InvalidConfig(format!("{}: {e}", path.display()))
                })?)?
            }
            None => Vec::new(),
        };
        let flags = [
            ("problem", self.problem),
            ("solver", self.solver),
            ("formula", self.formula),
            ("tau", self.tau),
            ("t-end", self.t_end),
            ("init", self.init),
            ("seed", self.seed),
            ("derivative", self.derivative),
            ("out", self.out),
            ("emit", self.emit),
            ("jacobian", self.jacobian),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                settings.push((key.to_string(), v));
            }
        }
        // a gain flag replaces whichever gain the file chose
        for (key, value) in [("h", self.h), ("lambda", self.lambda)] {
            if let Some(v) = value {
                settings.retain(|(k, _)| k != "h" && k != "lambda");
                settings.push((key.to_string(), v));
            }
        }
        if self.entries {
            settings.push(("entries".into(), "true".into()));
        }
        if self.frozen {
            settings.push(("frozen".into(), "true".into()));
        }
        RunConfig::from_settings(&settings)
    }
}

fn cmd_run(args: RunArgs) -> Result<(), HarnessError> {
    let config = args.into_config()?;
    let trace = harness::run(&config)?;
    let last = trace.rows.last().expect("runs take at least one step");
    println!(
        "{} / {} / {}  tau={} h={} lambda={}",
        config.problem,
        config.solver,
        config.formula,
        config.tau,
        config.decay()?.h(),
        config.decay()?.lambda()
    );
    println!("steps: {}", trace.rows.len());
    println!("final residual: {:.6e} at t={}", last.residual, last.t);
    println!(
        "steady-state residual: {:.6e}",
        trace.steady_state_residual()
    );
    if let Some(prefix) = &config.out {
        for path in harness::emit(&trace, prefix)? {
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn cmd_sweep(args: RunArgs, taus: Vec<f64>) -> Result<(), HarnessError> {
    let config = args.into_config()?;
    let table = harness::sweep_order(&config, &taus)?;
    println!(
        "{} / {} / {}",
        config.problem, config.solver, config.formula
    );
    println!("{table}");
    Ok(())
}

fn cmd_stability(formula: &str) -> Result<(), HarnessError> {
    let report = harness::stability_report(formula)?;
    println!("{formula}");
    println!("{report}");
    Ok(())
}

fn cmd_list() {
    println!("problems:");
    for name in PROBLEM_NAMES {
        let solver = harness::default_solver(name);
        println!(
            "  {name:<12} default solver {solver}, t-end {}",
            problems::default_horizon(name)
        );
    }
    println!("solvers:");
    for s in SolverKind::ALL {
        println!("  {s}");
    }
    println!("formulas:");
    for f in fdforms::registry().iter() {
        let kind = match f.kind() {
            StencilKind::OneStepAhead => "one-step-ahead",
            StencilKind::Backward => "backward",
        };
        println!(
            "  {:<10} order {}  {:<15} {}",
            f.name(),
            f.declared_order(),
            kind,
            f
        );
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep { run, taus } => cmd_sweep(run, taus),
        Command::Stability { formula } => cmd_stability(&formula),
        Command::List => {
            cmd_list();
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
