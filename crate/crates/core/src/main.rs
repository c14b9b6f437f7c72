use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use singosc::config::{output_root_from_env, RunConfig, SweepAxis};
use singosc::run::{run, run_residual, sweep, RunResult};
use singosc::selfcheck::{presets_dir, selfcheck, Outcome};
use singosc::Error;

/// Squeezed Gaussian packets of the time-dependent singular oscillator.
///
/// Outputs go under $SINGOSC_OUT (default ./out).
#[derive(Debug, Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate one configuration and write its outputs.
    Run { config: PathBuf },
    /// Repeat a configuration over values of one parameter.
    Sweep {
        config: PathBuf,
        #[arg(long, value_enum)]
        axis: SweepAxis,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        values: Vec<f64>,
    },
    /// Schrödinger-residual convergence study under grid halving.
    Residual { config: PathBuf },
    /// Run the invariant suite over the shipped presets.
    Selfcheck {
        /// Preset directory (default: $SINGOSC_PRESETS or the bundled one).
        #[arg(long)]
        presets: Option<PathBuf>,
    },
}

fn report(r: &RunResult) -> i32 {
    println!("{}: {} -> {}", r.name, r.status, r.output_dir.display());
    if let Some(l) = &r.final_ledger {
        println!(
            "  theta = {:.12}  theta_H = {:.12}  gamma_l = {:.12} {:+.3e}i  gamma_G = {:.12}",
            l.theta, l.theta_h, l.gamma_l[0], l.gamma_l[1], l.gamma_g
        );
    }
    if let Some(s) = &r.diagnostics.residual_study {
        for lv in &s.levels {
            println!("  n = {:6}  h = {:.4e}  r = {:.4e}", lv.n, lv.h, lv.residual);
        }
        println!("  observed orders {:?}", s.orders);
    }
    for c in r.failed_checks() {
        println!("  failed {} = {:.3e} (limit {:.1e})", c.name, c.value, c.limit);
    }
    if let Some(e) = &r.error {
        eprintln!("error [{}]: {}", e.code, e.message);
    }
    r.exit_code()
}

fn main_inner(cli: Cli) -> Result<i32, Error> {
    let root = output_root_from_env();
    Ok(match cli.command {
        Command::Run { config } => report(&run(&RunConfig::from_path(&config)?, &root)?),
        Command::Residual { config } => report(&run_residual(&RunConfig::from_path(&config)?, &root)?),
        Command::Sweep { config, axis, values } => {
            let table = sweep(&RunConfig::from_path(&config)?, axis, &values, &root)?;
            for r in &table.rows {
                println!(
                    "{:3} {}={:<10} {:14} dtheta_H={:<22} prefactor={:<22} expected={}",
                    r.index,
                    axis.name(),
                    r.value,
                    r.status,
                    r.delta_theta_h.map_or("-".into(), |v| format!("{v:.15}")),
                    r.prefactor.map_or("-".into(), |v| format!("{v:.15}")),
                    r.expected_prefactor.map_or("-".into(), |v| format!("{v:.15}")),
                );
            }
            for c in table.checks.iter().filter(|c| !c.pass) {
                println!("  failed {} = {:.3e} (limit {:.1e})", c.name, c.value, c.limit);
            }
            table.exit_code()
        }
        Command::Selfcheck { presets } => {
            let lines = selfcheck(&presets.unwrap_or_else(presets_dir), &root)?;
            for l in &lines {
                println!("{l}");
            }
            let failed = lines.iter().filter(|l| l.outcome == Outcome::Fail).count();
            println!("{} checks, {failed} failed", lines.len());
            if failed == 0 {
                0
            } else {
                4
            }
        }
    })
}

fn main() -> ExitCode {
    let code = match main_inner(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.code());
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
