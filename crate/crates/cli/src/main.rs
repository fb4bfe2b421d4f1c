//! Command-line front end: solve one scenario, sweep comb bandwidths, or
//! validate a config file. All heavy lifting lives in the `ramancomb`
//! library crate.

use std::error::Error as StdError;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ramancomb::config::{Scenario, ScenarioConfig};
use ramancomb::runner::{run_bandwidth_sweep, run_scenario};

#[derive(Parser)]
#[command(
    name = "ramancomb",
    version,
    about = "Power evolution of a WDM channel comb under inter-channel stimulated Raman scattering",
    after_help = "Scenario files are JSON; run `validate` to check one without solving."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one scenario with both solvers and write profiles, plots and a
    /// JSON report into the configured output directory.
    Solve {
        /// Scenario config, JSON.
        #[arg(long)]
        config: PathBuf,
        /// Override a config field, dotted path syntax:
        /// `--override solver.dz_m=0.4 --override spectrum.launch.power_dbm=-4`.
        #[arg(long = "override", value_name = "FIELD=VALUE")]
        overrides: Vec<String>,
    },
    /// Truncate the comb to a range of bandwidths and time both solvers at
    /// each point; writes sweep.csv, sweep_report.json and a timing plot.
    ///
    /// Points run in parallel when the RC_THREADS environment variable asks
    /// for more than one worker.
    Sweep {
        /// Scenario config, JSON.
        #[arg(long)]
        config: PathBuf,
        /// First bandwidth, THz (measured from the lowest channel).
        #[arg(long)]
        from: f64,
        /// Last bandwidth, THz.
        #[arg(long)]
        to: f64,
        /// Bandwidth increment, THz.
        #[arg(long)]
        step: f64,
        #[arg(long = "override", value_name = "FIELD=VALUE")]
        overrides: Vec<String>,
    },
    /// Parse, validate and resolve a config, reporting what it describes;
    /// exits nonzero with a dotted field path when something is wrong.
    Validate {
        /// Scenario config, JSON.
        #[arg(long)]
        config: PathBuf,
    },
}

fn load(config: &Path, overrides: &[String]) -> ramancomb::Result<Scenario> {
    let cfg = if overrides.is_empty() {
        ScenarioConfig::load(config)?
    } else {
        ScenarioConfig::load_with_overrides(config, overrides)?
    };
    let base = config.parent().unwrap_or_else(|| Path::new("."));
    cfg.resolve(base)
}

fn fail(e: &dyn StdError) -> ExitCode {
    eprintln!("error: {e}");
    let mut cause = e.source();
    while let Some(c) = cause {
        eprintln!("  caused by: {c}");
        cause = c.source();
    }
    ExitCode::from(2)
}

fn solve(config: &Path, overrides: &[String]) -> ExitCode {
    let scenario = match load(config, overrides) {
        Ok(s) => s,
        Err(e) => return fail(&e),
    };
    let report = match run_scenario(&scenario) {
        Ok(r) => r,
        Err(e) => return fail(&e),
    };
    println!(
        "comb: {} channels, {:.2} dBm total launch",
        report.channel_count, report.total_launch_power_dbm
    );
    if let Some(n) = &report.numerical {
        println!(
            "numerical: {} at dz = {} m, {:.3} s, span-end total {:.2} dBm",
            n.scheme, n.dz_m, n.wall_time_s, n.final_total_power_dbm
        );
    }
    if let Some(p) = &report.perturbative {
        println!(
            "perturbative: order {} (quadrature step {} m), {:.3} s, span-end total {:.2} dBm",
            p.selection.selected_order, p.quadrature_step_m, p.wall_time_s, p.final_total_power_dbm
        );
    }
    if let Some(c) = &report.comparison {
        println!(
            "agreement at z = {} m: max {:.4} dB, rms {:.4} dB",
            c.z_m, c.max_abs_error_db, c.rms_error_db
        );
    }
    for a in &report.artifacts {
        println!("wrote {a}");
    }
    ExitCode::SUCCESS
}

fn sweep(config: &Path, from: f64, to: f64, step: f64, overrides: &[String]) -> ExitCode {
    let scenario = match load(config, overrides) {
        Ok(s) => s,
        Err(e) => return fail(&e),
    };
    let report = match run_bandwidth_sweep(&scenario, from, to, step) {
        Ok(r) => r,
        Err(e) => return fail(&e),
    };
    println!("bandwidth_THz  channels  solver        max_err_dB  wall_s");
    for r in &report.results {
        println!(
            "{:>13.2}  {:>8}  {:<12}  {:>10.4}  {:>6.4}",
            r.bandwidth_thz, r.channel_count, r.solver, r.max_error_db, r.wall_time_s
        );
    }
    if !report.failures.is_empty() {
        for f in &report.failures {
            eprintln!("failed at {} THz: {}", f.bandwidth_thz, f.message);
        }
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}

fn validate(config: &Path) -> ExitCode {
    match load(config, &[]) {
        Ok(s) => {
            let cfg = &s.config;
            println!(
                "ok: {} channels in {} band(s), {:.2} dBm total launch, {} km span, output to {}",
                s.comb.channel_count(),
                s.comb.bands.len(),
                s.comb.total_power_dbm(),
                cfg.fiber.span_length_km,
                cfg.output.directory.display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Solve { config, overrides } => solve(&config, &overrides),
        Command::Sweep {
            config,
            from,
            to,
            step,
            overrides,
        } => sweep(&config, from, to, step, &overrides),
        Command::Validate { config } => validate(&config),
    }
}
