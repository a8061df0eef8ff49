//! `dccsim`: run beaconing scenarios, sweeps, link budgets and field-log
//! analysis. Exit status 0 on success, 1 on runtime or validation failure,
//! 2 on usage errors.

mod budget;
mod config;
mod logs;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use config::{RunFile, SweepAxis};

#[derive(Debug, Parser)]
#[command(name = "dccsim", version, about = "DCC beaconing simulator and field-log analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Received power versus distance and the crossover at a sensitivity.
    LinkBudget(budget::LinkBudgetArgs),
    /// Run a configured scenario for every replication seed.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        replications: Option<u32>,
    },
    /// Run a configuration once per swept value.
    #[command(allow_negative_numbers = true)]
    Sweep {
        config: PathBuf,
        /// NAME=V1,V2,...; repeat for a multi-axis sweep. Replaces the
        /// axes in the configuration.
        #[arg(long = "param", value_parser = SweepAxis::parse_flag)]
        params: Vec<SweepAxis>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Join transmit and receive logs into a PDR table and power-curve fit.
    AnalyzeLogs(logs::AnalyzeLogsArgs),
    /// Fit y = a·d^b to (distance, dBm) points.
    FitCurve(logs::FitCurveArgs),
}

fn load(path: &PathBuf, seed: Option<u64>, replications: Option<u32>) -> Result<RunFile> {
    let mut file = RunFile::load(path)?;
    if let Some(s) = seed {
        file.sim.seed = s;
    }
    if let Some(r) = replications {
        file.replications = r;
    }
    file.validate()?;
    Ok(file)
}

fn output_dir(file: &RunFile, flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| file.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"))
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::LinkBudget(args) => budget::run(&args),
        Command::Run { config, out, seed, replications } => {
            let file = load(&config, seed, replications)?;
            let dir = output_dir(&file, out);
            let outputs = output::run_replications(&file)?;
            output::write_run(&dir, &file, &outputs)?;
            for o in &outputs {
                let cbr = o.ambient_cbr(file.sim.discard_first_s);
                println!(
                    "seed {}: {} frames, ambient CBR {}",
                    o.seed,
                    o.frames_sent,
                    cbr.map_or("NA".into(), dccsim_core::metrics::fmt_sig6)
                );
            }
            println!("wrote {}", dir.display());
            Ok(())
        }
        Command::Sweep { config, params, out } => {
            let file = load(&config, None, None)?;
            let axes = if params.is_empty() { file.sweep.clone() } else { params };
            if axes.is_empty() {
                anyhow::bail!("no sweep parameter: pass --param NAME=V1,V2 or add [[sweep]] to the configuration");
            }
            if axes.iter().any(|a| a.values.is_empty()) {
                println!("no values to sweep");
                return Ok(());
            }
            let dir = output_dir(&file, out);
            let summary = output::run_sweep(&dir, &file, &axes)?;
            print!("{}", std::fs::read_to_string(&summary)?);
            Ok(())
        }
        Command::AnalyzeLogs(args) => logs::analyze(&args),
        Command::FitCurve(args) => logs::fit_curve(&args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
