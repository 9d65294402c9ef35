//! `stakesim`: wait-time estimates, scenario runs and history comparison.
//!
//! Exit codes: 0 success, 1 usage, 2 config, 3 runtime.

use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use stakesim_core::chain::ChurnParams;
use stakesim_core::queue::{
    compare_history, estimate_wait, parse_history_csv, ChurnTable, Direction, DEFAULT_MAX_TIERS,
};
use stakesim_core::scenario::{ScenarioConfig, Simulation};

#[derive(Debug, Parser)]
#[command(name = "stakesim", version, about = "Staking queue, pool and restaking simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ChurnArgs {
    #[arg(long, default_value_t = 4)]
    min_churn: u64,
    #[arg(long, default_value_t = 65536)]
    churn_quotient: u64,
    #[arg(long, default_value_t = 225)]
    epochs_per_day: u64,
    /// Number of churn tiers in the lookup table.
    #[arg(long, default_value_t = DEFAULT_MAX_TIERS)]
    max_tiers: usize,
}

impl ChurnArgs {
    fn table(&self) -> Result<ChurnTable, Failure> {
        let params = ChurnParams {
            min_churn: self.min_churn,
            churn_quotient: self.churn_quotient,
            epochs_per_day: self.epochs_per_day,
        };
        ChurnTable::build(params, self.max_tiers).map_err(|e| Failure::Config(format!("churn table: {e}")))
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate how long the last validator in a queue waits.
    Estimate {
        #[arg(long)]
        active: u64,
        #[arg(long)]
        queue: u64,
        #[arg(long, default_value = "entry")]
        direction: Direction,
        #[command(flatten)]
        churn: ChurnArgs,
        /// Also write the estimate as a one-row CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scenario file and write its CSV outputs.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Override the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compare observed queue waits against the estimator.
    CompareHistory {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        churn: ChurnArgs,
        /// Residual table CSV; printed to standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

#[derive(Serialize)]
struct EstimateRow<'a> {
    active: u64,
    queue: u64,
    direction: Direction,
    churn_time_days: f64,
    curr_churn: u64,
    ave_churn: f64,
    wait_secs: u64,
    wait_days: u64,
    wait_text: &'a str,
}

fn write_csv<T: Serialize>(out: &mut dyn Write, rows: &[T]) -> Result<(), Failure> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(runtime)?;
    }
    w.flush().map_err(runtime)
}

fn create(path: &Path) -> Result<File, Failure> {
    File::create(path).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<(), Failure> {
    let stdout = &mut io::stdout().lock();
    match cli.command {
        Command::Estimate { active, queue, direction, churn, out } => {
            let table = churn.table()?;
            let est = estimate_wait(active, queue, &table, direction).map_err(runtime)?;
            writeln!(stdout, "Churn Time Days: {:.2}", est.churn_time_days).map_err(runtime)?;
            writeln!(stdout, "Current Churn: {}", est.curr_churn).map_err(runtime)?;
            writeln!(stdout, "Average Churn: {:.2}", est.ave_churn).map_err(runtime)?;
            writeln!(stdout, "Wait Time: {}", est.wait_text).map_err(runtime)?;
            if let Some(path) = out {
                let row = EstimateRow {
                    active,
                    queue,
                    direction,
                    churn_time_days: est.churn_time_days,
                    curr_churn: est.curr_churn,
                    ave_churn: est.ave_churn,
                    wait_secs: est.wait_secs,
                    wait_days: est.wait_days,
                    wait_text: &est.wait_text,
                };
                write_csv(&mut create(&path)?, &[row])?;
            }
        }
        Command::Simulate { config, out, seed } => {
            let mut cfg = ScenarioConfig::load(&config)
                .map_err(|e| Failure::Config(format!("{}: {e}", config.display())))?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let output = Simulation::new(cfg).and_then(Simulation::run).map_err(runtime)?;
            output.write_to(&out).map_err(|e| runtime(format!("{}: {e}", out.display())))?;
            stdout.write_all(output.summary.as_bytes()).map_err(runtime)?;
        }
        Command::CompareHistory { input, churn, out } => {
            let table = churn.table()?;
            let file = File::open(&input).map_err(|e| runtime(format!("{}: {e}", input.display())))?;
            let observations = parse_history_csv(file).map_err(runtime)?;
            let cmp = compare_history(&observations, &table).map_err(runtime)?;
            match out {
                Some(path) => write_csv(&mut create(&path)?, &cmp.rows)?,
                None => write_csv(stdout, &cmp.rows)?,
            }
            writeln!(stdout, "rows: {}", cmp.rows.len()).map_err(runtime)?;
            writeln!(stdout, "mean_abs_residual_days: {:.4}", cmp.mean_abs_residual).map_err(runtime)?;
            writeln!(stdout, "max_abs_residual_days: {:.4}", cmp.max_abs_residual).map_err(runtime)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Config(m) => eprintln!("config error: {m}"),
                Failure::Runtime(m) => eprintln!("error: {m}"),
            }
            ExitCode::from(f.code())
        }
    }
}
