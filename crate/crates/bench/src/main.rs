use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use ehrguard_bench::client::{fresh_gateway, BENCH_ADMIN};
use ehrguard_bench::report::{growth, table};
use ehrguard_bench::{
    emit_report, summarize, sweep, Assignment, BenchError, Format, HttpClient, InProcess, Operation,
    ScenarioConfig, SweepResult,
};

#[derive(Debug, Parser)]
#[command(name = "bench", about = "Time EHR requests against the gateway")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Populate a gateway and time authorized and unauthorized requests.
    Run(RunArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Inprocess,
    Http,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AssignArg {
    Blocks,
    RoundRobin,
}

#[derive(Debug, clap::Args)]
struct RunArgs {
    #[arg(long, default_value_t = 2)]
    doctors: usize,
    /// Ignored when --populations is given.
    #[arg(long, default_value_t = 5)]
    patients: usize,
    #[arg(long, default_value_t = 4)]
    rounds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated patient counts, each run on a fresh gateway.
    #[arg(long, value_delimiter = ',')]
    populations: Vec<usize>,
    #[arg(long, value_enum, default_value_t = Mode::Inprocess)]
    mode: Mode,
    /// With --mode http, use this running gateway instead of starting one.
    /// Its ledger must be empty.
    #[arg(long, requires = "admin_credential")]
    url: Option<String>,
    #[arg(long)]
    admin_credential: Option<String>,
    #[arg(long, value_enum, default_value_t = AssignArg::Blocks)]
    assignment: AssignArg,
    /// Parallel requests per round.
    #[arg(long, default_value_t = 1)]
    concurrency: usize,
    /// Per-sample CSV destination.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let Command::Run(args) = Cli::parse().command;
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bench: {e}");
            match e {
                BenchError::SetupFailure(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}

fn run(args: &RunArgs) -> Result<(), BenchError> {
    let cfg = ScenarioConfig {
        n_doctors: args.doctors,
        n_patients: args.patients,
        rounds: args.rounds,
        seed: args.seed,
        assignment: match args.assignment {
            AssignArg::Blocks => Assignment::Blocks,
            AssignArg::RoundRobin => Assignment::RoundRobin,
        },
        concurrency: args.concurrency,
    };
    cfg.validate()?;
    let populations = if args.populations.is_empty() { vec![args.patients] } else { args.populations.clone() };
    let setup_err = |e: ehrguard_bench::ClientError| BenchError::SetupFailure(e.to_string());
    let result = match (args.mode, &args.url) {
        (Mode::Inprocess, _) => sweep(&cfg, &populations, |c| InProcess::fresh(c.seed).map_err(setup_err))?,
        (Mode::Http, None) => sweep(&cfg, &populations, |c| {
            let g = fresh_gateway(c.seed).map_err(setup_err)?;
            Ok(HttpClient::spawn(Arc::new(g))?)
        })?,
        (Mode::Http, Some(url)) => {
            if populations.len() > 1 {
                return Err(BenchError::Config("an external gateway can only host one population".into()));
            }
            let cred = args.admin_credential.as_deref().unwrap_or(BENCH_ADMIN);
            sweep(&cfg, &populations, |_| Ok(HttpClient::connect(url, cred)?))?
        }
    };
    if let Some(path) = &args.out {
        let mut w = BufWriter::new(File::create(path)?);
        emit_report(&result.samples, Format::Csv, &mut w)?;
        w.flush()?;
    }
    print_summary(&result, &populations)
}

fn print_summary(result: &SweepResult, populations: &[usize]) -> Result<(), BenchError> {
    let rows = summarize(&result.samples)?;
    let mut out = io::stdout().lock();
    out.write_all(table(&rows).as_bytes())?;
    writeln!(out)?;
    for t in &result.tallies {
        writeln!(out, "population {:>5}: {} GRANTED, {} REJECTED on chain", t.population, t.granted, t.rejected)?;
    }
    if let (Some(&small), Some(&large)) = (populations.iter().min(), populations.iter().max()) {
        if small != large {
            for op in [Operation::Authorized, Operation::Unauthorized] {
                if let Some(g) = growth(&rows, op, small, large) {
                    writeln!(out, "{} mean at {large} / mean at {small}: {g:.2}x", op.as_str())?;
                }
            }
        }
    }
    Ok(())
}
