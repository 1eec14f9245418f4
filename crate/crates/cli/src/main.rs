use std::path::PathBuf;
use std::process::ExitCode;

use ace_cli::bench::{DEFAULT_BATCH_SIZES, MIN_SAMPLES};
use ace_cli::{cmd_bench_crypto, cmd_bench_pipeline, cmd_simulate, cmd_tables, write_file, BenchReport, CliError};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "ace",
    version,
    about = "ACE runtime benchmarks, simulations and model tables"
)]
struct Cli {
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// `key = value` file overriding simulation or model parameters.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Microbenchmarks of the attestation and key-derivation primitives.
    BenchCrypto {
        #[arg(long, default_value_t = MIN_SAMPLES)]
        samples: usize,
    },
    /// Per-phase timings of the leader pipeline.
    BenchPipeline {
        #[arg(long, value_delimiter = ',', num_args = 1.., default_values_t = DEFAULT_BATCH_SIZES)]
        batch_sizes: Vec<usize>,
        #[arg(long, default_value_t = MIN_SAMPLES)]
        samples: usize,
    },
    /// Run a consensus scenario on the simulated clock.
    Simulate { scenario: String },
    /// Emit the cost-model comparison tables.
    Tables,
}

fn emit_bench(report: &BenchReport, out: Option<&PathBuf>) -> Result<ExitCode, CliError> {
    let text = report.to_text();
    print!("{text}");
    if let Some(dir) = out {
        write_file(&dir.join(format!("{}.txt", report.name)), &text)?;
        write_file(&dir.join(format!("{}.csv", report.name)), &report.to_csv())?;
    }
    for c in report.checks.iter().filter(|c| !c.passed) {
        eprintln!("{}: {} {}", c.status(), c.name, c.detail);
    }
    Ok(if report.ok() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::BenchCrypto { samples } => emit_bench(&cmd_bench_crypto(cli.seed, samples), cli.out.as_ref()),
        Command::BenchPipeline { batch_sizes, samples } => {
            emit_bench(&cmd_bench_pipeline(cli.seed, &batch_sizes, samples), cli.out.as_ref())
        }
        Command::Simulate { scenario } => {
            let output = cmd_simulate(&scenario, cli.config.as_deref(), cli.seed, cli.out.as_deref())?;
            if output.files.is_empty() {
                print!("{}", output.rendered);
            } else {
                for f in &output.files {
                    println!("wrote {}", f.display());
                }
            }
            let failures = output.failures();
            for f in &failures {
                eprintln!("check failed: {f}");
            }
            Ok(if failures.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::Tables => {
            let out = cli.out.unwrap_or_else(|| PathBuf::from("tables"));
            for f in cmd_tables(cli.config.as_deref(), &out)? {
                println!("wrote {}", f.display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
