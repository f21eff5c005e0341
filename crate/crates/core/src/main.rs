use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use agrisense::{output, season, Scenario};

#[derive(Parser)]
#[command(name = "agrisense", version, about = "Two-arm irrigation season simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate both arms and write all artifacts.
    Run {
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compare publish/subscribe and request/response over one packet stream.
    BenchTransport { scenario: PathBuf },
    /// Re-render report tables from the totals stored in a run directory.
    Report { out_dir: PathBuf },
}

fn run(cli: Cli) -> agrisense::Result<()> {
    match cli.command {
        Command::Run { scenario, out, seed } => {
            let mut s = Scenario::load(&scenario)?;
            if let Some(seed) = seed {
                s.seed = seed;
            }
            let run = season::run_season(&s)?;
            output::write_run(&run, &out)?;
            print!("{}", run.report.to_text());
            println!("wrote {}", out.display());
        }
        Command::BenchTransport { scenario } => {
            let s = Scenario::load(&scenario)?;
            let rows = season::bench_transport(&s)?;
            let csv = output::transport_csv(&rows)?;
            print!("{}", String::from_utf8_lossy(&csv));
        }
        Command::Report { out_dir } => {
            let report = output::rerender_report(&out_dir)?;
            print!("{}", report.to_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
