use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use unitlab::kernels::OperatorKernel;
use unitlab::scenario::{self, RunOptions, Scenario};
use unitlab::trotter::ScheduleSpec;

#[derive(Parser)]
#[command(name = "unitlab", about = "Build units of CPD-semigroups and test Trotter-type convergence")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and write one CSV/JSON pair per check.
    Run {
        file: PathBuf,
        #[arg(long, env = "UNITLAB_OUT_DIR", default_value = "unitlab-out")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for schedule evaluation (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Override the schedule: `dyadic:MIN:MAX` or `random:COUNT`.
        #[arg(long)]
        schedule: Option<ScheduleSpec>,
    },
    /// Check a kernel JSON file for hermiticity, CPD and conditional CPD.
    Validate {
        kernel: PathBuf,
        #[arg(long, default_value_t = 0x5eed)]
        seed: u64,
    },
    Version,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { file, out, seed, threads, schedule } => {
            if let Some(n) = threads {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    eprintln!("error: {e}");
                    return ExitCode::from(2);
                }
            }
            let sc = match Scenario::load(&file) {
                Ok(sc) => sc,
                Err(e) => {
                    eprintln!("{}: {e}", file.display());
                    return ExitCode::from(2);
                }
            };
            let base_dir = file.parent().map(PathBuf::from).unwrap_or_default();
            let options = RunOptions { out_dir: out, base_dir, seed, schedule };
            match scenario::run(&sc, &options) {
                Ok(outcome) => {
                    print!("{outcome}");
                    if outcome.mismatches() > 0 {
                        eprintln!("{} expectation(s) not met", outcome.mismatches());
                        ExitCode::from(1)
                    } else {
                        ExitCode::SUCCESS
                    }
                }
                Err(e) => {
                    eprintln!("{}: {e}", file.display());
                    ExitCode::from(2)
                }
            }
        }
        Command::Validate { kernel, seed } => {
            let report = std::fs::read_to_string(&kernel)
                .map_err(unitlab::Error::from)
                .and_then(|text| OperatorKernel::from_json(&text))
                .and_then(|k| scenario::validate(&k, seed));
            match report {
                Ok(v) => {
                    print!("{v}");
                    if v.all_pass() {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(e) => {
                    eprintln!("{}: {e}", kernel.display());
                    ExitCode::from(2)
                }
            }
        }
        Command::Version => {
            println!("unitlab {}", env!("CARGO_PKG_VERSION"));
            ExitCode::SUCCESS
        }
    }
}
