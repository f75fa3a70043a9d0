use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thermolab_cli::{catalog_lines, replay, run, RunOptions};

#[derive(Parser)]
#[command(name = "thermolab", version, about = "Run equilibration and thermalisation scenarios")]
struct Cli {
    /// Base seed, overriding the config's.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory for artifacts and the manifest.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every scenario in a config file.
    Run { config: PathBuf },
    /// Print the experiment catalog.
    List,
    /// Re-run a recorded manifest and compare artifacts byte for byte.
    Replay { manifest: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::List => {
            for line in catalog_lines() {
                println!("{line}");
            }
            0
        }
        Command::Run { config } => match run(&config, &RunOptions { seed: cli.seed, threads: cli.threads, out: cli.out.clone() }) {
            Ok(m) => {
                for s in &m.scenarios {
                    println!("{} {} ({:.2} s)", if s.passed { "PASS" } else { "FAIL" }, s.name, s.wall_time_s);
                }
                println!("manifest: {}", cli.out.join(thermolab_cli::MANIFEST_NAME).display());
                m.exit_code
            }
            Err(e) => {
                eprintln!("{e}");
                e.exit_code()
            }
        },
        Command::Replay { manifest } => match replay(&manifest, cli.threads) {
            Ok(_) => {
                println!("replay identical");
                0
            }
            Err(e) => {
                eprintln!("{e}");
                e.exit_code()
            }
        },
    };
    ExitCode::from(code as u8)
}
