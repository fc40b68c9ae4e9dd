use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qfilter_cli::app::{run_file, verify, ExitStatus};

/// Controlled quantum filtering experiments and verification suites.
#[derive(Parser, Debug)]
#[command(name = "qfilter", version)]
struct Cli {
    /// Output path prefix (overrides the config's `output`).
    #[arg(long, global = true)]
    out: Option<String>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Master seed (overrides the config's `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run { config: PathBuf },
    /// Run a named property suite: invariants, lemma, dynkin, dpp, picard, chaos.
    Verify { suite: String },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be ≥ 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let status = match cli.command {
        Command::Run { config } => match run_file(&config, cli.out.as_deref(), cli.seed) {
            Ok(out) => {
                for f in &out.files {
                    println!("{}", f.display());
                }
                ExitStatus::Success
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitStatus::of_error(&e)
            }
        },
        Command::Verify { suite } => match verify(&suite, cli.out.as_deref()) {
            Ok((report, _)) => {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&report).expect("report serializes")
                );
                if report.passed {
                    ExitStatus::Success
                } else {
                    ExitStatus::PropertyFailed
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitStatus::of_error(&e)
            }
        },
    };
    ExitCode::from(status.code() as u8)
}
