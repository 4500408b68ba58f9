use std::io;
use std::path::PathBuf;
use std::process;

use adasync_cli::commands::{self, CliError, ExitCode, SweepParam};
use clap::{Parser, Subcommand};

/// Distributed adaptive synchronization scenarios.
///
/// Log verbosity follows `RUST_LOG` (default `warn`).
#[derive(Parser)]
#[command(name = "adasync", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario file without running it.
    Validate { file: PathBuf },
    /// Integrate a scenario and write trajectory.csv, feedforward.csv and metrics.json.
    Run {
        file: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Keep every k-th step.
        #[arg(long)]
        decimate: Option<usize>,
    },
    /// Re-run a scenario for several values of one parameter.
    Sweep {
        file: PathBuf,
        #[arg(long, value_enum)]
        param: SweepParam,
        /// Comma-separated, e.g. `0,0.5,1`.
        #[arg(long, allow_hyphen_values = true)]
        values: String,
        /// Summary CSV path; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let code = match Cli::parse().command {
        Command::Validate { file } => {
            let report = commands::validate(&file);
            print!("{report}");
            if report.passed() {
                ExitCode::Success
            } else if report.checks.iter().any(|c| c.name == "read") {
                ExitCode::Io
            } else {
                ExitCode::Invalid
            }
        }
        Command::Run { file, out, decimate } => match commands::run(&file, &out, decimate) {
            Ok(o) => {
                println!("wrote {}", o.trajectory_csv.display());
                println!("wrote {}", o.feedforward_csv.display());
                println!("wrote {}", o.metrics_json.display());
                println!("max sup error {:.6e}", o.report.max_sup_error);
                for a in &o.report.agents {
                    println!(
                        "agent {}: final-window rms {:.3e} ({:.2}% of first window), peak-to-peak {:.3e}",
                        a.agent,
                        a.final_window_rms,
                        100.0 * a.rms_ratio,
                        a.final_peak_to_peak
                    );
                }
                ExitCode::Success
            }
            Err(e) => fail(&e),
        },
        Command::Sweep { file, param, values, out } => {
            match commands::parse_values(&values).and_then(|v| commands::sweep_file(&file, param, &v)) {
                Ok(rows) => {
                    let written = match &out {
                        Some(path) => std::fs::File::create(path)
                            .and_then(|f| commands::write_sweep_csv(io::BufWriter::new(f), param, &rows))
                            .map_err(|source| CliError::Io { path: path.clone(), source }),
                        None => commands::write_sweep_csv(io::stdout().lock(), param, &rows)
                            .map_err(|source| CliError::Io { path: "<stdout>".into(), source }),
                    };
                    written.map_or_else(|e| fail(&e), |_| ExitCode::Success)
                }
                Err(e) => fail(&e),
            }
        }
    };
    process::exit(code as i32);
}

fn fail(e: &CliError) -> ExitCode {
    eprintln!("error: {e}");
    e.exit_code()
}
