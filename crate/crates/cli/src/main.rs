use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use eraser_qkd::harness::{self, HarnessError};

/// Quantum-eraser key distribution simulator.
#[derive(Parser)]
#[command(name = "eraser-qkd", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the session described by a JSON config and write transcript + report.
    Run { config: PathBuf },
    /// Sweep the interferometer phase over [0, 2π) for a named layout.
    Sweep {
        layout: String,
        points: usize,
        out: PathBuf,
    },
    /// Write the exact error-rate table for every attack.
    Oracle { out: PathBuf },
    /// Run the built-in invariant checks.
    Selftest,
}

fn fail(e: HarnessError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config } => match harness::cmd_run(&config) {
            Ok(outcome) => {
                for line in outcome.lines {
                    println!("{line}");
                }
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
        Command::Sweep {
            layout,
            points,
            out,
        } => match harness::cmd_sweep(&layout, points, &out) {
            Ok(r) => {
                let vis: Vec<String> = r
                    .visibility
                    .iter()
                    .map(|(k, v)| format!("{k}={v:.6}"))
                    .collect();
                println!("{} ({} points) visibility {}", r.layout, r.points, vis.join(" "));
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
        Command::Oracle { out } => match harness::cmd_oracle(&out) {
            Ok(r) => {
                println!(
                    "{} cells, {} overall rows -> {}",
                    r.per_mode.len(),
                    r.overall.len(),
                    out.display()
                );
                for f in &r.findings {
                    println!("note: {f}");
                }
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
        Command::Selftest => match harness::cmd_selftest() {
            Ok(report) => {
                for line in report.lines() {
                    println!("{line}");
                }
                if report.all_passed() {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(1)
                }
            }
            Err(e) => fail(e),
        },
    }
}
