//! `codeloop`: run code-executing agent sessions, benchmarks and trace analysis.

mod analyze;
mod bench;
mod config;
mod kernel_check;
mod run;

use std::io::IsTerminal;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use codeloop_core::mock_kernel::{serve, MockOptions};
use tracing_subscriber::EnvFilter;

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAULT: u8 = 1;
pub const EXIT_NO_ANSWER: u8 = 2;
pub const EXIT_USAGE: u8 = 64;
pub const EXIT_DATA: u8 = 65;
pub const EXIT_IO: u8 = 74;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config or missing inputs.
    Usage(String),
    /// Inputs that exist but cannot be used.
    Data(String),
    Io(String),
    /// A dependency such as a remote service failed at run time.
    Fault(String),
}

impl CliError {
    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Self::Io(format!("{}: {e}", path.display()))
    }

    fn code(&self) -> u8 {
        match self {
            Self::Usage(_) => EXIT_USAGE,
            Self::Data(_) => EXIT_DATA,
            Self::Io(_) => EXIT_IO,
            Self::Fault(_) => EXIT_FAULT,
        }
    }

    fn message(&self) -> &str {
        match self {
            Self::Usage(m) | Self::Data(m) | Self::Io(m) | Self::Fault(m) => m,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "codeloop", version, about = "Multimodal agent that reasons by writing and running code")]
struct Cli {
    /// More log output on stderr (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Answer one question about one or more images.
    Run(run::RunArgs),
    /// Evaluate a JSONL dataset and write a report.
    Bench(bench::BenchArgs),
    /// Categorize and cluster the code in saved traces.
    Analyze(analyze::AnalyzeArgs),
    /// Re-run a saved trace with its recorded model turns and compare.
    Replay(run::ReplayArgs),
    /// Check that a kernel follows the wire protocol.
    KernelCheck(kernel_check::KernelCheckArgs),
    /// Serve the wire protocol with the built-in mock interpreter.
    #[command(hide = true)]
    MockKernel {
        #[arg(trailing_var_arg = true, allow_hyphen_values = true)]
        args: Vec<String>,
    },
}

fn init_logging(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(default));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .with_target(false)
        .try_init();
}

/// Creates the output directory; every file a command writes goes below it.
pub fn prepare_output_dir(dir: &Path) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    Ok(dir.to_path_buf())
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    if let Command::MockKernel { args } = &cli.command {
        return match MockOptions::parse(args) {
            Ok(opts) => ExitCode::from(serve(&opts).clamp(0, 255) as u8),
            Err(e) => {
                eprintln!("mock-kernel: {e}");
                ExitCode::from(EXIT_USAGE)
            }
        };
    }
    init_logging(cli.verbose);
    let outcome = match cli.command {
        Command::Run(args) => run::run(args),
        Command::Bench(args) => bench::bench(args),
        Command::Analyze(args) => analyze::analyze(args),
        Command::Replay(args) => run::replay(args),
        Command::KernelCheck(args) => kernel_check::kernel_check(args),
        Command::MockKernel { .. } => unreachable!("handled above"),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
