//! Command line front end: argument parsing, report printing, exit codes.
//!
//! All verification logic lives in the library; this binary maps flags
//! onto a [`RunConfig`], prints the report, and encodes the verdict in
//! the exit status. Verdicts own codes 0 (secure), 1 (leaky) and
//! 2 (undecided), so every failure, usage errors included, exits 3 to
//! stay distinguishable in scripts.

use std::path::PathBuf;
use std::process::exit;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use maskcheck_core::counting::smtsolve::{self, Answer};
use maskcheck_core::counting::DEFAULT_BIT_BUDGET;
use maskcheck_core::pipeline::{run, Mode, RunConfig};
use maskcheck_core::report::{emit_report, Format};
use maskcheck_core::Width;

const FAILURE: i32 = 3;

#[derive(Parser)]
#[command(
    name = "maskcheck",
    version,
    about = "Verify masked programs against order-d probing attacks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Verify a masked program and report every genuine leak.
    Verify(VerifyArgs),
    /// Decide an emitted formula file with the built-in solver.
    ///
    /// Prints sat, unsat or unknown on the first output line, so the
    /// binary itself can serve as the --solver command of a verify run.
    SmtSolve {
        /// Formula file, as written next to a budget-exceeded set.
        file: PathBuf,
    },
}

#[derive(Args)]
struct VerifyArgs {
    /// Masked program source file.
    file: PathBuf,

    /// Attack order d: the number of simultaneous probes to defend
    /// against.
    #[arg(short = 'd', long, default_value_t = 1, env = "MASKCHECK_ORDER")]
    order: usize,

    /// Word width in bits, 1 to 16.
    #[arg(
        short = 'w',
        long,
        default_value = "8",
        value_parser = parse_width,
        env = "MASKCHECK_WIDTH"
    )]
    width: Width,

    /// full resolves every potential leak exactly; types stops after
    /// inference and lists what is left.
    #[arg(long, value_enum, default_value_t = ModeArg::Full, env = "MASKCHECK_MODE")]
    mode: ModeArg,

    /// Counting worker threads; 0 means one per core.
    #[arg(long, default_value_t = 0, env = "MASKCHECK_WORKERS")]
    workers: usize,

    /// Bit budget bounding histogram and enumeration sizes.
    #[arg(long, default_value_t = DEFAULT_BIT_BUDGET, env = "MASKCHECK_BUDGET")]
    budget: u32,

    /// Directory that receives solver formulas for sets over budget.
    #[arg(long, env = "MASKCHECK_SMT_DIR")]
    smt_dir: Option<PathBuf>,

    /// External solver command; the formula path is appended as the last
    /// argument. Try `maskcheck smt-solve`.
    #[arg(long, env = "MASKCHECK_SOLVER")]
    solver: Option<String>,

    /// Pattern store file shared across runs; created on first use.
    #[arg(long, env = "MASKCHECK_PATTERNS")]
    patterns: Option<PathBuf>,

    /// Report format.
    #[arg(long, value_enum, default_value_t = FormatArg::Text, env = "MASKCHECK_FORMAT")]
    format: FormatArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Full,
    Types,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Text,
    Json,
}

fn parse_width(s: &str) -> Result<Width, String> {
    let bits: u8 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    Width::new(bits).map_err(|e| e.to_string())
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version are ordinary exits; everything else is a
            // usage failure and must not collide with verdict codes.
            if matches!(err.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                err.exit();
            }
            let _ = err.print();
            exit(FAILURE);
        }
    };
    match cli.command {
        Command::Verify(args) => verify(args),
        Command::SmtSolve { file } => smt_solve(&file),
    }
}

fn verify(args: VerifyArgs) -> ! {
    let config = RunConfig {
        input: args.file,
        order: args.order,
        width: args.width,
        mode: match args.mode {
            ModeArg::Full => Mode::Full,
            ModeArg::Types => Mode::TypesOnly,
        },
        workers: args.workers,
        budget: args.budget,
        smt_dir: args.smt_dir,
        solver: args.solver,
        patterns_path: args.patterns,
        format: match args.format {
            FormatArg::Text => Format::Text,
            FormatArg::Json => Format::Json,
        },
    };
    match run(&config) {
        Ok(report) => {
            println!("{}", emit_report(&report, config.format));
            exit(report.verdict.exit_code());
        }
        Err(err) => {
            eprintln!("maskcheck: {err}");
            exit(FAILURE);
        }
    }
}

fn smt_solve(file: &PathBuf) -> ! {
    let text = match std::fs::read_to_string(file) {
        Ok(text) => text,
        Err(err) => {
            eprintln!("maskcheck: {}: {err}", file.display());
            exit(FAILURE);
        }
    };
    match smtsolve::solve_str(&text) {
        Ok(answer) => {
            println!(
                "{}",
                match answer {
                    Answer::Sat => "sat",
                    Answer::Unsat => "unsat",
                    Answer::Unknown => "unknown",
                }
            );
            exit(0);
        }
        Err(err) => {
            eprintln!("maskcheck: {}: {err}", file.display());
            exit(FAILURE);
        }
    }
}
