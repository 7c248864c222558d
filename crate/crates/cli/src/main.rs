//! `rearr`: generate, rearrange, scan and verify type-R rearrangements.
//!
//! Exit codes: 0 success, 2 usage or schema error, 3 truncated trace,
//! 4 verification failure, 1 anything else (I/O).

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::SeriesArgs;

#[derive(Parser, Debug)]
#[command(name = "rearr", version, about = "Type-R rearrangements of conditionally divergent series")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the first terms and their block decomposition.
    Generate(GenerateArgs),
    /// Run the greedy type-R rearrangement toward a target.
    Rearrange(RearrangeArgs),
    /// Scan block windows for the substantial properties and print a Z_R hint.
    Scan(ScanArgs),
    /// Check a trace CSV for type-R order and the sandwich bound.
    Verify(VerifyArgs),
    /// Block number sequence of a newline-delimited index list.
    Blocknum(BlocknumArgs),
}

#[derive(Args, Debug)]
pub struct OutArgs {
    /// Directory for output files (created if missing).
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub series: SeriesArgs,
    /// Number of terms.
    #[arg(long)]
    pub horizon: usize,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug)]
pub struct RearrangeArgs {
    #[command(flatten)]
    pub series: SeriesArgs,
    /// Target r, as `p/q` or a decimal.
    #[arg(long, allow_hyphen_values = true)]
    pub target: String,
    #[arg(long)]
    pub steps: usize,
    /// Step counts for the block growth profile [default: powers of ten and the final step].
    #[arg(long, value_delimiter = ',')]
    pub checkpoints: Option<Vec<usize>>,
    /// Largest number of terms generated before the trace is cut short.
    #[arg(long, default_value_t = series_rearrange::rearrange::DEFAULT_HORIZON_CAP)]
    pub horizon_cap: usize,
    /// Skip trace.csv (exact partial sums of long runs get very large).
    #[arg(long)]
    pub no_trace: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug)]
pub struct ScanArgs {
    #[command(flatten)]
    pub series: SeriesArgs,
    /// Largest window offset k.
    #[arg(long = "kmax", default_value_t = 0)]
    pub k_max: usize,
    /// Complete blocks of each kind to scan.
    #[arg(long, default_value_t = 200)]
    pub blocks: usize,
    /// Window start labels [default: 1, B/10, B/4].
    #[arg(long = "i0", value_delimiter = ',')]
    pub i0_grid: Option<Vec<usize>>,
    /// Terms to generate while looking for the blocks.
    #[arg(long, default_value_t = 1 << 24)]
    pub max_terms: usize,
    /// Target of the greedy trace used as fixing evidence.
    #[arg(long, default_value = "0", allow_hyphen_values = true)]
    pub probe_target: String,
    #[arg(long, default_value_t = 10_000)]
    pub probe_steps: usize,
    /// Skip the greedy probe (no fixing evidence).
    #[arg(long)]
    pub no_probe: bool,
    /// Ignore the known ST status of built-in generators.
    #[arg(long)]
    pub no_analytic: bool,
    /// Scan cells one at a time.
    #[arg(long)]
    pub sequential: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub series: SeriesArgs,
    /// Trace CSV written by `rearrange`.
    #[arg(long)]
    pub trace: PathBuf,
    /// Block number bound C [default: the trace's observed maximum].
    #[arg(long)]
    pub bound: Option<usize>,
    /// Target recorded with the trace [default: read from the trace header, else 0].
    #[arg(long, allow_hyphen_values = true)]
    pub target: Option<String>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Args, Debug)]
pub struct BlocknumArgs {
    /// Newline-delimited indices; `#` lines are skipped.
    #[arg(long)]
    pub indices: PathBuf,
    /// Indices (and output steps) count from 1.
    #[arg(long)]
    pub one_based: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

/// Bad flags, schema problems and unmet preconditions; exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// How a command that ran to completion ended.
#[derive(Debug, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    Truncated,
    VerificationFailed,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => commands::generate(&a),
        Command::Rearrange(a) => commands::rearrange(&a),
        Command::Scan(a) => commands::scan(&a),
        Command::Verify(a) => commands::verify(&a),
        Command::Blocknum(a) => commands::blocknum(&a),
    };
    match result {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Truncated) => ExitCode::from(3),
        Ok(Outcome::VerificationFailed) => ExitCode::from(4),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
