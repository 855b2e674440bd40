//! `madshield` command-line driver.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use madshield::case_io::CapacityRule;
use madshield::dispatch::UpdateRule;
use madshield::grid::BaseDispatch;

#[derive(Parser, Debug)]
#[command(name = "madshield", version, about = "Robust dispatch and secondary-controllability bounds for DC grids")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub global: Global,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Built-in case name or path to a MATPOWER `.m` / TOML case file.
    #[arg(long, global = true)]
    pub case: Option<String>,
    /// Attack magnitude as a fraction of each bus demand.
    #[arg(long, global = true, conflicts_with = "bounds_file")]
    pub alpha: Option<f64>,
    /// Per-bus attack bounds or demand envelopes (CSV).
    #[arg(long, global = true)]
    pub bounds_file: Option<PathBuf>,
    #[arg(long, global = true, default_value = "given", value_parser = parse_rule)]
    pub cap_rule: CapacityRule,
    /// Generation behind the base flows used by synthesized capacities.
    #[arg(long, global = true, default_value = "proportional")]
    pub base_dispatch: BaseDispatch,
    #[arg(long, global = true, default_value_t = 50, value_parser = clap::value_parser!(u32).range(1..))]
    pub cost_segments: u32,
    #[arg(long, global = true, default_value = "exact", value_parser = parse_update)]
    pub update_rule: UpdateRule,
    /// IMMUNE iteration limit.
    #[arg(long, global = true, default_value_t = 50)]
    pub max_iters: usize,
    /// Module-1 step size.
    #[arg(long, global = true, default_value_t = 1.1)]
    pub lambda: f64,
    #[arg(long, global = true, default_value_t = 1e-3)]
    pub stop_delta: f64,
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true)]
    pub parallel: Option<usize>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Directory receiving every solved LP in LP text format.
    #[arg(long, global = true)]
    pub debug_lp: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Bruteforce,
    Beta,
    GammaBeta,
    /// Extreme points over the largest demands only (approximate).
    TopK,
    /// Seeded random extreme points (approximate).
    Sample,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Economic dispatch with line limits.
    Opf,
    /// Dispatch robust to the worst linear droop response.
    Safe,
    /// Dispatch against the response-independent flow-change bound.
    Conservative,
    /// Iterative dispatch robust to saturated droop response.
    Immune,
    /// Decide whether secondary control can serve every demand in the envelope.
    VerifySecondary {
        #[arg(long, value_enum, default_value_t = Method::GammaBeta)]
        method: Method,
        /// Demand-bus limit for exhaustive enumeration.
        #[arg(long, default_value_t = madshield::secondary::DEFAULT_BRUTEFORCE_LIMIT)]
        limit: usize,
        /// Buses enumerated by `top-k`.
        #[arg(long, default_value_t = 10)]
        top_k: usize,
        /// Extreme points drawn by `sample`.
        #[arg(long, default_value_t = 1000)]
        samples: usize,
    },
    /// Lower and upper bounds on the largest tolerable attack magnitude.
    AlphaBounds {
        /// Also bisect for the exact value by extreme-point enumeration.
        #[arg(long)]
        exact_max: bool,
        #[arg(long, default_value_t = madshield::alpha::DEFAULT_EXACT_LIMIT)]
        exact_limit: usize,
        /// Also bound by the minimum-demand case.
        #[arg(long)]
        mirrored: bool,
    },
    /// Base flows, capacities and worst-case flow changes.
    Flow,
    /// Parse a case and print it in the TOML case format.
    Parse,
}

fn parse_rule(s: &str) -> Result<CapacityRule, String> {
    s.parse()
}

fn parse_update(s: &str) -> Result<UpdateRule, String> {
    s.parse()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
