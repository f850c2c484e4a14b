//! sphere-gns: batch front-end for branch sweeps, fast-diffusion flow
//! runs, symmetry-breaking threshold detection, Euclidean constants and
//! verification suites.
//!
//! Exit codes: 0 success, 1 validation error, 2 numerical failure.

mod commands;
mod config;
mod report;
mod verify;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use config::{
    parse_lambda_range, CommandKind, FlowBlock, LambdaGrid, OutputFormat, RunConfig, Spacing,
};
use sphere_gns::functionals::Family;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FamilyArg {
    Gns0,
    Gns1,
    Gns2,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Family {
        match f {
            FamilyArg::Gns0 => Family::Gns0,
            FamilyArg::Gns1 => Family::Gns1,
            FamilyArg::Gns2 => Family::Gns2,
        }
    }
}

#[derive(Args, Debug)]
struct OutputArgs {
    /// Write the artifact here instead of stdout
    #[arg(long)]
    out: Option<String>,
    /// Output format
    #[arg(long, value_enum, default_value = "csv")]
    format: OutputFormat,
    /// RNG seed recorded in the output header
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args, Debug)]
struct BranchArgs {
    #[arg(long, value_enum)]
    family: FamilyArg,
    #[arg(long, default_value_t = 3)]
    d: u32,
    #[arg(long, default_value_t = 3.0)]
    p: f64,
    #[arg(long)]
    theta: Option<f64>,
    /// Lambda grid as start:stop:count
    #[arg(long)]
    lambda: String,
    #[arg(long, value_enum, default_value = "linear")]
    spacing: Spacing,
    /// Collocation nodes; constants are re-checked at 2N unless
    /// --no-grid-check
    #[arg(long = "grid-n", default_value_t = 128)]
    grid_n: usize,
    #[arg(long = "no-grid-check")]
    no_grid_check: bool,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct FlowArgs {
    #[arg(long, default_value_t = 3)]
    d: u32,
    #[arg(long, default_value_t = 4.0)]
    p: f64,
    /// Diffusion exponent of the fast-diffusion flow
    #[arg(long)]
    m: f64,
    #[arg(long = "t-end", default_value_t = 1.0)]
    t_end: f64,
    #[arg(long, default_value_t = 2.5e-4)]
    dt: f64,
    #[arg(long = "grid-n", default_value_t = 96)]
    grid_n: usize,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct ThresholdArgs {
    #[arg(long, value_enum)]
    family: FamilyArg,
    #[arg(long, default_value_t = 3)]
    d: u32,
    #[arg(long, default_value_t = 3.0)]
    p: f64,
    #[arg(long)]
    theta: Option<f64>,
    /// Bisection stops once the bracket is narrower than this
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
    /// Optional coarse sweep grid start:stop:count (default: auto
    /// around the predicted threshold)
    #[arg(long)]
    lambda: Option<String>,
    #[arg(long, value_enum, default_value = "linear")]
    spacing: Spacing,
    #[arg(long = "grid-n", default_value_t = 128)]
    grid_n: usize,
    #[arg(long = "no-grid-check")]
    no_grid_check: bool,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct EuclideanArgs {
    #[arg(long, default_value_t = 3)]
    d: u32,
    #[arg(long, default_value_t = 3.0)]
    p: f64,
    /// Also report gamma and the limit constant for this theta
    #[arg(long)]
    theta: Option<f64>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// One of: carre-du-champ, grid, flow, euclidean, all
    #[arg(long, default_value = "all")]
    suite: String,
    #[arg(long, default_value_t = 3)]
    d: u32,
    #[arg(long, default_value_t = 4.0)]
    p: f64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct RunArgs {
    /// JSON file holding a RunConfig (as embedded in output headers)
    #[arg(long)]
    config: String,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Sweep the branch of optimal constants over a lambda grid
    Branch(BranchArgs),
    /// Run the fast-diffusion flow and record conservation data
    Flow(FlowArgs),
    /// Locate the symmetry-breaking threshold by bisection
    Threshold(ThresholdArgs),
    /// Euclidean ground-state constants and limit quantities
    Euclidean(EuclideanArgs),
    /// Run a verification suite and report pass/fail per check
    Verify(VerifyArgs),
    /// Execute a RunConfig loaded from a JSON file
    Run(RunArgs),
}

#[derive(Parser, Debug)]
#[command(name = "sphere-gns", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

fn lambda_grid_from(s: &str, spacing: Spacing) -> Result<LambdaGrid, String> {
    let (start, stop, count) = parse_lambda_range(s)?;
    Ok(LambdaGrid {
        start,
        stop,
        count,
        spacing,
    })
}

fn to_config(cmd: Cmd) -> Result<RunConfig, String> {
    Ok(match cmd {
        Cmd::Branch(a) => RunConfig {
            command: CommandKind::Branch,
            family: Some(a.family.into()),
            d: a.d,
            p: a.p,
            theta: a.theta,
            lambda_grid: Some(lambda_grid_from(&a.lambda, a.spacing)?),
            grid_n: a.grid_n,
            flow: None,
            tol: None,
            suite: None,
            seed: a.output.seed,
            grid_check: !a.no_grid_check,
            output: a.output.out.clone(),
            format: a.output.format,
        },
        Cmd::Flow(a) => RunConfig {
            command: CommandKind::Flow,
            family: None,
            d: a.d,
            p: a.p,
            theta: None,
            lambda_grid: None,
            grid_n: a.grid_n,
            flow: Some(FlowBlock {
                m: a.m,
                t_end: a.t_end,
                dt: a.dt,
            }),
            tol: None,
            suite: None,
            seed: a.output.seed,
            grid_check: false,
            output: a.output.out.clone(),
            format: a.output.format,
        },
        Cmd::Threshold(a) => RunConfig {
            command: CommandKind::Threshold,
            family: Some(a.family.into()),
            d: a.d,
            p: a.p,
            theta: a.theta,
            lambda_grid: match &a.lambda {
                Some(s) => Some(lambda_grid_from(s, a.spacing)?),
                None => None,
            },
            grid_n: a.grid_n,
            flow: None,
            tol: Some(a.tol),
            suite: None,
            seed: a.output.seed,
            grid_check: !a.no_grid_check,
            output: a.output.out.clone(),
            format: a.output.format,
        },
        Cmd::Euclidean(a) => RunConfig {
            command: CommandKind::Euclidean,
            family: None,
            d: a.d,
            p: a.p,
            theta: a.theta,
            lambda_grid: None,
            grid_n: 0,
            flow: None,
            tol: None,
            suite: None,
            seed: a.output.seed,
            grid_check: false,
            output: a.output.out.clone(),
            format: a.output.format,
        },
        Cmd::Verify(a) => RunConfig {
            command: CommandKind::Verify,
            family: None,
            d: a.d,
            p: a.p,
            theta: None,
            lambda_grid: None,
            grid_n: 64,
            flow: None,
            tol: None,
            suite: Some(a.suite),
            seed: a.output.seed,
            grid_check: false,
            output: a.output.out.clone(),
            format: a.output.format,
        },
        Cmd::Run(a) => {
            let text = std::fs::read_to_string(&a.config)
                .map_err(|e| format!("cannot read {}: {e}", a.config))?;
            serde_json::from_str(&text).map_err(|e| format!("bad config: {e}"))?
        }
    })
}

fn init_thread_pool() {
    if let Ok(v) = std::env::var("SPHERE_GNS_THREADS") {
        if let Ok(n) = v.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global();
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                std::process::exit(0);
            }
            eprintln!("{e}");
            std::process::exit(1);
        }
    };
    init_thread_pool();
    let cfg = match to_config(cli.cmd) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("error (validation): {msg}");
            std::process::exit(1);
        }
    };
    match commands::run(&cfg) {
        Ok(()) => {}
        Err(commands::RunError::Validation(msg)) => {
            eprintln!("error (validation): {msg}");
            std::process::exit(1);
        }
        Err(commands::RunError::Numerical(msg)) => {
            eprintln!("error (numerical): {msg}");
            std::process::exit(2);
        }
    }
}
