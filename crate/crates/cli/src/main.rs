use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use passync::engine::ControllerKind;
use passync::graph::TopologyKind;
use passync_cli::commands::{benchmark_cmd, certify_cmd, simulate_cmd, BenchmarkArgs, Overrides};
use passync_cli::exit;
use passync_cli::suite::{run_suites, select, validate, SuiteOptions};

/// Adaptive leader-follower synchronization experiments.
///
/// Exit codes: 0 success, 1 suite assertion or I/O failure, 2 invalid
/// configuration, 3 numerical blowup, 4 certification failed.
#[derive(Parser)]
#[command(name = "passync", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Output directory
    #[arg(long, env = "PASSYNC_OUT_DIR", default_value = "passync-out")]
    out: PathBuf,
    /// Override the integration step
    #[arg(long)]
    dt: Option<f64>,
    /// Override the simulated horizon in seconds
    #[arg(long)]
    horizon: Option<f64>,
    /// Reserved; runs are deterministic
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides { dt: self.dt, horizon: self.horizon }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file and write trajectory, metrics and plot data
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Check the passivity certificate of a scenario's controller
    Certify {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the reproduction suite
    #[command(name = "paper-suite")]
    Suite {
        /// Only families whose name contains this string
        #[arg(long)]
        filter: Option<String>,
        /// Repetitions for the runtime table
        #[arg(long)]
        reps: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Time the closed loop over a grid of network sizes
    Benchmark {
        /// Comma-separated network sizes
        #[arg(long, value_delimiter = ',', default_value = "50,100,150,200,250")]
        ms: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "star,cyclic,path")]
        topologies: Vec<String>,
        /// Any of spr, nonspr_s1, nonspr_s2
        #[arg(long, value_delimiter = ',', default_value = "spr,nonspr_s1")]
        controllers: Vec<String>,
        #[arg(long, default_value_t = 20)]
        reps: usize,
        #[arg(long, default_value_t = 1)]
        warmup: usize,
        #[command(flatten)]
        common: Common,
    },
}

fn parse_controller(s: &str) -> Result<ControllerKind> {
    Ok(match s.trim() {
        "spr" => ControllerKind::Spr,
        "nonspr_s1" | "s1" => ControllerKind::NonSprS1,
        "nonspr_s2" | "s2" => ControllerKind::NonSprS2,
        other => bail!("unknown controller `{other}`"),
    })
}

fn benchmark_args(ms: &[String], topologies: &[String], controllers: &[String], reps: usize, warmup: usize) -> Result<BenchmarkArgs> {
    let ms = ms
        .iter()
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<usize>().map_err(|e| anyhow::anyhow!("bad m `{s}`: {e}")))
        .collect::<Result<_>>()?;
    let topologies = topologies.iter().map(|s| s.trim().parse::<TopologyKind>().map_err(Into::into)).collect::<Result<_>>()?;
    let controllers = controllers.iter().map(|s| parse_controller(s)).collect::<Result<_>>()?;
    Ok(BenchmarkArgs { ms, topologies, controllers, reps, warmup })
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Simulate { config, common } => simulate_cmd(&config, &common.out, common.overrides()),
        Command::Certify { config } => certify_cmd(&config),
        Command::Suite { filter, reps, common } => {
            let suites = select(filter.as_deref());
            if let Err(e) = validate(&suites) {
                eprintln!("error: {e}");
                return Ok(exit::CONFIG_INVALID);
            }
            if suites.is_empty() {
                eprintln!("error: no suite family matches the filter");
                return Ok(exit::CONFIG_INVALID);
            }
            let opts = SuiteOptions { overrides: common.overrides(), reps };
            let results = run_suites(&suites, &common.out, &opts)?;
            let failed = results.iter().filter(|r| !r.pass).count();
            println!("{} families, {} assertions, {failed} failed", suites.len(), results.len());
            Ok(if failed == 0 { exit::OK } else { exit::FAILURE })
        }
        Command::Benchmark { ms, topologies, controllers, reps, warmup, common } => {
            let args = match benchmark_args(&ms, &topologies, &controllers, reps, warmup) {
                Ok(a) => a,
                Err(e) => {
                    eprintln!("error: {e:#}");
                    return Ok(exit::CONFIG_INVALID);
                }
            };
            benchmark_cmd(&args, &common.out, common.overrides())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit::FAILURE)
        }
    }
}
