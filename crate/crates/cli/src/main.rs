use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

use commands::{Bench, BenchArgs, Failure};
use config::{Method, RunConfig};

#[derive(Parser)]
#[command(name = "pertraj", version, about = "Periodic trajectories of control-affine ODEs with bang-bang inputs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the boundary value problem and write the trajectory and run report.
    Solve(Common),
    /// Evaluate the convergence certificate at the zero trajectory.
    Certify(Common),
    /// Reproduce the reactor benchmarks.
    Bench {
        #[arg(value_enum)]
        which: Bench,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML, or JSON by extension).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Grid steps; accepts `100000`, `1e5` or `10^5`.
    #[arg(long = "n-g", value_parser = parse_count)]
    n_g: Option<usize>,
    /// Iteration count.
    #[arg(long = "n-i")]
    n_i: Option<usize>,
    #[arg(long, value_enum)]
    method: Option<Method>,
    /// Cross-check the solution with the shooting solver.
    #[arg(long)]
    oracle: bool,
    /// Seed for sampled derivative bounds.
    #[arg(long)]
    seed: Option<u64>,
}

fn parse_count(s: &str) -> Result<usize, String> {
    let s = s.trim();
    let value = if let Some((base, exp)) = s.split_once('^') {
        let base: u64 = base.parse().map_err(|e| format!("{s}: {e}"))?;
        let exp: u32 = exp.parse().map_err(|e| format!("{s}: {e}"))?;
        base.checked_pow(exp).ok_or_else(|| format!("{s}: too large"))? as f64
    } else {
        s.parse::<f64>().map_err(|e| format!("{s}: {e}"))?
    };
    if value < 1.0 || value.fract() != 0.0 || value > usize::MAX as f64 {
        return Err(format!("{s}: expected a positive integer"));
    }
    Ok(value as usize)
}

fn load(common: &Common) -> Result<RunConfig, Failure> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| Failure::Usage("--config is required".into()))?;
    let mut cfg = RunConfig::load(path).map_err(Failure::Usage)?;
    if let Some(dir) = &common.out {
        cfg.output.dir = dir.clone();
    }
    if let Some(n) = common.n_g {
        cfg.solver.n_g = n;
    }
    if let Some(n) = common.n_i {
        cfg.solver.n_i = n;
    }
    if let Some(m) = common.method {
        cfg.solver.method = m;
    }
    if common.oracle {
        cfg.solver.oracle = true;
    }
    if let (Some(seed), Some(c)) = (common.seed, cfg.certificate.as_mut()) {
        c.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Solve(common) => commands::solve(&load(&common)?),
        Command::Certify(common) => commands::certify_cmd(&load(&common)?),
        Command::Bench { which, common } => {
            let (params, dir) = match &common.config {
                Some(_) => {
                    let cfg = load(&common)?;
                    (cfg.reactor_params(), cfg.output.dir)
                }
                None => (Default::default(), common.out.clone().unwrap_or_else(|| PathBuf::from("out"))),
            };
            commands::bench(&BenchArgs {
                which,
                params,
                dir,
                n_g: common.n_g,
                n_i: common.n_i,
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
