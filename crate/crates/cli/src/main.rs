//! Command-line front end: `run`, `sweep` and `analyze` over TOML configs.
//!
//! Exit codes: `run`/`sweep` return 0 on success, 2 on a config error and 3
//! when any seed diverges. `analyze` returns 0 when the step-sizes are
//! certified, 1 when the certificate only advises, and 2 when the game is not
//! strongly monotone or the step-size heterogeneity is too large.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use clusternash::experiments::{self, ConfigError, ExperimentError, RunConfig, SweepConfig};

const EXIT_CONFIG: u8 = 2;
const EXIT_DIVERGED: u8 = 3;
const EXIT_IO: u8 = 1;

#[derive(Parser)]
#[command(name = "clusternash", version, about = "Gradient-free Nash equilibrium seeking in N-cluster games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of one configuration and write trajectory CSVs.
    Run(RunArgs),
    /// Run a step-size sweep and write per-setting CSVs plus a summary.
    Sweep(RunArgs),
    /// Print game constants and the convergence certificate.
    Analyze {
        config: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    config: PathBuf,
    /// First seed; seeds are seed, seed+1, ...
    #[arg(long)]
    seed: Option<u64>,
    /// Number of seeds.
    #[arg(long)]
    seeds: Option<usize>,
    /// Number of iterations T; rows t = 0..=T are written.
    #[arg(long)]
    iters: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Append the joint action to every per-seed CSV row.
    #[arg(long)]
    log_positions: bool,
}

impl RunArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(s) = self.seeds {
            cfg.seeds = s;
        }
        if let Some(t) = self.iters {
            cfg.iters = t;
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        cfg.log_positions |= self.log_positions;
    }
}

fn config_error(path: &Path, e: ConfigError) -> ExitCode {
    eprintln!("error: {}: {e}", path.display());
    ExitCode::from(EXIT_CONFIG)
}

fn experiment_error(path: &Path, e: ExperimentError) -> ExitCode {
    match e {
        ExperimentError::Config(c) => {
            let c = match std::fs::read_to_string(path) {
                Ok(src) => c.locate(&src),
                Err(_) => c,
            };
            config_error(path, c)
        }
        ExperimentError::Io { .. } => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_IO)
        }
    }
}

fn run(args: &RunArgs) -> ExitCode {
    let mut cfg = match RunConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => return config_error(&args.config, e),
    };
    args.apply(&mut cfg);
    if cfg.seeds == 0 {
        return config_error(&args.config, ConfigError::new("seeds", "at least one seed is required"));
    }
    match experiments::execute_run(&cfg) {
        Ok(outcome) => {
            let last = outcome.mean.rows.last();
            println!("wrote {} seed(s) to {}", outcome.seeds.len(), outcome.dir.display());
            if let Some(err) = last.and_then(|r| r.err_gap) {
                println!("final mean err_gap: {err:.6e}");
            }
            match outcome.divergence {
                Some(d) => {
                    eprintln!("diverged: seed {}: {}", d.seed, d.error);
                    ExitCode::from(EXIT_DIVERGED)
                }
                None => ExitCode::SUCCESS,
            }
        }
        Err(e) => experiment_error(&args.config, e),
    }
}

fn sweep(args: &RunArgs) -> ExitCode {
    let mut cfg = match SweepConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => return config_error(&args.config, e),
    };
    args.apply(&mut cfg.base);
    if cfg.base.seeds == 0 {
        return config_error(&args.config, ConfigError::new("seeds", "at least one seed is required"));
    }
    match experiments::execute_sweep(&cfg) {
        Ok(outcome) => {
            println!("setting  alpha_max  eps_alpha  fit_rate  plateau");
            for r in &outcome.summary {
                let rate = r.fit_rate.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4e}"));
                println!("{:>7}  {:.4e}  {:.4}  {rate}  {:.4e}", r.setting, r.alpha_max, r.eps_alpha, r.plateau);
            }
            println!("wrote {}", cfg.base.out.join("summary.csv").display());
            match outcome.divergence {
                Some(d) => {
                    eprintln!("diverged: seed {}: {}", d.seed, d.error);
                    ExitCode::from(EXIT_DIVERGED)
                }
                None => ExitCode::SUCCESS,
            }
        }
        Err(e) => experiment_error(&args.config, e),
    }
}

fn analyze(config: &Path) -> ExitCode {
    let cfg = match RunConfig::load(config) {
        Ok(c) => c,
        Err(e) => return config_error(config, e),
    };
    match experiments::analyze(&cfg) {
        Ok(report) => {
            print!("{}", report.text);
            ExitCode::from(report.status.exit_code() as u8)
        }
        Err(e) => {
            let e = match std::fs::read_to_string(config) {
                Ok(src) => e.locate(&src),
                Err(_) => e,
            };
            config_error(config, e)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Command::Run(args) => run(args),
        Command::Sweep(args) => sweep(args),
        Command::Analyze { config } => analyze(config),
    }
}
