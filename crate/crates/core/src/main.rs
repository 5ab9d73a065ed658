use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use smj::commands::{cmd_cashflow, cmd_convergence, cmd_reserve, cmd_transition, cmd_validate, Report};
use smj::config::{ModeSelection, RunConfig};

#[derive(Parser)]
#[command(name = "smj", version, about = "Semi-Markov transition probabilities, cashflows and reserves")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Transition measures p_ij(s, dv) at the configured times.
    Transition {
        #[command(flatten)]
        common: Common,
        /// Evaluation times (overrides engine.transition_times).
        #[arg(long, value_delimiter = ',')]
        time: Option<Vec<f64>>,
        /// Also write every level of the Pi table.
        #[arg(long)]
        dump_pi: bool,
    },
    /// Expected cashflow curves.
    Cashflow(Common),
    /// Reserves and premium coefficients at time 0.
    Reserve(Common),
    /// Conditional against unconditional diagnostics over rates and seeds.
    Convergence(Common),
    /// Sample the intensity family and payment flags for violations.
    Validate(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (defaults to output.directory).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Add Monte Carlo estimates (cashflow and reserve).
    #[arg(long)]
    with_mc: bool,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long, value_delimiter = ',')]
    gamma: Option<Vec<f64>>,
    #[arg(long)]
    mode: Option<ModeSelection>,
}

impl Common {
    fn load(&self) -> smj::Result<(RunConfig, PathBuf)> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(s) = &self.seeds {
            cfg.engine.seeds = s.clone();
        }
        if let Some(g) = &self.gamma {
            cfg.engine.gamma = g.clone();
        }
        if let Some(m) = self.mode {
            cfg.engine.mode = m;
        }
        let cfg = RunConfig::from_toml(&cfg.echo())?;
        let out = self.out.clone().unwrap_or_else(|| cfg.output.directory.clone());
        Ok((cfg, out))
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var("SMJ_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn run(cli: Cli) -> smj::Result<Report> {
    match cli.command {
        Command::Transition {
            common,
            time,
            dump_pi,
        } => {
            let (mut cfg, out) = common.load()?;
            if let Some(t) = time {
                cfg.engine.transition_times = t;
                cfg = RunConfig::from_toml(&cfg.echo())?;
            }
            cmd_transition(&cfg, &out, dump_pi)
        }
        Command::Cashflow(c) => {
            let (cfg, out) = c.load()?;
            cmd_cashflow(&cfg, &out, c.with_mc)
        }
        Command::Reserve(c) => {
            let (cfg, out) = c.load()?;
            cmd_reserve(&cfg, &out, c.with_mc)
        }
        Command::Convergence(c) => {
            let (cfg, out) = c.load()?;
            cmd_convergence(&cfg, &out)
        }
        Command::Validate(c) => {
            let (cfg, out) = c.load()?;
            cmd_validate(&cfg, &out)
        }
    }
}

fn main() -> ExitCode {
    configure_threads();
    match run(Cli::parse()) {
        Ok(report) => {
            for line in &report.lines {
                println!("{line}");
            }
            for f in &report.files {
                println!("wrote {}", f.display());
            }
            if report.ok() {
                ExitCode::SUCCESS
            } else {
                for f in &report.hard_failures {
                    eprintln!("FAILED: {f}");
                }
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
