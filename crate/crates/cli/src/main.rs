//! `riccilab` — command-line front end for the space-time Ricci flow
//! laboratory: identity-check suites, flow traces, and convergence studies.
//!
//! Every flag can also be supplied through an environment variable with the
//! `RICCILAB_` prefix (`RICCILAB_SEED`, `RICCILAB_OUT`, …); explicit flags
//! win over the environment, and both win over the config file.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::CliError;
use config::{Overrides, RunConfig};

#[derive(Parser)]
#[command(
    name = "riccilab",
    version,
    about = "Numerical laboratory for the space-time formulation of Ricci flow",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the identity-check suite and write pass/fail reports.
    Verify(CommonArgs),
    /// Evolve a metric and emit the (t, tR, Z) time series, plus grid snapshots.
    Flow(CommonArgs),
    /// Measure how fast the approximating metrics converge as N grows.
    Convergence(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// TOML run configuration; built-in defaults apply when omitted.
    #[arg(long, env = "RICCILAB_CONFIG", value_name = "PATH")]
    config: Option<PathBuf>,

    /// Comma-separated check ids (default: the full catalog).
    #[arg(long, env = "RICCILAB_CHECKS", value_delimiter = ',', value_name = "ID,ID")]
    checks: Option<Vec<String>>,

    /// Restrict the suite to one provider id.
    #[arg(long, env = "RICCILAB_PROVIDER", value_name = "NAME")]
    provider: Option<String>,

    /// Seed for every random choice in the run.
    #[arg(long, env = "RICCILAB_SEED", value_name = "INT")]
    seed: Option<i64>,

    /// Fault injection: none, flip-riemann-sign, drop-grad-r-in-gamma00,
    /// or drop-rc-dot-h.
    #[arg(long, env = "RICCILAB_MUTATION", value_name = "NAME")]
    mutation: Option<String>,

    /// Output directory for reports, traces, and snapshots.
    #[arg(long, env = "RICCILAB_OUT", value_name = "DIR")]
    out: Option<PathBuf>,

    /// Output formats, comma separated: json, csv.
    #[arg(long, env = "RICCILAB_FORMAT", value_delimiter = ',', value_name = "FMT,FMT")]
    format: Option<Vec<String>>,
}

impl CommonArgs {
    fn into_config(self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        cfg.apply(Overrides {
            checks: self.checks,
            provider: self.provider,
            seed: self.seed,
            mutation: self.mutation,
            out: self.out,
            format: self.format,
        });
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<u8, CliError> {
    match cli.cmd {
        Cmd::Verify(args) => commands::cmd_verify(&args.into_config()?),
        Cmd::Flow(args) => commands::cmd_flow(&args.into_config()?),
        Cmd::Convergence(args) => commands::cmd_convergence(&args.into_config()?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.code())
        }
    }
}
