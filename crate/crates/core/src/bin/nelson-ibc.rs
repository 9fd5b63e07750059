//! Command-line driver for the verification campaigns.
//!
//! Exit codes: 0 all checks pass, 1 a check failed (or a computation
//! failed), 2 configuration error, 3 basis dimension above the cap.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nelson_ibc::campaign::{describe, report_path, run, write_report};
use nelson_ibc::config::{Campaign, RunConfig};
use nelson_ibc::Error;

#[derive(Parser)]
#[command(name = "nelson-ibc", version, about = "Checks the interior-boundary Nelson Hamiltonian on a truncated Fock space")]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,
    #[command(flatten)]
    opts: Options,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured campaigns (default).
    Run(Options),
    /// Print the resolved configuration and basis sizes without computing anything.
    Describe(Options),
}

#[derive(Args, Clone, Default)]
struct Options {
    /// TOML configuration file; defaults apply when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// build-check, positivity, renorm-study, bounds or all.
    #[arg(long, value_name = "NAME")]
    campaign: Option<String>,
    /// Output directory for the report and CSV tables.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Largest admissible basis dimension.
    #[arg(long, value_name = "N")]
    max_dim: Option<usize>,
}

fn load(opts: &Options) -> Result<RunConfig, Error> {
    let mut config = match &opts.config {
        Some(path) => RunConfig::from_path(path)?,
        None => RunConfig::default(),
    };
    if let Some(c) = &opts.campaign {
        config.campaign = c.parse::<Campaign>()?;
    }
    if let Some(out) = &opts.out {
        config.out_dir = out.clone();
    }
    if let Some(seed) = opts.seed {
        config.seed = seed;
    }
    if let Some(cap) = opts.max_dim {
        config.fock.max_dim = cap;
    }
    config.validate()?;
    Ok(config)
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidConfig(_) => 2,
        Error::ResourceLimit { .. } => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (describe_only, opts) = match cli.command {
        Some(Command::Describe(o)) => (true, o),
        Some(Command::Run(o)) => (false, o),
        None => (false, cli.opts),
    };
    let config = match load(&opts) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    if describe_only {
        print!("{}", describe(&config));
        return ExitCode::SUCCESS;
    }

    let out_dir = config.out_dir.clone();
    let report = match run(&config, &out_dir) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    let path = report_path(&out_dir);
    if let Err(e) = write_report(&report, &path) {
        eprintln!("error: cannot write {}: {e}", path.display());
        return ExitCode::from(1);
    }
    for check in &report.checks {
        println!(
            "{:<5} {:<13} {:<44} {:>12.4e}",
            if check.passed { "ok" } else { "FAIL" },
            check.campaign,
            check.name,
            check.measured
        );
    }
    println!(
        "{} of {} checks passed; report at {}",
        report.checks.iter().filter(|c| c.passed).count(),
        report.checks.len(),
        path.display()
    );
    if report.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
