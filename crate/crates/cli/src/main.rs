use std::process::ExitCode;

use clap::Parser;
use tribaker_cli::acceptance::{self, Determinism};
use tribaker_cli::args::{Cli, Command};
use tribaker_cli::cache::OperatorCache;
use tribaker_cli::commands;
use tribaker_cli::config::{CommandKind, RunConfig};
use tribaker_cli::{CliError, Result};

fn run(cli: Cli) -> Result<()> {
    let manifest = match &cli.command {
        Command::Acceptance(args) => return run_acceptance(args),
        Command::Spectrum(a) => {
            let config = RunConfig::new(CommandKind::Spectrum, a)?;
            commands::spectrum(&config, &OperatorCache::from_env(config.cache))?
        }
        Command::Histogram(a) => {
            let config = RunConfig::new(CommandKind::Histogram, a)?;
            commands::histogram(&config, &OperatorCache::from_env(config.cache))?
        }
        Command::Husimi(a) => {
            let config = RunConfig::husimi(a)?;
            commands::husimi(&config, &OperatorCache::from_env(config.cache))?
        }
        Command::NrScan(a) => {
            let config = RunConfig::new(CommandKind::NrScan, a)?;
            commands::nr_scan(&config, &OperatorCache::from_env(config.cache))?
        }
        Command::Classical(a) => commands::classical(&RunConfig::classical(a)?)?,
    };
    println!(
        "wrote {} files to {}",
        manifest.outputs.len(),
        manifest.config.out.display()
    );
    Ok(())
}

fn run_acceptance(args: &tribaker_cli::args::AcceptanceArgs) -> Result<()> {
    let cache = OperatorCache::from_env(!args.no_cache);
    let report = acceptance::run_suite(&cache, |c| {
        if c.passed.is_some() {
            println!("{}", acceptance::format_line(c));
        }
    })?;
    let verdict = acceptance::write_manifest(&report, &args.out)?;
    let line = match verdict {
        Determinism::Identical => "[PASS] 11 manifest identical to the previous run",
        Determinism::Differs => "[FAIL] 11 manifest differs from the previous run",
        Determinism::NoPrevious => "[----] 11 no previous manifest in the output directory; rerun to compare",
    };
    println!("{line}");
    if !report.all_measured_pass() || verdict == Determinism::Differs {
        return Err(CliError::Acceptance("see the failing criteria above".into()));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
