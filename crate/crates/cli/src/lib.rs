//! Command-line surface of the `pfactor` library: a registry of built-in
//! problems, JSON problem files, one subcommand per analysis, and reports
//! rendered as JSON, tables or CSV.

pub mod args;
pub mod commands;
pub mod error;
pub mod problem;
pub mod registry;
pub mod report;

use std::ffi::OsString;
use std::io::Write;

use clap::Parser;

pub use args::{Cli, Command, Config, Format};
pub use error::CliError;
pub use problem::ProblemFile;
pub use report::RunReport;

use args::Source;
use commands::Timer;
use report::ProblemIdentity;

fn load_source(source: &Source) -> Result<ProblemIdentity, CliError> {
    match (&source.builtin, &source.problem) {
        (Some(name), _) => {
            let b = registry::find(name)?;
            Ok(ProblemIdentity {
                name: b.file.name.clone(),
                source: "builtin".into(),
                definition: b.file,
            })
        }
        (None, Some(path)) => {
            let file = ProblemFile::load(path)?;
            Ok(ProblemIdentity {
                name: file.name.clone(),
                source: path.display().to_string(),
                definition: file,
            })
        }
        (None, None) => Err(CliError::Usage("one of --builtin or --problem is required".into())),
    }
}

/// Runs a parsed command line and returns its report. Numeric failures that
/// still produce a report are recorded in `RunReport::failure`.
pub fn execute(cli: &Cli) -> Result<RunReport, CliError> {
    let mut timer = Timer::default();
    let subcommand = cli.command.name();
    let (problem, config, outcome) = match &cli.command {
        Command::List(_) => (None, None, commands::list()),
        Command::Analyze(a)
        | Command::Newton(a)
        | Command::Pfnewton(a)
        | Command::Optcheck(a)
        | Command::Conlag(a)
        | Command::Tangent(a) => {
            let identity = load_source(&a.source)?;
            let cfg = Config::resolve(subcommand, a, &identity.definition)?;
            let file = &identity.definition;
            let outcome = match &cli.command {
                Command::Analyze(_) => commands::analyze(file, &cfg, &mut timer),
                Command::Newton(_) => commands::newton(file, &cfg, &mut timer),
                Command::Pfnewton(_) => commands::pfnewton(file, &cfg, &mut timer),
                Command::Optcheck(_) => commands::optcheck(file, &cfg, &mut timer),
                Command::Conlag(_) => commands::conlag(file, &cfg, &mut timer),
                Command::Tangent(_) => commands::tangent(file, &cfg, &mut timer),
                Command::List(_) => unreachable!(),
            }?;
            (Some(identity), Some(cfg), outcome)
        }
    };
    Ok(RunReport {
        tool: "pfactor",
        version: env!("CARGO_PKG_VERSION"),
        subcommand: subcommand.into(),
        problem,
        config,
        warnings: outcome.warnings,
        failure: outcome.failure,
        result: outcome.result,
        timings: Some(timer.finish()),
    })
}

/// Parses `args` (without the program name) and runs them; parse failures
/// become usage errors.
pub fn execute_args(args: &[&str]) -> Result<RunReport, CliError> {
    let cli = Cli::try_parse_from(std::iter::once("pfactor").chain(args.iter().copied()))
        .map_err(|e| CliError::Usage(e.to_string()))?;
    execute(&cli)
}

/// Parses `args` (including the program name), runs, writes the report and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(report) => {
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            let text = report.render(cli.command.output().format);
            if let Err(e) = emit(&cli, &text) {
                eprintln!("error: {e}");
                return e.exit_code();
            }
            match &report.failure {
                Some(msg) => {
                    eprintln!("error: {}", CliError::Numeric(msg.clone()));
                    3
                }
                None => 0,
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn emit(cli: &Cli, text: &str) -> Result<(), CliError> {
    let out = |e: std::io::Error| CliError::Output(e.to_string());
    match &cli.command.output().output {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::Output(format!("{}: {e}", path.display()))),
        None => std::io::stdout().lock().write_all(text.as_bytes()).map_err(out),
    }
}
