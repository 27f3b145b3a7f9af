mod args;
mod commands;
mod error;
mod io;
mod render;

use std::process::ExitCode;

use clap::Parser;
use serde_json::{json, Value};

use args::{Cli, Command, FitCommand, StructCommand};
use error::CliError;

fn dispatch(cli: &Cli) -> Result<Value, CliError> {
    match &cli.command {
        Command::Decompose(a) => commands::decompose(a),
        Command::Fit(FitCommand::Gmdr(a)) => commands::fit_gmdr(a),
        Command::Fit(FitCommand::Kpr(a)) => commands::fit_kpr_cmd(a),
        Command::Infer(a) => commands::infer(a),
        Command::Structtest(StructCommand::Krv(a)) => commands::structtest_krv(a),
        Command::Structtest(StructCommand::Mirkat(a)) => commands::structtest_mirkat(a),
        Command::RobustTau(a) => commands::robust_tau(a),
        Command::Simulate(a) => commands::simulate(a),
    }
}

fn emit(cli: &Cli, report: &Value) -> Result<(), CliError> {
    let text = if cli.pretty {
        render::render(report)
    } else {
        let mut s = serde_json::to_string_pretty(report).map_err(|e| CliError::input(e.to_string()))?;
        s.push('\n');
        s
    };
    match &cli.out {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::input(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::input("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::input(e.to_string()))?;
    }
    let report = dispatch(cli)?;
    emit(cli, &report)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = json!({ "error": { "kind": e.kind(), "message": e.to_string() } });
            eprintln!("{msg}");
            ExitCode::from(e.exit_code())
        }
    }
}
