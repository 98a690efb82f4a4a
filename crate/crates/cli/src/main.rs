mod args;
mod commands;
mod error;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use error::{CliError, Result};

fn dispatch(cli: &Cli) -> Result<commands::Report> {
    match &cli.command {
        Command::Segment(a) => commands::segment(a),
        Command::Cycles(a) => commands::cycles(a),
        Command::Gei(a) => commands::gei(a),
        Command::Sei(a) => commands::sei(a),
        Command::Synth(a) => commands::synth(a, cli.seed),
        Command::Train(a) => commands::train_cmd(a, cli.seed),
        Command::Crossval(a) => commands::crossval(a, cli.seed),
        Command::Crossdataset(a) => commands::crossdataset(a, cli.seed),
        Command::Predict(a) => commands::predict(a),
        Command::Explain(a) => commands::explain(a),
        Command::ModelInfo(a) => commands::model_info(a, cli.seed),
        Command::Serve(a) => {
            tracing_subscriber::fmt()
                .with_env_filter(
                    tracing_subscriber::EnvFilter::try_from_default_env()
                        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
                )
                .with_writer(std::io::stderr)
                .init();
            commands::serve(a)
        }
    }
}

fn fail(err: &CliError, json: bool) -> ExitCode {
    if json {
        eprintln!("{}", err.to_json());
    } else {
        eprintln!("error: {err}");
    }
    ExitCode::from(err.kind.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            if std::env::args().any(|a| a == "--json") {
                let message = e.render().to_string();
                let first = message.lines().next().unwrap_or_default().trim_start_matches("error: ");
                return fail(&CliError::usage(first), true);
            }
            let _ = e.print();
            return ExitCode::from(1);
        }
    };

    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs.into()).build_global() {
            return fail(&CliError::internal(format!("thread pool: {e}")), cli.json);
        }
    }

    match dispatch(&cli) {
        Ok(report) => {
            if cli.json {
                println!("{}", report.json);
            } else if !report.text.is_empty() {
                println!("{}", report.text);
            }
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e, cli.json),
    }
}
