use std::process::ExitCode;

use clap::error::ErrorKind as ClapKind;
use clap::Parser;
use qreal_cli::error::CliError;
use qreal_cli::{run, Args};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) if matches!(e.kind(), ClapKind::DisplayHelp | ClapKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(&CliError::validation(e.to_string().trim_end())),
    };
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}

fn fail(e: &CliError) -> ExitCode {
    log::debug!("{e}");
    eprintln!("{}", e.to_json());
    ExitCode::from(e.exit_code())
}
