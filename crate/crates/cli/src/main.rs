use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

fn main() -> ExitCode {
    let cli = match betrun_cli::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // exit code 2 means "completed with failed runs"; usage errors abort
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(betrun_cli::EXIT_ABORT),
            };
        }
    };
    let stdout = std::io::stdout();
    betrun_cli::main_with(cli, &mut stdout.lock())
}
