use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = match roughchain_cli::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    ExitCode::from(roughchain_cli::run(&cli))
}
