use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use cvverify_cli::args::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cvverify_cli::run(cli) {
        Ok(out) => {
            for w in &out.warnings {
                eprintln!("warning: {w}");
            }
            let _ = std::io::stdout().write_all(out.stdout.as_bytes());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
