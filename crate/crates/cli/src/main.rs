use std::io::{self, Write};
use std::process::ExitCode;

use clap::Parser;
use swmor_cli::cli::{run, Cli};
use swmor_cli::exit_code;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let stdout = io::stdout();
    let result = run(&cli, &mut stdout.lock());
    if let Err(e) = &result {
        eprintln!("error: {e:#}");
    }
    let _ = io::stdout().flush();
    ExitCode::from(exit_code(&result) as u8)
}
