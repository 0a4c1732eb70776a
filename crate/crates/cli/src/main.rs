use std::process::ExitCode;

use clap::Parser;
use wavedenoise_cli::{run, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let result = run(Cli::parse());
    if result.exit_code == 0 {
        println!("{}", result.summary);
        for a in &result.artifacts {
            log::debug!("wrote {}", a.display());
        }
    } else {
        eprintln!("error: {}", result.summary);
    }
    ExitCode::from(result.exit_code)
}
