use std::process::ExitCode;

use clap::Parser;
use mlsg_cli::{run, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let cache_env = std::env::var_os("MLSG_CACHE_DIR").map(Into::into);
    match run(&cli, cache_env) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
