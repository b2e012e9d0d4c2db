mod args;
mod commands;
mod error;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use error::{CliError, CliResult};

fn run(cli: &Cli) -> CliResult<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Rank(a) => commands::rank(a),
        Command::Prune(a) => commands::prune(a),
        Command::Compact(a) => commands::compact(a),
        Command::Split(a) => commands::split(a),
        Command::Render(a) => commands::render_cmd(a),
        Command::Eval(a) => commands::eval(a),
        Command::Bench(a) => commands::bench(a, cli.threads),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GSC_LOG", "warn")).init();
    // clap exits with 2 on usage errors by itself.
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
