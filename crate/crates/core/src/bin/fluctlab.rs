use std::panic;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use fluctlab::cli::{error_object, run, ExperimentConfig};
use fluctlab::Error;

#[derive(Parser)]
#[command(name = "fluctlab", version, about = "Fluctuation-theory experiments for random walks")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides output_dir in the config).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Check a config file without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("{}", error_object(e));
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) if e.use_stderr() => {
            let err = Error::ConfigInvalid(e.to_string().trim().to_string());
            return fail(&err);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    panic::set_hook(Box::new(|_| {}));
    let outcome = panic::catch_unwind(|| match args.command {
        Command::Run { config, out, threads } => ExperimentConfig::load(&config)
            .and_then(|c| run(&c, out.as_deref(), threads))
            .map(|dir| json!({ "status": "ok", "output_dir": dir })),
        Command::Validate { config } => ExperimentConfig::load(&config)
            .and_then(|c| c.validate())
            .map(|v| json!({ "status": "ok", "experiment": v.experiment.name() })),
    });
    match outcome {
        Ok(Ok(value)) => {
            println!("{value}");
            ExitCode::SUCCESS
        }
        Ok(Err(e)) => fail(&e),
        Err(payload) => {
            let message = payload
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            eprintln!("{}", json!({ "error": "InternalInvariant", "message": message, "exit_code": 4 }));
            ExitCode::from(4)
        }
    }
}
