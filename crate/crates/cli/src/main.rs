use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use crowdmix_cli::{exit, CliError, Format, ServeOptions};
use crowdmix_core::DEFAULT_TICK_MS;
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "crowdmix", version, about = "Record, remix and replay crowd-demonstrated behaviors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the websocket session server (endpoint `/ws`).
    Serve {
        #[arg(long, env = "CROWDMIX_ADDR", default_value = "127.0.0.1:7878")]
        addr: SocketAddr,
        #[arg(long, env = "CROWDMIX_LOCK_TTL_MS", default_value_t = 30_000)]
        lock_ttl_ms: u64,
        #[arg(long, env = "CROWDMIX_TICK_MS", default_value_t = 50)]
        tick_ms: u64,
        /// Drop sessions that have been empty this long.
        #[arg(long, env = "CROWDMIX_SESSION_TTL_MS")]
        session_ttl_ms: Option<u64>,
        /// Preload a saved session under this id (`id=path`).
        #[arg(long, value_parser = parse_load)]
        load: Option<(String, PathBuf)>,
    },
    /// Apply a remix script to a saved session.
    Remix {
        session: PathBuf,
        script: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TICK_MS)]
        tick_ms: f64,
    },
    /// Replay a compiled behavior to frames.
    Render {
        session: PathBuf,
        behavior: String,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "frames-jsonl")]
        format: Format,
        /// Override the behavior's own tick.
        #[arg(long)]
        tick_ms: Option<f64>,
    },
    /// Run a scripted multi-client scenario on a simulated clock.
    Simulate {
        scenario: PathBuf,
        /// Shuffle same-instant steps of different clients.
        #[arg(long)]
        seed: Option<u64>,
        /// Write the final session here.
        #[arg(long)]
        save: Option<PathBuf>,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
}

fn parse_load(s: &str) -> Result<(String, PathBuf), String> {
    let (id, path) = s.split_once('=').ok_or("expected id=path")?;
    Ok((id.to_owned(), path.into()))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Serve { addr, lock_ttl_ms, tick_ms, session_ttl_ms, load } => {
            let load = load.map(|(id, p)| crowdmix_cli::load(&p).map(|a| (id, a))).transpose()?;
            crowdmix_cli::serve(ServeOptions { addr, lock_ttl_ms, tick_ms, session_ttl_ms, load })
        }
        Command::Remix { session, script, out, tick_ms } => {
            for id in crowdmix_cli::remix(&session, &script, &out, tick_ms)? {
                eprintln!("{id}");
            }
            Ok(())
        }
        Command::Render { session, behavior, out, format, tick_ms } => {
            let n = crowdmix_cli::render(&session, &behavior.as_str().into(), &out, format, tick_ms)?;
            eprintln!("{n} frames");
            Ok(())
        }
        Command::Simulate { scenario, seed, save, json } => {
            let report = crowdmix_cli::simulate(&scenario, seed, save.as_deref())?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            } else {
                print!("{}", report.to_text());
            }
            match report.failures() {
                0 => Ok(()),
                n => Err(CliError::AssertionsFailed(n)),
            }
        }
    }
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_env("CROWDMIX_LOG").unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::from(exit::OK as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
