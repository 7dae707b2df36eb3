use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use tap_cli::{exit, fixtures, scenario_file, trace_io, CliError, Overrides};

#[derive(Parser)]
#[command(name = "tap", version, about = "Run and check time-assisted authentication scenarios")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario file and print its report.
    Run {
        /// Scenario file; bare names are also looked up under $TAP_FIXTURES.
        file: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Ticket retrieval mode (1, 2 or 3).
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        mode: Option<u8>,
        /// One protocol instance per peer at a time.
        #[arg(long)]
        restricted: bool,
        /// Write the trace as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write the report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Run the built-in regression set.
    Suite {
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=3))]
        mode: u8,
    },
    /// Evaluate claims over a JSON-lines trace.
    Check {
        trace: PathBuf,
        /// The trace was recorded with an intruder present.
        #[arg(long)]
        intruder: bool,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Keychain utilities.
    Keys {
        #[command(subcommand)]
        cmd: KeysCmd,
    },
}

#[derive(Subcommand)]
enum KeysCmd {
    /// Print a worked keychain.
    Demo {
        /// Secret table, one hex entry per line.
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long, default_value_t = 7)]
        length: u32,
        /// Also write the chain in binary form.
        #[arg(long)]
        export: Option<PathBuf>,
    },
    /// Load and verify an exported keychain.
    Inspect { blob: PathBuf },
}

fn write_json<T: serde::Serialize>(path: &PathBuf, value: &T) -> Result<(), CliError> {
    let f = File::create(path)?;
    serde_json::to_writer_pretty(BufWriter::new(f), value)?;
    Ok(())
}

fn mode(m: u8) -> tap_core::RetrievalMode {
    scenario_file::parse_mode(m).expect("range checked by clap")
}

fn dispatch(cmd: Cmd) -> Result<u8, CliError> {
    match cmd {
        Cmd::Run { file, seed, mode: m, restricted, trace, json } => {
            let s = tap_cli::load_scenario(&file, Overrides { seed, mode: m.map(mode), restricted })?;
            let (outcome, report) = tap_cli::run(&s)?;
            print!("{}", report.render());
            if let Some(p) = trace {
                trace_io::write_trace(BufWriter::new(File::create(&p)?), &outcome.trace)?;
            }
            if let Some(p) = json {
                write_json(&p, &report)?;
            }
            Ok(if report.verdict_ok() { exit::OK } else { exit::UNEXPECTED })
        }
        Cmd::Suite { mode: m } => {
            let results = tap_cli::run_suite(mode(m))?;
            print!("{}", tap_cli::render_suite(&results));
            Ok(if results.iter().all(|r| r.report.verdict_ok()) { exit::OK } else { exit::UNEXPECTED })
        }
        Cmd::Check { trace, intruder, json } => {
            let f = File::open(&trace)
                .map_err(|source| fixtures::FixtureError::Io { path: trace.clone(), source })?;
            let events = trace_io::read_trace(BufReader::new(f))?;
            let name = trace.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let report = tap_cli::check_trace(&name, &events, intruder);
            print!("{}", report.render());
            if let Some(p) = json {
                write_json(&p, &report)?;
            }
            Ok(exit::OK)
        }
        Cmd::Keys { cmd: KeysCmd::Demo { table, length, export } } => {
            let table = match table {
                Some(p) => {
                    let bytes = fixtures::read(&p)?;
                    fixtures::parse_table(&String::from_utf8_lossy(&bytes))?
                }
                None => tap_cli::demo_table(),
            };
            let msg = tap_cli::demo_key_msg(length, tap_core::RetrievalMode::Mode1);
            let (chain, text) = tap_cli::render_keychain(&table, &msg)?;
            print!("{text}");
            if let Some(p) = export {
                fixtures::save_chain(&p, &chain)?;
            }
            Ok(exit::OK)
        }
        Cmd::Keys { cmd: KeysCmd::Inspect { blob } } => {
            let chain = fixtures::load_chain(&blob)?;
            println!(
                "ok: L={} interval={} s N0={}",
                chain.length(),
                chain.interval_len(),
                hex::encode(chain.n0())
            );
            Ok(exit::OK)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = dispatch(cli.cmd).context("tap");
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            let code = e.downcast_ref::<CliError>().map_or(exit::RUNTIME, CliError::exit_code);
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}
