//! Command-line front end for tap-core: scenario files, trace files and
//! reports.

pub mod fixtures;
pub mod scenario_file;
pub mod trace_io;

use std::fmt::Write as _;
use std::path::Path;

use tap_core::algebra::{OpCounts, NONCE_LEN};
use tap_core::checker::{verdict, AttackVerdict};
use tap_core::keychain::{KeyChain, KeyMsg, RetrievalMode, SecretTable};
use tap_core::metrics::RunReport;
use tap_core::roles::TraceEvent;
use tap_core::scenarios::{self, Builtin};
use tap_core::sim::{run_scenario, ScenarioOutcome, SimError};
use tap_core::ticket::IndexTree;

use scenario_file::{Scenario, ScenarioError};

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    /// A verdict differed from the declared one.
    pub const UNEXPECTED: u8 = 1;
    /// The scenario, table or trace file could not be read or parsed.
    pub const PARSE: u8 = 2;
    /// The simulation itself failed (budget, bad spoof, unknown party).
    pub const RUNTIME: u8 = 3;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Fixture(#[from] fixtures::FixtureError),
    #[error(transparent)]
    Trace(#[from] trace_io::TraceError),
    #[error("{0}: not UTF-8")]
    Utf8(String),
    #[error("simulation: {0}")]
    Sim(#[from] SimError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Sim(_) => exit::RUNTIME,
            CliError::Io(_) | CliError::Json(_) => exit::RUNTIME,
            _ => exit::PARSE,
        }
    }
}

/// Command-line adjustments applied on top of a scenario file.
#[derive(Clone, Copy, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub mode: Option<RetrievalMode>,
    pub restricted: bool,
}

pub fn load_scenario(path: &Path, o: Overrides) -> Result<Scenario, CliError> {
    let path = fixtures::resolve(path);
    let bytes = fixtures::read(&path)?;
    let text = String::from_utf8(bytes).map_err(|_| CliError::Utf8(path.display().to_string()))?;
    let mut s = scenario_file::parse(&text)?;
    if let Some(seed) = o.seed {
        s.config.seed = seed;
    }
    if let Some(mode) = o.mode {
        s.config.mode = mode;
    }
    s.config.restricted |= o.restricted;
    Ok(s)
}

pub fn report_for(outcome: &ScenarioOutcome, expected: Option<AttackVerdict>) -> RunReport {
    let mut r = RunReport::build(&outcome.name, &outcome.trace, &outcome.op_log, outcome.verdict, outcome.precompute);
    r.expected_verdict = expected;
    r
}

pub fn run(s: &Scenario) -> Result<(ScenarioOutcome, RunReport), CliError> {
    let outcome = run_scenario(&s.config)?;
    let report = report_for(&outcome, s.expected);
    Ok((outcome, report))
}

/// Report for a trace read from disk; no operation counts are available.
pub fn check_trace(name: &str, trace: &[TraceEvent], intruder_present: bool) -> RunReport {
    RunReport::build(name, trace, &[], verdict(trace, intruder_present), OpCounts::default())
}

pub struct SuiteResult {
    pub builtin: Builtin,
    pub report: RunReport,
}

pub fn run_suite(mode: RetrievalMode) -> Result<Vec<SuiteResult>, CliError> {
    scenarios::suite(mode)
        .into_iter()
        .map(|b| {
            let o = run_scenario(&b.config)?;
            let report = report_for(&o, Some(b.expected));
            Ok(SuiteResult { builtin: b, report })
        })
        .collect()
}

pub fn render_suite(results: &[SuiteResult]) -> String {
    let mut s = String::new();
    for r in results {
        let rep = &r.report;
        let failing = rep.claims.iter().filter(|c| !c.holds).count();
        let _ = writeln!(
            s,
            "{:<4} {:<24} {:<16} expected {:<16} runs {} alerts {} failing-claims {}",
            if rep.verdict_ok() { "ok" } else { "FAIL" },
            rep.scenario,
            rep.verdict.name(),
            r.builtin.expected.name(),
            rep.runs.len(),
            rep.alerts.len(),
            failing
        );
    }
    let bad = results.iter().filter(|r| !r.report.verdict_ok()).count();
    let _ = writeln!(s, "{} scenarios, {} unexpected", results.len(), bad);
    s
}

/// Table used by `keys demo` when none is given.
pub fn demo_table() -> SecretTable {
    SecretTable::new((0u8..4).map(|i| tap_core::hash(&[b'd', i]).0).collect())
}

pub fn demo_key_msg(length: u32, mode: RetrievalMode) -> KeyMsg {
    let mut nonce = [0u8; NONCE_LEN];
    nonce.copy_from_slice(&tap_core::hash(b"demo-n0").0[..NONCE_LEN]);
    KeyMsg { index: 2, offset: 5, duration: 600 * u64::from(length), sender_clock: 10_000, nonce, length, mode }
}

/// Human-readable walk through a keychain and its index tree.
pub fn render_keychain(table: &SecretTable, msg: &KeyMsg) -> Result<(KeyChain, String), CliError> {
    let mut ops = OpCounts::default();
    let chain = KeyChain::build(table, msg, &mut ops).map_err(fixtures::FixtureError::from)?;
    let tree = IndexTree::build(chain.index_vector(), &mut ops);
    let short = |b: &[u8]| hex::encode(&b[..8]);
    let mut s = String::new();
    let _ = writeln!(s, "table     {} entries", table.entries.len());
    let _ = writeln!(
        s,
        "key msg   I={} O={} T_d={} T_c={} N0={} L={} mode={}",
        msg.index,
        msg.offset,
        msg.duration,
        msg.sender_clock,
        hex::encode(msg.nonce),
        msg.length,
        msg.mode.as_u8()
    );
    let _ = writeln!(s, "interval  {} s", chain.interval_len());
    let _ = writeln!(s, "\n  i  G_i               K_i               V_i");
    for i in 0..chain.generators().len() {
        let _ = writeln!(
            s,
            "{:>3}  {}  {}  {}",
            i,
            short(&chain.generators()[i].0),
            short(&chain.keys()[i].bytes),
            short(&chain.index_vector()[i])
        );
    }
    let _ = writeln!(s, "\ntree head {}  depth {}  leaves {}", tree.head().to_hex(), tree.depth(), tree.leaf_count());
    let _ = writeln!(s, "derivation cost: {} hash, {} xor", ops.hash, ops.xor);
    Ok((chain, s))
}
