//! TOML scenario files.
//!
//! ```toml
//! name = "mitm"
//! seed = 7
//! mode = 1
//! restricted = false
//! expect = "AttackSucceeded"
//!
//! [[group]]
//! me = "ME1"
//! providers = ["P1"]
//!
//! [[customer]]
//! id = "C1"
//! auto_join = true
//!
//! [[action]]
//! at = 0
//! party = "P1"
//! command = "broadcast"
//!
//! [conditions]
//! customer = "C1"
//! provider = "P1"
//! c1 = true
//! c2 = true
//! c3 = true
//! c4 = true
//! ```

use std::collections::BTreeMap;

use serde::Deserialize;
use tap_core::checker::AttackVerdict;
use tap_core::keychain::RetrievalMode;
use tap_core::roles::{Command, CustomerConfig, MsgKind};
use tap_core::sim::{
    intruder_junk, Conditions, CustomerSpec, GroupSpec, IntruderSpec, Rule, RuleAction, ScenarioConfig,
    ScheduledAction, Trigger,
};
use tap_core::Term;

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("{0}")]
    Toml(#[from] toml::de::Error),
    #[error("retrieval mode must be 1, 2 or 3, got {0}")]
    Mode(u8),
    #[error("unknown verdict {0:?}")]
    Verdict(String),
    #[error("action {index}: {reason}")]
    Action { index: usize, reason: String },
    #[error("intruder rule {index}: {reason}")]
    Rule { index: usize, reason: String },
    #[error("scenario has no groups")]
    NoGroups,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct File {
    name: String,
    #[serde(default = "one")]
    seed: u64,
    #[serde(default = "mode_one")]
    mode: u8,
    #[serde(default)]
    restricted: bool,
    expect: Option<String>,
    latency: Option<u64>,
    timeout: Option<u64>,
    interval_len: Option<u64>,
    chain_length: Option<u32>,
    budget: Option<usize>,
    #[serde(default)]
    group: Vec<GroupSpec>,
    #[serde(default)]
    customer: Vec<CustomerEntry>,
    #[serde(default)]
    action: Vec<ActionEntry>,
    #[serde(default)]
    unreachable: Vec<(String, String)>,
    #[serde(default)]
    clock_offsets: BTreeMap<String, i64>,
    intruder: Option<IntruderEntry>,
    conditions: Option<Conditions>,
}

fn one() -> u64 {
    1
}

fn mode_one() -> u8 {
    1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CustomerEntry {
    id: String,
    #[serde(default)]
    auto_join: bool,
    password: Option<String>,
    reconnect_on_limited: Option<String>,
    #[serde(default)]
    tamper_partial_key: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ActionEntry {
    at: u64,
    party: String,
    command: String,
    target: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct IntruderEntry {
    #[serde(default = "z")]
    id: String,
    #[serde(default)]
    reach: Vec<String>,
    #[serde(default)]
    relay: bool,
    #[serde(default)]
    relay_delay: u64,
    #[serde(default)]
    rule: Vec<RuleEntry>,
}

fn z() -> String {
    "Z".into()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleEntry {
    kind: MsgKind,
    from: Option<String>,
    to: Option<String>,
    #[serde(default)]
    nth: u32,
    action: String,
    target: Option<String>,
    /// Field index for `rewrite`; the replacement is the intruder's junk.
    part: Option<usize>,
}

/// A parsed scenario and the verdict it declares, if any.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub expected: Option<AttackVerdict>,
}

pub fn parse_mode(m: u8) -> Result<RetrievalMode, ScenarioError> {
    RetrievalMode::from_u8(m).ok_or(ScenarioError::Mode(m))
}

fn command(index: usize, a: &ActionEntry) -> Result<Command, ScenarioError> {
    let target = || {
        a.target.clone().ok_or_else(|| ScenarioError::Action { index, reason: format!("{} needs a target", a.command) })
    };
    Ok(match a.command.as_str() {
        "broadcast" => Command::Broadcast,
        "join" => Command::Join { provider: target()? },
        "switch" => Command::Switch { provider: target()? },
        "cc-start" => Command::CcStart { peer: target()? },
        other => return Err(ScenarioError::Action { index, reason: format!("unknown command {other:?}") }),
    })
}

pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
    let f: File = toml::from_str(text)?;
    if f.group.is_empty() {
        return Err(ScenarioError::NoGroups);
    }
    let mut cfg = ScenarioConfig::new(&f.name);
    cfg.seed = f.seed;
    cfg.mode = parse_mode(f.mode)?;
    cfg.restricted = f.restricted;
    cfg.latency = f.latency.unwrap_or(cfg.latency);
    cfg.timeout = f.timeout;
    cfg.interval_len = f.interval_len.unwrap_or(cfg.interval_len);
    cfg.chain_length = f.chain_length.unwrap_or(cfg.chain_length);
    cfg.budget = f.budget.unwrap_or(cfg.budget);
    cfg.groups = f.group;
    cfg.customers = f
        .customer
        .into_iter()
        .map(|c| CustomerSpec {
            id: c.id,
            config: CustomerConfig {
                auto_join: c.auto_join,
                password: c.password.map(String::into_bytes),
                reconnect_on_limited: c.reconnect_on_limited,
                tamper_partial_key: c.tamper_partial_key,
            },
        })
        .collect();
    cfg.actions = f
        .action
        .iter()
        .enumerate()
        .map(|(i, a)| Ok(ScheduledAction { at: a.at, party: a.party.clone(), command: command(i, a)? }))
        .collect::<Result<_, ScenarioError>>()?;
    cfg.unreachable = f.unreachable;
    cfg.clock_offsets = f.clock_offsets;
    cfg.conditions = f.conditions;
    if let Some(z) = f.intruder {
        let junk = intruder_junk(&cfg, &z.id);
        let rules = z
            .rule
            .into_iter()
            .enumerate()
            .map(|(index, r)| rule(index, r, &junk))
            .collect::<Result<_, _>>()?;
        cfg.intruder = Some(IntruderSpec {
            id: z.id,
            reach: z.reach,
            relay: z.relay,
            relay_delay: z.relay_delay,
            rules,
            extra_knowledge: Vec::new(),
        });
    }
    let expected = f
        .expect
        .map(|v| AttackVerdict::from_name(&v).ok_or(ScenarioError::Verdict(v)))
        .transpose()?;
    Ok(Scenario { config: cfg, expected })
}

fn rule(index: usize, r: RuleEntry, junk: &Term) -> Result<Rule, ScenarioError> {
    let target = || r.target.clone().ok_or_else(|| ScenarioError::Rule { index, reason: "missing target".into() });
    let action = match r.action.as_str() {
        "block" => RuleAction::Block,
        "replay" => RuleAction::Replay { to: target()? },
        "redirect" => RuleAction::Redirect { to: target()? },
        "rewrite" => RuleAction::Rewrite {
            part: r.part.ok_or_else(|| ScenarioError::Rule { index, reason: "rewrite needs a part".into() })?,
            with: junk.clone(),
        },
        other => return Err(ScenarioError::Rule { index, reason: format!("unknown action {other:?}") }),
    };
    Ok(Rule { trigger: Trigger { kind: r.kind, from: r.from, to: r.to, nth: r.nth }, action })
}
