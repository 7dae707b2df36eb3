//! Deterministic discrete-event network with a Dolev-Yao intruder.
//!
//! Messages travel with a fixed latency. Pairs of parties marked unreachable
//! cannot talk directly; an intruder that reaches both ends may relay for
//! them, which is how the man-in-the-middle conditions are expressed. The
//! intruder also observes every transmission and can block, replay,
//! redirect or spoof according to a rule script. Its own actions go to a
//! separate log, never into the honest trace.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::algebra::{hash, hash_concat, Digest, Key, KeyKind, KeyPair, KeyRegistry, OpCounts, Term, NONCE_LEN};
use crate::checker::{verdict, AttackVerdict};
use crate::keychain::{KeyChain, KeyMsg, RetrievalMode, SecretTable};
use crate::metrics::{count_total, Metrics};
use crate::roles::{
    Command, CustomerConfig, CustomerRecord, CustomerState, GroupMaterial, MeState, MsgKind, PartyState,
    ProtocolMessage, ProviderConfig, ProviderState, RoleError, RoleState, TimerTag, TraceEvent,
};
use crate::ticket::DriftEstimator;

/// Global clock value at which every scenario starts.
pub const EPOCH: u64 = 10_000;

/// Deepest body any honest role produces (ticket grants).
pub const MAX_HONEST_DEPTH: usize = 8;

/// Closure depth bound.
pub const DEPTH_BOUND: usize = MAX_HONEST_DEPTH + 1;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum SimError {
    #[error("step budget of {0} exhausted")]
    BudgetExhausted(usize),
    #[error("intruder cannot derive the {kind} body it was told to spoof")]
    UnderivableSpoof { kind: MsgKind },
    #[error("unknown party {0}")]
    UnknownParty(String),
    #[error("scenario error: {0}")]
    Role(#[from] RoleError),
    #[error("keychain bootstrap failed for {0}")]
    Bootstrap(String),
}

// ---------------------------------------------------------------------------
// Knowledge

/// Intruder knowledge: the analysis fixpoint of everything observed, plus a
/// bounded synthesis check.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Knowledge {
    terms: BTreeSet<Term>,
    /// Tags of keys whose bytes are known.
    key_tags: BTreeSet<Digest>,
    /// Boxes not yet openable, by the tag of the key that would open them.
    locked: BTreeMap<Digest, Vec<Term>>,
    registry: KeyRegistry,
    depth_bound: usize,
}

impl Knowledge {
    pub fn new(registry: KeyRegistry, depth_bound: usize) -> Self {
        Knowledge {
            terms: BTreeSet::new(),
            key_tags: BTreeSet::new(),
            locked: BTreeMap::new(),
            registry,
            depth_bound,
        }
    }

    pub fn with_terms(registry: KeyRegistry, depth_bound: usize, init: impl IntoIterator<Item = Term>) -> Self {
        let mut k = Knowledge::new(registry, depth_bound);
        for t in init {
            k.learn(t);
        }
        k
    }

    /// Adds a term and closes under projection and opening.
    pub fn learn(&mut self, t: Term) {
        let mut work = alloc::vec![t];
        while let Some(t) = work.pop() {
            if !self.terms.insert(t.clone()) {
                continue;
            }
            match &t {
                Term::Cat(parts) => work.extend(parts.iter().cloned()),
                Term::Sealed { key_tag, payload } => {
                    let opener = self.registry.opener_tag(key_tag);
                    if self.key_tags.contains(&opener) {
                        work.push((**payload).clone());
                    } else {
                        self.locked.entry(opener).or_default().push(t.clone());
                    }
                }
                Term::Bytes(b) if b.len() == crate::algebra::DIGEST_LEN => {
                    let tag = hash(b);
                    self.key_tags.insert(tag);
                    if let Some(boxes) = self.locked.remove(&tag) {
                        for bx in boxes {
                            if let Term::Sealed { payload, .. } = bx {
                                work.push(*payload);
                            }
                        }
                    }
                }
                _ => {}
            }
        }
    }

    /// Member of the analysed set.
    pub fn contains(&self, t: &Term) -> bool {
        self.terms.contains(t)
    }

    pub fn knows_key(&self, key: &Key) -> bool {
        self.terms.contains(&key.to_term())
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &BTreeSet<Term> {
        &self.terms
    }

    pub fn depth_bound(&self) -> usize {
        self.depth_bound
    }

    /// Deepest analysed term.
    pub fn max_depth(&self) -> usize {
        self.terms.iter().map(Term::depth).max().unwrap_or(0)
    }

    /// Whether `t` can be built from the analysed set by pairing, sealing
    /// under known keys and incrementing known numbers, within the bound.
    pub fn derivable(&self, t: &Term) -> bool {
        t.depth() <= self.depth_bound && self.synth(t)
    }

    fn synth(&self, t: &Term) -> bool {
        if self.terms.contains(t) {
            return true;
        }
        match t {
            Term::Atom(_) => true,
            Term::Cat(parts) => parts.iter().all(|p| self.synth(p)),
            Term::Sealed { key_tag, payload } => self.key_tags.contains(key_tag) && self.synth(payload),
            Term::Nonce { .. } | Term::Num(_) => {
                self.terms.iter().any(|k| matches!(k, Term::Nonce { .. } | Term::Num(_)) && k.succ().as_ref() == Some(t))
            }
            _ => false,
        }
    }
}

/// Closure of a term set under the deduction rules (analysis part; the
/// synthesis part is answered by [`Knowledge::derivable`]).
pub fn deduce_closure(knowledge: &BTreeSet<Term>, registry: &KeyRegistry, depth_bound: usize) -> Knowledge {
    Knowledge::with_terms(registry.clone(), depth_bound, knowledge.iter().cloned())
}

// ---------------------------------------------------------------------------
// Intruder

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Trigger {
    pub kind: MsgKind,
    pub from: Option<String>,
    pub to: Option<String>,
    /// Fire on the n-th match only (1-based); 0 fires on every match.
    pub nth: u32,
}

impl Trigger {
    fn matches(&self, m: &ProtocolMessage) -> bool {
        self.kind == m.kind
            && self.from.as_ref().is_none_or(|f| *f == m.from)
            && self.to.as_ref().is_none_or(|t| *t == m.to)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum RuleAction {
    Block,
    Replay { to: String },
    Redirect { to: String },
    Spoof { kind: MsgKind, from: String, to: String, body: Term },
    /// Replace one top-level field of the body and forward the result in
    /// place of the original.
    Rewrite { part: usize, with: Term },
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Rule {
    pub trigger: Trigger,
    pub action: RuleAction,
}

/// Direct intruder operations.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum IntruderAction {
    Record(ProtocolMessage),
    Block(ProtocolMessage),
    Replay(ProtocolMessage, String),
    Redirect(ProtocolMessage, String),
    Spoof { kind: MsgKind, from: String, to: String, body: Term },
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IntruderSpec {
    pub id: String,
    /// Parties the intruder can exchange messages with.
    pub reach: Vec<String>,
    /// Relay traffic between parties that cannot reach each other.
    pub relay: bool,
    /// Extra delay on relayed traffic, seconds.
    pub relay_delay: u64,
    pub rules: Vec<Rule>,
    pub extra_knowledge: Vec<Term>,
}

impl Default for IntruderSpec {
    fn default() -> Self {
        IntruderSpec {
            id: "Z".into(),
            reach: Vec::new(),
            relay: false,
            relay_delay: 0,
            rules: Vec::new(),
            extra_knowledge: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IntruderEvent {
    pub time: u64,
    /// `block`, `replay`, `redirect`, `spoof` or `relay`.
    pub action: String,
    pub kind: MsgKind,
    pub from: String,
    pub to: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntruderState {
    pub id: String,
    pub knowledge: Knowledge,
    pub init: BTreeSet<Term>,
    pub reach: BTreeSet<String>,
    pub relay: bool,
    pub relay_delay: u64,
    rules: Vec<(Rule, u32)>,
    pub log: Vec<IntruderEvent>,
}

impl IntruderState {
    pub fn new(spec: &IntruderSpec, registry: KeyRegistry, init: BTreeSet<Term>) -> Self {
        let knowledge = Knowledge::with_terms(registry, DEPTH_BOUND, init.iter().cloned());
        IntruderState {
            id: spec.id.clone(),
            knowledge,
            init,
            reach: spec.reach.iter().cloned().collect(),
            relay: spec.relay,
            relay_delay: spec.relay_delay,
            rules: spec.rules.iter().cloned().map(|r| (r, 0)).collect(),
            log: Vec::new(),
        }
    }

    fn can_relay(&self, a: &str, b: &str) -> bool {
        self.relay && self.reach.contains(a) && self.reach.contains(b)
    }
}

// ---------------------------------------------------------------------------
// Network

#[derive(Clone, Debug, PartialEq, Eq)]
enum Entry {
    Deliver { to: String, msg: ProtocolMessage },
    Timer { party: String, tag: TimerTag },
    Command { party: String, cmd: Command },
}

/// Operation counts one party spent handling one queue entry.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OpLogEntry {
    pub time: u64,
    pub party: String,
    pub ops: OpCounts,
}

#[derive(Clone, Debug)]
pub struct NetworkSim {
    pub parties: BTreeMap<String, PartyState>,
    queue: BTreeMap<(u64, u64), Entry>,
    seq: u64,
    pub now: u64,
    pub latency: u64,
    pub trace: Vec<TraceEvent>,
    pub intruder: Option<IntruderState>,
    pub op_log: Vec<OpLogEntry>,
    unreachable: BTreeSet<(String, String)>,
    pub steps: usize,
    pub budget: usize,
}

fn pair(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.into(), b.into())
    } else {
        (b.into(), a.into())
    }
}

impl NetworkSim {
    pub fn new(latency: u64, start: u64) -> Self {
        NetworkSim {
            parties: BTreeMap::new(),
            queue: BTreeMap::new(),
            seq: 0,
            now: start,
            latency,
            trace: Vec::new(),
            intruder: None,
            op_log: Vec::new(),
            unreachable: BTreeSet::new(),
            steps: 0,
            budget: 10_000,
        }
    }

    pub fn add_party(&mut self, p: PartyState) {
        self.parties.insert(p.id.clone(), p);
    }

    pub fn set_unreachable(&mut self, a: &str, b: &str) {
        self.unreachable.insert(pair(a, b));
    }

    pub fn reachable(&self, a: &str, b: &str) -> bool {
        !self.unreachable.contains(&pair(a, b))
    }

    fn enqueue(&mut self, at: u64, e: Entry) {
        self.queue.insert((at, self.seq), e);
        self.seq += 1;
    }

    pub fn schedule(&mut self, at: u64, party: &str, cmd: Command) {
        self.enqueue(at, Entry::Command { party: party.into(), cmd });
    }

    /// Queues a message for delivery after one latency period, bypassing
    /// routing. `msg.link` is kept as given.
    pub fn inject(&mut self, msg: ProtocolMessage) {
        let at = self.now + self.latency;
        self.enqueue(at, Entry::Deliver { to: msg.to.clone(), msg });
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn run(&mut self) -> Result<(), SimError> {
        while self.step_once()? {}
        Ok(())
    }

    /// Processes the earliest queue entry. Returns `false` once the queue
    /// is empty.
    pub fn step_once(&mut self) -> Result<bool, SimError> {
        let Some(((at, _), entry)) = self.queue.pop_first() else { return Ok(false) };
        self.steps += 1;
        if self.steps > self.budget {
            return Err(SimError::BudgetExhausted(self.budget));
        }
        self.now = at;
        let (party, out) = match entry {
            Entry::Deliver { to, msg } => {
                let Some(p) = self.parties.get_mut(&to) else { return Ok(true) };
                let before = p.ops;
                let out = p.step(&msg, at);
                self.log_ops(&to, before);
                (to, out)
            }
            Entry::Timer { party, tag } => {
                let Some(p) = self.parties.get_mut(&party) else { return Ok(true) };
                let before = p.ops;
                let out = p.on_timer(&tag, at);
                self.log_ops(&party, before);
                (party, out)
            }
            Entry::Command { party, cmd } => {
                let p = self.parties.get_mut(&party).ok_or_else(|| SimError::UnknownParty(party.clone()))?;
                let before = p.ops;
                let out = p.command(&cmd, at)?;
                self.log_ops(&party, before);
                (party, out)
            }
        };
        self.trace.extend(out.events);
        for t in out.timers {
            self.enqueue(at + t.delay, Entry::Timer { party: party.clone(), tag: t.tag });
        }
        for m in out.messages {
            self.transmit(m)?;
        }
        Ok(true)
    }

    fn log_ops(&mut self, party: &str, before: OpCounts) {
        let after = self.parties[party].ops;
        if after != before {
            self.op_log.push(OpLogEntry { time: self.now, party: party.into(), ops: after - before });
        }
    }

    fn transmit(&mut self, m: ProtocolMessage) -> Result<(), SimError> {
        let mut deliver = true;
        let mut extra = Vec::new();
        if let Some(z) = self.intruder.as_mut() {
            z.knowledge.learn(m.body.clone());
            let mut fired = Vec::new();
            for (rule, count) in z.rules.iter_mut() {
                if rule.trigger.matches(&m) {
                    *count += 1;
                    if rule.trigger.nth == 0 || rule.trigger.nth == *count {
                        fired.push(rule.action.clone());
                    }
                }
            }
            for action in fired {
                let act = match action {
                    RuleAction::Block => IntruderAction::Block(m.clone()),
                    RuleAction::Replay { to } => IntruderAction::Replay(m.clone(), to),
                    RuleAction::Redirect { to } => IntruderAction::Redirect(m.clone(), to),
                    RuleAction::Spoof { kind, from, to, body } => IntruderAction::Spoof { kind, from, to, body },
                    RuleAction::Rewrite { part, with } => {
                        deliver = false;
                        let mut parts = m.body.as_cat().map(<[Term]>::to_vec).unwrap_or_default();
                        if let Some(slot) = parts.get_mut(part) {
                            *slot = with;
                        }
                        let to = m.to.clone();
                        IntruderAction::Spoof { kind: m.kind, from: m.from.clone(), to, body: Term::Cat(parts) }
                    }
                };
                if matches!(act, IntruderAction::Block(_) | IntruderAction::Redirect(..)) {
                    deliver = false;
                }
                extra.push(act);
            }
        }
        if deliver {
            self.route(m);
        }
        for act in extra {
            self.apply(act, false)?;
        }
        Ok(())
    }

    fn route(&mut self, m: ProtocolMessage) {
        let recipients: Vec<String> = if m.is_broadcast() {
            self.parties
                .values()
                .filter(|p| p.id != m.from && p.customer().is_some())
                .map(|p| p.id.clone())
                .collect()
        } else if self.parties.contains_key(&m.to) {
            alloc::vec![m.to.clone()]
        } else {
            Vec::new()
        };
        for r in recipients {
            if self.reachable(&m.from, &r) {
                let at = self.now + self.latency;
                self.enqueue(at, Entry::Deliver { to: r, msg: m.clone() });
                continue;
            }
            let Some(z) = self.intruder.as_mut() else { continue };
            if !z.can_relay(&m.from, &r) {
                continue;
            }
            z.log.push(IntruderEvent {
                time: self.now,
                action: "relay".into(),
                kind: m.kind,
                from: m.from.clone(),
                to: r.clone(),
            });
            let mut relayed = m.clone();
            relayed.link = z.id.clone();
            let at = self.now + self.latency + z.relay_delay;
            self.enqueue(at, Entry::Deliver { to: r, msg: relayed });
        }
    }

    /// Performs one intruder operation. Every message the intruder touches
    /// is recorded into its knowledge first.
    pub fn intruder_act(&mut self, action: IntruderAction) -> Result<(), SimError> {
        self.apply(action, true)
    }

    fn apply(&mut self, action: IntruderAction, record: bool) -> Result<(), SimError> {
        let now = self.now;
        let latency = self.latency;
        let Some(z) = self.intruder.as_mut() else { return Ok(()) };
        let log = |z: &mut IntruderState, action: &str, m: &ProtocolMessage, to: &str| {
            z.log.push(IntruderEvent {
                time: now,
                action: action.into(),
                kind: m.kind,
                from: m.from.clone(),
                to: to.into(),
            })
        };
        let send = match action {
            IntruderAction::Record(m) => {
                z.knowledge.learn(m.body);
                None
            }
            IntruderAction::Block(m) => {
                if record {
                    z.knowledge.learn(m.body.clone());
                }
                log(z, "block", &m, &m.to);
                if record {
                    self.queue.retain(|_, e| !matches!(e, Entry::Deliver { msg, .. } if *msg == m));
                }
                None
            }
            IntruderAction::Replay(m, to) => {
                if record {
                    z.knowledge.learn(m.body.clone());
                }
                log(z, "replay", &m, &to);
                Some((m, to))
            }
            IntruderAction::Redirect(m, to) => {
                if record {
                    z.knowledge.learn(m.body.clone());
                    self.queue.retain(|_, e| !matches!(e, Entry::Deliver { msg, .. } if *msg == m));
                }
                log(z, "redirect", &m, &to);
                Some((m, to))
            }
            IntruderAction::Spoof { kind, from, to, body } => {
                if !z.knowledge.derivable(&body) {
                    return Err(SimError::UnderivableSpoof { kind });
                }
                let m = ProtocolMessage::new(kind, &from, &to, body);
                log(z, "spoof", &m, &to);
                Some((m, to))
            }
        };
        if let Some((mut m, to)) = send {
            m.to = to.clone();
            m.link = z.id.clone();
            self.enqueue(now + latency, Entry::Deliver { to, msg: m });
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Scenarios

#[derive(Clone, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct GroupSpec {
    pub me: String,
    pub providers: Vec<String>,
    /// Providers of this group that answer with `Limited`.
    pub limited: Vec<String>,
    /// Other groups whose keychain this ME also holds (issuing-group members).
    pub holds: Vec<String>,
    /// Other groups whose group key this group's providers know (outer membership).
    pub outer: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CustomerSpec {
    pub id: String,
    pub config: CustomerConfig,
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScheduledAction {
    /// Seconds after the scenario start.
    pub at: u64,
    pub party: String,
    pub command: Command,
}

/// The man-in-the-middle conditions for one customer/provider pair.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Conditions {
    pub customer: String,
    pub provider: String,
    /// Intruder in the provider's coverage.
    pub c1: bool,
    /// Customer out of range of the provider.
    pub c2: bool,
    /// Intruder can talk to the customer.
    pub c3: bool,
    /// Negligible delay between the intruder's two halves.
    pub c4: bool,
}

impl Conditions {
    pub fn c5(&self) -> bool {
        self.c1 && self.c2 && self.c3 && self.c4
    }
}

/// Relay delay used when the intruder's halves are not directly linked.
pub const SLOW_RELAY_DELAY: u64 = 1000;

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    pub mode: RetrievalMode,
    pub restricted: bool,
    pub latency: u64,
    /// Request/challenge timeout; `None` uses eight latencies.
    pub timeout: Option<u64>,
    pub interval_len: u64,
    pub chain_length: u32,
    pub groups: Vec<GroupSpec>,
    pub customers: Vec<CustomerSpec>,
    pub unreachable: Vec<(String, String)>,
    pub clock_offsets: BTreeMap<String, i64>,
    pub intruder: Option<IntruderSpec>,
    pub conditions: Option<Conditions>,
    pub actions: Vec<ScheduledAction>,
    pub budget: usize,
}

impl ScenarioConfig {
    pub fn new(name: &str) -> Self {
        ScenarioConfig {
            name: name.into(),
            seed: 1,
            mode: RetrievalMode::Mode1,
            restricted: false,
            latency: 1,
            timeout: None,
            interval_len: 600,
            chain_length: 16,
            groups: Vec::new(),
            customers: Vec::new(),
            unreachable: Vec::new(),
            clock_offsets: BTreeMap::new(),
            intruder: None,
            conditions: None,
            actions: Vec::new(),
            budget: 10_000,
        }
    }

    pub fn group(mut self, me: &str, providers: &[&str]) -> Self {
        self.groups.push(GroupSpec {
            me: me.into(),
            providers: providers.iter().map(|s| s.to_string()).collect(),
            ..GroupSpec::default()
        });
        self
    }

    pub fn customer(mut self, id: &str, config: CustomerConfig) -> Self {
        self.customers.push(CustomerSpec { id: id.into(), config });
        self
    }

    pub fn at(mut self, at: u64, party: &str, command: Command) -> Self {
        self.actions.push(ScheduledAction { at, party: party.into(), command });
        self
    }

    fn offset(&self, id: &str) -> i64 {
        self.clock_offsets.get(id).copied().unwrap_or(0)
    }
}

fn derive(seed: u64, label: &str, id: &str) -> [u8; 32] {
    hash_concat(&[b"tap-scenario", &seed.to_be_bytes(), label.as_bytes(), id.as_bytes()]).0
}

/// Secret material of one group as fixed by a scenario seed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupSecrets {
    pub table: SecretTable,
    pub key_msg: KeyMsg,
    pub group_key: Key,
    pub keypair: KeyPair,
}

pub fn group_secrets(cfg: &ScenarioConfig, me: &str) -> GroupSecrets {
    let base = derive(cfg.seed, "table", me);
    let entries = (0u8..4).map(|k| hash_concat(&[&base, &[k]]).0).collect();
    let mut nonce = [0u8; NONCE_LEN];
    nonce.copy_from_slice(&derive(cfg.seed, "n0", me)[..NONCE_LEN]);
    let sender_clock = (EPOCH as i64 + cfg.offset(me)) as u64;
    GroupSecrets {
        table: SecretTable::new(entries),
        key_msg: KeyMsg {
            index: u32::from(base[0]),
            offset: u32::from(base[1]),
            duration: cfg.interval_len * u64::from(cfg.chain_length),
            sender_clock,
            nonce,
            length: cfg.chain_length,
            mode: cfg.mode,
        },
        group_key: Key::new(derive(cfg.seed, "group", me), KeyKind::Group),
        keypair: KeyPair::from_private(derive(cfg.seed, "me-sk", me)),
    }
}

/// Junk bytes every intruder starts with.
pub fn intruder_junk(cfg: &ScenarioConfig, intruder: &str) -> Term {
    Term::bytes(&derive(cfg.seed, "junk", intruder))
}

pub fn customer_key(cfg: &ScenarioConfig, id: &str) -> Key {
    Key::new(derive(cfg.seed, "customer", id), KeyKind::PublicPair)
}

pub fn customer_profile(id: &str) -> Term {
    Term::cat([Term::atom("profile"), Term::id(id)])
}

fn member_material(
    cfg: &ScenarioConfig,
    secrets: &GroupSecrets,
    leader: &str,
    member: &str,
    precompute: &mut OpCounts,
) -> Result<GroupMaterial, SimError> {
    let chain =
        KeyChain::build(&secrets.table, &secrets.key_msg, precompute).map_err(|_| SimError::Bootstrap(leader.into()))?;
    let local = (EPOCH as i64 + cfg.offset(member)) as u64;
    let est = DriftEstimator::from_key_msg(local, secrets.key_msg.sender_clock, secrets.key_msg.duration);
    Ok(GroupMaterial::member(leader, secrets.group_key, chain, cfg.mode, est))
}

/// Everything a finished scenario produced.
#[derive(Clone, Debug)]
pub struct ScenarioOutcome {
    pub name: String,
    pub trace: Vec<TraceEvent>,
    pub op_log: Vec<OpLogEntry>,
    pub intruder_log: Vec<IntruderEvent>,
    /// Keychain precomputation, kept out of the online counters.
    pub precompute: OpCounts,
    pub metrics: Metrics,
    pub verdict: AttackVerdict,
    pub sim: NetworkSim,
}

/// Builds the parties, key material and intruder of a scenario.
pub fn build_sim(cfg: &ScenarioConfig) -> Result<(NetworkSim, OpCounts), SimError> {
    let mut precompute = OpCounts::default();
    let mut registry = KeyRegistry::new();
    let secrets: BTreeMap<String, GroupSecrets> =
        cfg.groups.iter().map(|g| (g.me.clone(), group_secrets(cfg, &g.me))).collect();
    for s in secrets.values() {
        registry.register(&s.keypair);
    }
    let profiles: BTreeMap<String, CustomerRecord> = cfg
        .customers
        .iter()
        .map(|c| {
            let mut rec = CustomerRecord::new(customer_key(cfg, &c.id), customer_profile(&c.id));
            if let Some(pw) = &c.config.password {
                rec = rec.with_password(pw);
            }
            (c.id.clone(), rec)
        })
        .collect();
    let timeout = cfg.timeout.unwrap_or(8 * cfg.latency.max(1));
    let mut sim = NetworkSim::new(cfg.latency, EPOCH);
    sim.budget = cfg.budget;
    let finish = |mut p: PartyState| {
        p.restricted = cfg.restricted;
        p.timeout = timeout;
        p.clock_offset = cfg.offset(&p.id);
        p
    };
    for g in &cfg.groups {
        let s = &secrets[&g.me];
        let mut me = PartyState::new(&g.me, cfg.seed, registry.clone(), RoleState::Me(MeState::new(s.keypair, profiles.clone())))
            .with_group(member_material(cfg, s, &g.me, &g.me, &mut precompute)?);
        for other in &g.holds {
            let os = secrets.get(other).ok_or_else(|| SimError::UnknownParty(other.clone()))?;
            me = me.with_group(member_material(cfg, os, other, &g.me, &mut precompute)?);
        }
        sim.add_party(finish(me));
        for pid in &g.providers {
            let conf = ProviderConfig { limited: g.limited.contains(pid) };
            let mut p = PartyState::new(pid, cfg.seed, registry.clone(), RoleState::P(ProviderState::new(&g.me, s.keypair.public, conf)))
                .with_group(member_material(cfg, s, &g.me, pid, &mut precompute)?);
            for other in &g.outer {
                let os = secrets.get(other).ok_or_else(|| SimError::UnknownParty(other.clone()))?;
                p = p.with_group(GroupMaterial::outsider(other, os.group_key, cfg.mode));
            }
            sim.add_party(finish(p));
        }
    }
    for c in &cfg.customers {
        let st = CustomerState::new(customer_key(cfg, &c.id), c.config.clone());
        sim.add_party(finish(PartyState::new(&c.id, cfg.seed, registry.clone(), RoleState::C(st))));
    }
    for (a, b) in &cfg.unreachable {
        sim.set_unreachable(a, b);
    }
    let mut spec = cfg.intruder.clone();
    if let Some(cond) = &cfg.conditions {
        let z = spec.get_or_insert_with(IntruderSpec::default);
        z.relay = true;
        z.relay_delay = if cond.c4 { 0 } else { SLOW_RELAY_DELAY };
        if cond.c1 {
            z.reach.push(cond.provider.clone());
        }
        if cond.c3 {
            z.reach.push(cond.customer.clone());
        }
        if cond.c2 {
            sim.set_unreachable(&cond.customer, &cond.provider);
        }
    }
    if let Some(spec) = spec {
        let mut init: BTreeSet<Term> = sim.parties.keys().map(|id| Term::id(id)).collect();
        init.insert(Term::id(&spec.id));
        for s in secrets.values() {
            init.insert(s.keypair.public.to_term());
        }
        init.insert(intruder_junk(cfg, &spec.id));
        init.extend(spec.extra_knowledge.iter().cloned());
        sim.intruder = Some(IntruderState::new(&spec, registry, init));
    }
    for a in &cfg.actions {
        if !sim.parties.contains_key(&a.party) {
            return Err(SimError::UnknownParty(a.party.clone()));
        }
        sim.schedule(EPOCH + a.at, &a.party, a.command.clone());
    }
    Ok((sim, precompute))
}

pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioOutcome, SimError> {
    let (mut sim, precompute) = build_sim(cfg)?;
    sim.run()?;
    let intruder_present = sim.intruder.is_some();
    let v = verdict(&sim.trace, intruder_present);
    let metrics = count_total(&sim.trace, &sim.op_log);
    Ok(ScenarioOutcome {
        name: cfg.name.clone(),
        trace: sim.trace.clone(),
        op_log: sim.op_log.clone(),
        intruder_log: sim.intruder.as_ref().map(|z| z.log.clone()).unwrap_or_default(),
        precompute,
        metrics,
        verdict: v,
        sim,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::seal;
    use crate::roles::EventKind;
    use crate::scenarios;

    fn ia() -> ScenarioConfig {
        scenarios::honest_ia(RetrievalMode::Mode1, true)
    }

    #[test]
    fn same_seed_same_trace() {
        let a = run_scenario(&ia()).unwrap();
        let b = run_scenario(&ia()).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.op_log, b.op_log);
        let mut other = ia();
        other.seed = 99;
        let c = run_scenario(&other).unwrap();
        assert_ne!(a.trace, c.trace);
        assert_eq!(a.trace.len(), c.trace.len());
    }

    #[test]
    fn trace_is_time_ordered() {
        for b in scenarios::suite(RetrievalMode::Mode1) {
            let o = run_scenario(&b.config).unwrap();
            assert!(o.trace.windows(2).all(|w| w[0].time <= w[1].time), "{}", o.name);
        }
    }

    #[test]
    fn equal_times_keep_insertion_order() {
        let mut cfg = ia();
        cfg.actions.clear();
        cfg.customers[0].config.auto_join = false;
        let (mut sim, _) = build_sim(&cfg).unwrap();
        sim.schedule(EPOCH + 5, "C1", Command::Join { provider: "P1".into() });
        sim.schedule(EPOCH + 5, "P1", Command::Broadcast);
        // the join runs first and has no broadcast to go on
        assert!(matches!(sim.step_once(), Err(SimError::Role(_))));

        let (mut sim, _) = build_sim(&cfg).unwrap();
        sim.schedule(EPOCH + 5, "P1", Command::Broadcast);
        sim.schedule(EPOCH + 7, "C1", Command::Join { provider: "P1".into() });
        sim.run().unwrap();
        assert!(sim.trace.iter().any(|e| e.kind == EventKind::ServiceStart));
    }

    #[test]
    fn budget_is_enforced() {
        let mut cfg = ia();
        cfg.budget = 3;
        assert_eq!(run_scenario(&cfg).err(), Some(SimError::BudgetExhausted(3)));
    }

    #[test]
    fn unknown_party_command_is_an_error() {
        let cfg = ia().at(1, "nobody", Command::Broadcast);
        assert!(matches!(run_scenario(&cfg), Err(SimError::UnknownParty(_))));
    }

    #[test]
    fn unreachable_pair_without_intruder_stalls() {
        let mut cfg = ia();
        cfg.unreachable.push(("C1".into(), "P1".into()));
        let o = run_scenario(&cfg).unwrap();
        assert!(o.trace.iter().all(|e| e.kind != EventKind::ServiceStart));
        assert_eq!(o.verdict, AttackVerdict::NoAttack);
    }

    #[test]
    fn intruder_cannot_spoof_what_it_cannot_build() {
        let mut cfg = ia();
        let secret = Key::new([0x5a; 32], KeyKind::Session);
        cfg.intruder = Some(IntruderSpec {
            rules: alloc::vec![Rule {
                trigger: Trigger { kind: MsgKind::JoinReq, from: None, to: None, nth: 1 },
                action: RuleAction::Spoof {
                    kind: MsgKind::ChallengeResp,
                    from: "C1".into(),
                    to: "P1".into(),
                    body: seal(&secret, Term::atom("x")),
                },
            }],
            ..IntruderSpec::default()
        });
        assert_eq!(
            run_scenario(&cfg).err(),
            Some(SimError::UnderivableSpoof { kind: MsgKind::ChallengeResp })
        );
    }

    #[test]
    fn intruder_records_but_never_traces() {
        let o = run_scenario(&scenarios::replay_ia(RetrievalMode::Mode1)).unwrap();
        assert!(o.trace.iter().all(|e| e.actor != "Z"));
        assert!(o.intruder_log.iter().any(|e| e.action == "replay"));
        let z = o.sim.intruder.as_ref().unwrap();
        assert!(z.knowledge.len() > z.init.len());
    }

    #[test]
    fn knowledge_opens_only_with_key() {
        let k = Key::new([7; 32], KeyKind::Session);
        let inner = Term::cat([Term::atom("a"), Term::nonce("N", [1; 16])]);
        let boxed = seal(&k, inner.clone());
        let mut kn = Knowledge::new(KeyRegistry::new(), DEPTH_BOUND);
        kn.learn(boxed.clone());
        assert!(!kn.contains(&inner));
        assert!(kn.derivable(&boxed));
        assert!(!kn.derivable(&seal(&k, Term::atom("b"))));
        kn.learn(k.to_term());
        assert!(kn.contains(&inner));
        assert!(kn.contains(&Term::nonce("N", [1; 16])));
        assert!(kn.derivable(&Term::nonce("N", [1; 16]).succ().unwrap()));
        assert!(kn.derivable(&seal(&k, Term::atom("b"))));
        // the order of learning does not matter
        let mut rev = Knowledge::new(KeyRegistry::new(), DEPTH_BOUND);
        rev.learn(k.to_term());
        rev.learn(boxed);
        assert_eq!(rev.terms(), kn.terms());
    }

    #[test]
    fn public_key_box_needs_private_half() {
        let pair = KeyPair::from_private([3; 32]);
        let mut reg = KeyRegistry::new();
        reg.register(&pair);
        let boxed = seal(&pair.public, Term::atom("secret"));
        let mut kn = Knowledge::with_terms(reg.clone(), DEPTH_BOUND, [boxed.clone(), pair.public.to_term()]);
        assert!(!kn.contains(&Term::atom("secret")));
        kn.learn(pair.private.to_term());
        assert!(kn.contains(&Term::atom("secret")));
    }

    #[test]
    fn synthesis_respects_depth_bound() {
        let kn = Knowledge::new(KeyRegistry::new(), 3);
        let mut t = Term::atom("x");
        for _ in 0..3 {
            t = Term::cat([t]);
        }
        assert!(!kn.derivable(&t));
        assert!(kn.derivable(&Term::cat([Term::cat([Term::atom("x")])])));
    }

    #[test]
    fn honest_messages_stay_under_the_depth_bound() {
        for mode in [RetrievalMode::Mode1, RetrievalMode::Mode2, RetrievalMode::Mode3] {
            for b in scenarios::suite(mode) {
                let o = run_scenario(&b.config).unwrap();
                let deepest = o
                    .trace
                    .iter()
                    .filter(|e| e.kind == EventKind::Send)
                    .map(|e| e.payload.depth())
                    .max()
                    .unwrap_or(0);
                assert!(deepest <= MAX_HONEST_DEPTH, "{} depth {}", o.name, deepest);
            }
        }
    }

    #[test]
    fn slow_relay_only_without_c4() {
        let fast = run_scenario(&scenarios::mitm([true; 4], false)).unwrap();
        let slow = run_scenario(&scenarios::mitm([true, true, true, false], false)).unwrap();
        let z = |o: &ScenarioOutcome| o.sim.intruder.as_ref().unwrap().relay_delay;
        assert_eq!(z(&fast), 0);
        assert_eq!(z(&slow), SLOW_RELAY_DELAY);
        assert!(fast.intruder_log.iter().all(|e| e.action == "relay"));
    }

    #[test]
    fn conditions_c5_is_conjunction() {
        let c = Conditions { customer: "C".into(), provider: "P".into(), c1: true, c2: true, c3: true, c4: true };
        assert!(c.c5());
        assert!(!Conditions { c3: false, ..c }.c5());
    }

    #[test]
    fn group_secrets_depend_on_seed_and_group() {
        let cfg = ia();
        let a = group_secrets(&cfg, "ME1");
        assert_eq!(a, group_secrets(&cfg, "ME1"));
        assert_ne!(a.group_key, group_secrets(&cfg, "ME2").group_key);
        let other = ScenarioConfig { seed: cfg.seed + 1, ..cfg.clone() };
        assert_ne!(a.key_msg.nonce, group_secrets(&other, "ME1").key_msg.nonce);
        assert!(a.key_msg.validate().is_ok());
    }
}
