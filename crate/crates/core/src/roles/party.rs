use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;

use super::authority::{self, MeState};
use super::customer::{self, CustomerState};
use super::provider::{self, ProviderState};
use super::{EventKind, MsgKind, ProtocolMessage, Role, StepOutput, Timer, TraceEvent};
use crate::algebra::{hash, hash_concat, Digest, Key, KeyRegistry, OpCounts, Term};
use crate::keychain::{KeyChain, RetrievalMode, SessionKey};
use crate::ticket::{DriftEstimator, IndexTree, VerifierKeys};

/// Resend attempts before a customer gives up on a request.
pub const DEFAULT_MAX_RETRIES: u8 = 2;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum RoleError {
    #[error("no public-key broadcast seen for provider {0}")]
    NoBroadcastSeen(String),
    #[error("customer holds no ticket")]
    NoTicket,
    #[error("command does not apply to this role")]
    WrongRole,
    #[error("required association missing: {0}")]
    ScenarioRoutingFailure(String),
}

/// Which protocol a provider-side challenge belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Family {
    Ia,
    Ra1,
    Ra2,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Ia => "IA",
            Family::Ra1 => "RA-1",
            Family::Ra2 => "RA-2",
        }
    }

    /// Step label of the confirmation that fails on a bad reply.
    pub fn final_step(self) -> &'static str {
        match self {
            Family::Ia => "M6",
            Family::Ra1 => "M3",
            Family::Ra2 => "M5",
        }
    }
}

/// An outstanding request or challenge, keyed by peer in [`PartyState::pending`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Pending {
    /// Customer waiting for `u0` after a join request.
    Join { n0: Term, prev: Option<Term>, me: String, attempts: u8 },
    /// Customer waiting for the provider's reply to a switch request.
    Switch { n0: Term, prev: Option<Term>, attempts: u8 },
    /// Provider waiting for `E_S(C ‖ N1+1)`.
    Challenge {
        n1: Term,
        n0: Option<Term>,
        session: SessionKey,
        ticket: Digest,
        family: Family,
        limited: bool,
    },
}

impl Pending {
    pub fn nonce(&self) -> &Term {
        match self {
            Pending::Join { n0, .. } | Pending::Switch { n0, .. } => n0,
            Pending::Challenge { n1, .. } => n1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum TimerTag {
    Join { provider: String, nonce: Digest },
    Switch { provider: String, nonce: Digest },
    Challenge { customer: String, nonce: Digest },
    /// Deferred ME grant.
    Grant { job: u64 },
}

/// Scripted user actions.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Command {
    /// Provider broadcasts its ME's public key.
    Broadcast,
    Join { provider: String },
    Switch { provider: String },
    CcStart { peer: String },
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CustomerConfig {
    /// Join through the first provider whose broadcast arrives.
    pub auto_join: bool,
    /// Registered customers send `H(password)` in place of `N0`.
    pub password: Option<Vec<u8>>,
    /// On `Limited`, accept the ticket and re-authenticate here instead.
    pub reconnect_on_limited: Option<String>,
    /// Transmit a partial key that differs in one byte from the one kept.
    pub tamper_partial_key: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProviderConfig {
    /// Resource-limited: answer with `Limited` instead of a plain `u0`.
    pub limited: bool,
}

/// Key material a party holds for one group, keyed by the group's ME.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupMaterial {
    pub leader: String,
    /// `h(ME)` as carried in switch requests.
    pub leader_digest: Digest,
    pub group_key: Key,
    /// Present only for full members; outer members know just the group key.
    pub chain: Option<KeyChain>,
    pub tree: Option<IndexTree>,
    pub estimator: DriftEstimator,
    pub mode: RetrievalMode,
}

/// `h(ME)` for routing.
pub fn leader_digest(me: &str) -> Digest {
    hash(me.as_bytes())
}

impl GroupMaterial {
    /// Full member holding the derived chain. The index tree is part of
    /// the precomputation and is not counted as online work.
    pub fn member(
        leader: &str,
        group_key: Key,
        chain: KeyChain,
        mode: RetrievalMode,
        estimator: DriftEstimator,
    ) -> Self {
        let tree = IndexTree::build(chain.index_vector(), &mut OpCounts::default());
        GroupMaterial {
            leader: leader.into(),
            leader_digest: leader_digest(leader),
            group_key,
            chain: Some(chain),
            tree: Some(tree),
            estimator,
            mode,
        }
    }

    pub fn outsider(leader: &str, group_key: Key, mode: RetrievalMode) -> Self {
        GroupMaterial {
            leader: leader.into(),
            leader_digest: leader_digest(leader),
            group_key,
            chain: None,
            tree: None,
            estimator: DriftEstimator { epsilon: 0, duration: 0, chain_start: 0, last_update: None },
            mode,
        }
    }

    pub fn verifier(&self) -> Option<VerifierKeys<'_>> {
        Some(VerifierKeys { chain: self.chain.as_ref()?, tree: self.tree.as_ref()?, group_key: &self.group_key })
    }

    /// Interval the local clock falls in, `L` once the chain has expired.
    pub fn local_interval(&self, local_now: u64) -> Option<u64> {
        let chain = self.chain.as_ref()?;
        let start = self.estimator.chain_start;
        Some(if local_now < start {
            0
        } else {
            ((local_now - start) / chain.interval_len().max(1)).min(u64::from(chain.length()))
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RoleState {
    Me(MeState),
    P(ProviderState),
    C(CustomerState),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartyState {
    pub id: String,
    /// Local clock = global time + offset.
    pub clock_offset: i64,
    pub registry: KeyRegistry,
    pub groups: BTreeMap<String, GroupMaterial>,
    pub pending: BTreeMap<String, Pending>,
    /// `(customer, request digest)` → times seen.
    pub seen_requests: BTreeMap<(String, Digest), u32>,
    pub association: Option<String>,
    /// At most one protocol instance per peer at a time.
    pub restricted: bool,
    /// Request/challenge timeout, seconds.
    pub timeout: u64,
    pub max_retries: u8,
    /// Cumulative online operation counts.
    pub ops: OpCounts,
    pub state: RoleState,
    rng: ChaCha8Rng,
}

fn party_seed(seed: u64, id: &str) -> [u8; 32] {
    hash_concat(&[&seed.to_be_bytes(), id.as_bytes()]).0
}

impl PartyState {
    pub fn new(id: &str, seed: u64, registry: KeyRegistry, state: RoleState) -> Self {
        PartyState {
            id: id.into(),
            clock_offset: 0,
            registry,
            groups: BTreeMap::new(),
            pending: BTreeMap::new(),
            seen_requests: BTreeMap::new(),
            association: None,
            restricted: false,
            timeout: 8,
            max_retries: DEFAULT_MAX_RETRIES,
            ops: OpCounts::default(),
            state,
            rng: ChaCha8Rng::from_seed(party_seed(seed, id)),
        }
    }

    pub fn role(&self) -> Role {
        match self.state {
            RoleState::Me(_) => Role::Me,
            RoleState::P(_) => Role::P,
            RoleState::C(_) => Role::C,
        }
    }

    pub fn with_group(mut self, g: GroupMaterial) -> Self {
        self.groups.insert(g.leader.clone(), g);
        self
    }

    pub fn local_time(&self, now: u64) -> u64 {
        (now as i64).saturating_add(self.clock_offset).max(0) as u64
    }

    pub fn customer(&self) -> Option<&CustomerState> {
        match &self.state {
            RoleState::C(c) => Some(c),
            _ => None,
        }
    }

    pub fn provider(&self) -> Option<&ProviderState> {
        match &self.state {
            RoleState::P(p) => Some(p),
            _ => None,
        }
    }

    pub fn authority(&self) -> Option<&MeState> {
        match &self.state {
            RoleState::Me(m) => Some(m),
            _ => None,
        }
    }

    pub(crate) fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub(crate) fn fresh_nonce(&mut self, tag: &str) -> Term {
        Term::random_nonce(tag, &mut self.rng)
    }

    /// Handles one delivered message. Messages addressed elsewhere are
    /// ignored without a trace; unknown or malformed ones are dropped after
    /// the receive event.
    pub fn step(&mut self, msg: &ProtocolMessage, now: u64) -> StepOutput {
        let mut out = StepOutput::default();
        if msg.to != self.id && !msg.is_broadcast() {
            return out;
        }
        let mut ev = TraceEvent::new(now, EventKind::Receive, &self.id, &msg.link, msg.body.clone());
        ev.message = Some(msg.kind);
        out.events.push(ev);
        match self.role() {
            Role::Me => authority::handle(self, msg, now, &mut out),
            Role::P => provider::handle(self, msg, now, &mut out),
            Role::C => customer::handle(self, msg, now, &mut out),
        }
        out
    }

    pub fn on_timer(&mut self, tag: &TimerTag, now: u64) -> StepOutput {
        let mut out = StepOutput::default();
        match self.role() {
            Role::C => customer::on_timer(self, tag, now, &mut out),
            Role::P => provider::on_timer(self, tag, now, &mut out),
            Role::Me => authority::on_timer(self, tag, now, &mut out),
        }
        out
    }

    pub fn command(&mut self, cmd: &Command, now: u64) -> Result<StepOutput, RoleError> {
        let mut out = StepOutput::default();
        match (cmd, self.role()) {
            (Command::Broadcast, Role::P) => provider::broadcast(self, now, &mut out),
            (Command::Join { provider }, Role::C) => customer::start_join(self, provider, now, &mut out)?,
            (Command::Switch { provider }, Role::C) => customer::start_switch(self, provider, now, &mut out)?,
            (Command::CcStart { peer }, Role::C) => customer::cc_start(self, peer, now, &mut out)?,
            _ => return Err(RoleError::WrongRole),
        }
        Ok(out)
    }

    pub(crate) fn send(&mut self, out: &mut StepOutput, now: u64, kind: MsgKind, to: &str, body: Term) {
        let mut ev = TraceEvent::new(now, EventKind::Send, &self.id, to, body.clone());
        ev.message = Some(kind);
        out.events.push(ev);
        out.messages.push(ProtocolMessage::new(kind, &self.id, to, body));
    }

    pub(crate) fn emit(&self, out: &mut StepOutput, now: u64, kind: EventKind, peer: &str, payload: Term) {
        out.events.push(TraceEvent::new(now, kind, &self.id, peer, payload));
    }

    pub(crate) fn alert(&self, out: &mut StepOutput, now: u64, peer: &str, step: &str, reason: &str) {
        let payload = Term::cat([Term::atom(step), Term::id(peer), Term::atom(reason)]);
        self.emit(out, now, EventKind::Alert, peer, payload);
    }

    pub(crate) fn arm(&self, out: &mut StepOutput, tag: TimerTag) {
        out.timers.push(Timer { delay: self.timeout, tag });
    }

    /// Records a request and reports whether an identical one was seen.
    pub(crate) fn note_request(&mut self, customer: &str, request: &Term) -> bool {
        let count = self.seen_requests.entry((customer.to_string(), request.fingerprint())).or_insert(0);
        *count += 1;
        *count > 1
    }
}
