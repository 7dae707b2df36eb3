//! Role state machines for the main authentication entity (ME), service
//! providers (P) and customers (C).
//!
//! Each party is a [`PartyState`]. The simulator feeds it messages through
//! [`PartyState::step`], timer expiries through [`PartyState::on_timer`] and
//! scripted user actions through [`PartyState::command`]. All three are
//! deterministic: the party's random generator is part of its state.
//!
//! # Message bodies
//!
//! | kind | route | body |
//! |---|---|---|
//! | `BroadcastPk` | P → `*` | `Id(ME) ‖ Bytes(pk_ME)` |
//! | `JoinReq` | C → P | `E_ME(C ‖ N0)`, registered: `E_ME(C ‖ Bytes(H(pw)))` |
//! | `ResendJoin` | C → P | `E_ME(C ‖ N0 ‖ N0')` |
//! | `AlertJoin` | C → P | `E_ME(C ‖ N0 ‖ N0' ‖ T_k ‖ Alert)` |
//! | `JoinFwd` | P → ME | the customer's sealed request, unchanged |
//! | `TicketGrant` | ME → P | `u0 ‖ E_G(V_i ‖ N1 ‖ T_k) [‖ Alert]` |
//! | `U0Deliver` | P → C | IA: `u0 = E_C(P ‖ N0+1 ‖ N1 ‖ T_k ‖ T_R ‖ K_S)`; RA-1: `E_S(P ‖ N1 ‖ N0+1)`; RA-2: `u0_new` |
//! | `Limited` | P → C | `u0 ‖ Limited` |
//! | `ChallengeResp` | C → P, C → C | `E_S(C ‖ N1+1)`; between customers under `K_ij` |
//! | `SwitchReq` | C → P | `E_S(C ‖ N0) ‖ T_k ‖ Bytes(h(ME))` |
//! | `ResendSwitch` | C → P | `E_S(C ‖ N0 ‖ N0') ‖ T_k ‖ Bytes(h(ME)) ‖ SwitchReq` |
//! | `SwitchFwd` | P → ME | the switch request, unchanged |
//! | `ReGrant` | ME → P | `u0_new ‖ E_G(V_i ‖ N1 ‖ T_k')`, `u0_new = E_C(T_k' ‖ T_R ‖ K_S' ‖ N1 ‖ N0+1 ‖ P)` |
//! | `Alert` | P → ME | `step ‖ Id(C) ‖ reason` |
//! | `CCInit` | C_i → C_j, C → P, P → ME | `E_S^i(C_i ‖ N0 ‖ K_i^p) ‖ T_k^i`, relayed with the requester's Id appended |
//! | `CCReply` | C_j → C_i, C → P, P → ME | `E_S^j(C_j ‖ N0+1 ‖ N1 ‖ K_j^p) ‖ T_k^j`, relayed likewise |
//! | `PartialKeyResp` | P → C, ME → P | opened contents re-sealed under the requester's `K_S` (ME → P: under `K_G`) |

mod authority;
mod customer;
mod party;
mod provider;

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::algebra::{Digest, Term};

pub use authority::{me_grant, CustomerRecord, MeState};
pub use customer::{derive_cc_key, CcSession, CustomerState};
pub use provider::ProviderState;
pub use party::{
    leader_digest, Command, CustomerConfig, Family, GroupMaterial, PartyState, Pending, ProviderConfig, RoleError,
    RoleState, TimerTag, DEFAULT_MAX_RETRIES,
};

/// Address used for broadcasts.
pub const BROADCAST: &str = "*";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Role {
    Me,
    P,
    C,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum MsgKind {
    BroadcastPk,
    JoinReq,
    JoinFwd,
    TicketGrant,
    U0Deliver,
    ChallengeResp,
    SwitchReq,
    SwitchFwd,
    ReGrant,
    Limited,
    Alert,
    CCInit,
    CCReply,
    PartialKeyResp,
    ResendJoin,
    ResendSwitch,
    AlertJoin,
}

impl MsgKind {
    pub const ALL: [MsgKind; 17] = [
        MsgKind::BroadcastPk,
        MsgKind::JoinReq,
        MsgKind::JoinFwd,
        MsgKind::TicketGrant,
        MsgKind::U0Deliver,
        MsgKind::ChallengeResp,
        MsgKind::SwitchReq,
        MsgKind::SwitchFwd,
        MsgKind::ReGrant,
        MsgKind::Limited,
        MsgKind::Alert,
        MsgKind::CCInit,
        MsgKind::CCReply,
        MsgKind::PartialKeyResp,
        MsgKind::ResendJoin,
        MsgKind::ResendSwitch,
        MsgKind::AlertJoin,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MsgKind::BroadcastPk => "Broadcast_PK",
            MsgKind::JoinReq => "JoinReq",
            MsgKind::JoinFwd => "JoinFwd",
            MsgKind::TicketGrant => "TicketGrant",
            MsgKind::U0Deliver => "U0Deliver",
            MsgKind::ChallengeResp => "ChallengeResp",
            MsgKind::SwitchReq => "SwitchReq",
            MsgKind::SwitchFwd => "SwitchFwd",
            MsgKind::ReGrant => "ReGrant",
            MsgKind::Limited => "Limited",
            MsgKind::Alert => "Alert",
            MsgKind::CCInit => "CCInit",
            MsgKind::CCReply => "CCReply",
            MsgKind::PartialKeyResp => "PartialKeyResp",
            MsgKind::ResendJoin => "ResendJoin",
            MsgKind::ResendSwitch => "ResendSwitch",
            MsgKind::AlertJoin => "AlertJoin",
        }
    }

    pub fn from_name(s: &str) -> Option<MsgKind> {
        MsgKind::ALL.iter().copied().find(|k| k.name() == s)
    }
}

impl fmt::Display for MsgKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProtocolMessage {
    pub kind: MsgKind,
    pub from: String,
    pub to: String,
    pub body: Term,
    /// Physical transmitter, filled in by the network. Honest parties never
    /// base decisions on it; it only appears as the peer of their receive
    /// events.
    pub link: String,
}

impl ProtocolMessage {
    pub fn new(kind: MsgKind, from: &str, to: &str, body: Term) -> Self {
        ProtocolMessage { kind, from: from.into(), to: to.into(), body, link: from.into() }
    }

    pub fn is_broadcast(&self) -> bool {
        self.to == BROADCAST
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum EventKind {
    Send,
    Receive,
    Conf,
    Auth,
    Alert,
    ServiceStart,
    ServiceHalt,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::Send => "send",
            EventKind::Receive => "receive",
            EventKind::Conf => "conf",
            EventKind::Auth => "auth",
            EventKind::Alert => "alert",
            EventKind::ServiceStart => "service_start",
            EventKind::ServiceHalt => "service_halt",
        }
    }

    pub fn from_name(s: &str) -> Option<EventKind> {
        [
            EventKind::Send,
            EventKind::Receive,
            EventKind::Conf,
            EventKind::Auth,
            EventKind::Alert,
            EventKind::ServiceStart,
            EventKind::ServiceHalt,
        ]
        .into_iter()
        .find(|k| k.name() == s)
    }
}

/// One trace record. For `Send` the peer is the addressee, for `Receive`
/// it is the physical transmitter; for the other kinds it is the party the
/// event is about.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TraceEvent {
    pub time: u64,
    pub kind: EventKind,
    pub actor: String,
    pub peer: String,
    /// Message kind for `Send`/`Receive`.
    pub message: Option<MsgKind>,
    pub payload: Term,
}

impl TraceEvent {
    pub fn new(time: u64, kind: EventKind, actor: &str, peer: &str, payload: Term) -> Self {
        TraceEvent { time, kind, actor: actor.into(), peer: peer.into(), message: None, payload }
    }
}

/// Data certified by a `Conf` or `Auth` event. Fields a party does not
/// know stay `None`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Binding {
    pub n0: Option<Term>,
    pub n1: Option<Term>,
    pub ticket: Option<Digest>,
    pub session: Option<Digest>,
}

const UNKNOWN: &str = "_";

impl Binding {
    pub fn to_term(&self) -> Term {
        let slot = |t: &Option<Term>| t.clone().unwrap_or_else(|| Term::atom(UNKNOWN));
        let dslot = |d: &Option<Digest>| d.as_ref().map_or_else(|| Term::atom(UNKNOWN), Term::digest);
        Term::cat([slot(&self.n0), slot(&self.n1), dslot(&self.ticket), dslot(&self.session)])
    }

    pub fn from_term(t: &Term) -> Option<Binding> {
        let known = |t: &Term| (t.as_atom() != Some(UNKNOWN)).then(|| t.clone());
        let digest = |t: &Term| match t.as_atom() {
            Some(UNKNOWN) => Some(None),
            _ => t.as_bytes32().map(|b| Some(Digest(b))),
        };
        match t.as_cat()? {
            [n0, n1, tk, ks] => Some(Binding {
                n0: known(n0),
                n1: known(n1),
                ticket: digest(tk)?,
                session: digest(ks)?,
            }),
            _ => None,
        }
    }

    /// Every field both sides know is equal, and at least one is shared.
    pub fn agrees_with(&self, other: &Binding) -> bool {
        fn cmp<T: PartialEq>(a: &Option<T>, b: &Option<T>, shared: &mut bool) -> bool {
            match (a, b) {
                (Some(x), Some(y)) => {
                    *shared = true;
                    x == y
                }
                _ => true,
            }
        }
        let mut shared = false;
        let ok = cmp(&self.n0, &other.n0, &mut shared)
            & cmp(&self.n1, &other.n1, &mut shared)
            & cmp(&self.ticket, &other.ticket, &mut shared)
            & cmp(&self.session, &other.session, &mut shared);
        ok && shared
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Timer {
    pub delay: u64,
    pub tag: TimerTag,
}

/// Everything one transition produced.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StepOutput {
    pub messages: Vec<ProtocolMessage>,
    pub events: Vec<TraceEvent>,
    pub timers: Vec<Timer>,
}

/// Functional form of [`PartyState::step`].
pub fn step(
    mut state: PartyState,
    incoming: &ProtocolMessage,
    now: u64,
) -> (PartyState, Vec<ProtocolMessage>, Vec<TraceEvent>) {
    let out = state.step(incoming, now);
    (state, out.messages, out.events)
}
